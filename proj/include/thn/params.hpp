#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "thn/tape.hpp"
#include "thn/tensor.hpp"

namespace thn {

// Named parameter tensors, ordered by name so every traversal (updates,
// serialization, gradient reduction) is deterministic.
class ParamStore {
 public:
  void insert(const std::string& name, Tensor t) {
    auto [it, ok] = params_.emplace(name, std::move(t));
    if (!ok) throw UsageError("param store: duplicate parameter " + name);
  }
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("param store: unknown parameter " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("param store: unknown parameter " + name);
    return it->second;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }
  void clear() { params_.clear(); }

 private:
  std::map<std::string, Tensor> params_;
};

// Leaves for every parameter on one tape. Frozen parameters are recorded
// without gradient so backward skips them.
struct ParamBinding {
  ad::Tape* tape = nullptr;
  std::map<std::string, ad::Var> vars;

  ad::Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw UsageError("param binding: unknown parameter " + name);
    return it->second;
  }
};

inline ParamBinding bind_params(ad::Tape& tape, const ParamStore& store,
                                const std::set<std::string>& frozen, bool train) {
  ParamBinding b;
  b.tape = &tape;
  for (const auto& [name, tensor] : store) {
    const bool rg = train && frozen.count(name) == 0;
    b.vars.emplace(name, tape.leaf(tensor, rg));
  }
  return b;
}

}  // namespace thn
