#pragma once

#include <array>
#include <functional>
#include <vector>

#include "thn/tensor.hpp"

namespace thn::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; only meaningful together with
// the tape that produced it.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

// Reverse-mode tape over fp64 tensors. Ops snapshot their outputs as new
// nodes and never mutate inputs; appending order is a topological order, so
// backward is a single reverse sweep that visits each reached node once.
// One graph is single-threaded; distinct tapes are independent.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);

  Var conv2d(Var input, Var weight, Var bias, ConvSpec spec = {});
  Var relu(Var x);
  Var sigmoid(Var x);
  Var exp_scale(Var x, double scale);  // scale * exp(x), elementwise
  Var add(Var a, Var b);               // equal shapes, or b is (n,c,1,1)
  Var mul(Var a, Var b);               // equal shapes, or b is (n,c,1,1)
  Var scale(Var x, double k);
  Var center_crop(Var x, int size);
  Var global_avg_pool(Var x);
  Var softmax2(Var x);  // channelwise softmax over exactly 2 channels
  Var dw_xcorr(Var tpl, Var srch);
  // softmax(alpha)-weighted sum of three equally shaped maps; alpha is (1,3,1,1)
  Var fuse3(const std::array<Var, 3>& levels, Var alpha);
  Var sum(Var x);  // reduce to a (1,1,1,1) scalar

  // Escape hatch for fused domain ops (and for tests that need a node with a
  // hand-written backward). `backprop` receives the tape and the node's own
  // output gradient, and is responsible for accumulating into its inputs.
  Var custom(Tensor value, const std::vector<Var>& inputs,
             std::function<void(Tape&, const Tensor& gout)> backprop);

  void backward(Var scalar_output);

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool has_grad(Var v) const { return !node(v).grad.empty(); }
  const Tensor& grad(Var v) const;
  // Gradient accumulation buffer, allocated on first use. For use by
  // backprop closures only.
  Tensor& grad_buf(Var v);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::function<void(Tape&, const Tensor&)> backprop;  // empty for leaves
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Tensor value, bool requires_grad,
           std::function<void(Tape&, const Tensor&)> backprop);
  void check_same_tape(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace thn::ad
