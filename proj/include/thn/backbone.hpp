#pragma once

#include <array>
#include <set>
#include <string>

#include "thn/params.hpp"
#include "thn/rng.hpp"
#include "thn/tape.hpp"

namespace thn {

// Shared-weight feature extractor: a 7x7 stride-2 stem followed by four
// two-conv blocks with first-conv strides 2,2,1,1 (total stride 8). The last
// three blocks emit the feature pyramid, so all pyramid levels share spatial
// size: 127 -> 15, 255 -> 31, 511 -> 63.
struct BackboneConfig {
  int stem_channels = 32;
  std::array<int, 3> block_channels{64, 128, 256};  // pyramid levels
  int total_stride = 8;  // fixed by the conv stack; validated on construction
  int frozen_stages = 2;  // 0 none, 1 stem, 2 stem + block1, up to 5
};

class Backbone {
 public:
  explicit Backbone(BackboneConfig cfg);

  const BackboneConfig& config() const { return cfg_; }

  // Registers backbone.* parameter tensors, Kaiming-initialized from
  // name-derived streams of `rng`.
  void init_params(ParamStore& store, const Rng& rng) const;

  // Three pyramid levels for a (n,3,H,W) image batch. Template and search
  // images go through the identical function of the identical parameters.
  std::array<ad::Var, 3> extract(ad::Tape& tape, ad::Var image,
                                 const ParamBinding& params) const;

  // Parameter names excluded from optimizer updates.
  std::set<std::string> freeze_mask() const;

  // Spatial extent of every pyramid level for a square input.
  int feature_size(int input_size) const;

 private:
  BackboneConfig cfg_;
};

}  // namespace thn
