#pragma once

#include <array>
#include <string>

#include "thn/backbone.hpp"
#include "thn/params.hpp"
#include "thn/tape.hpp"

namespace thn {

// Similarity matching module: per-level channel reduction (attention-gated
// when thm is on, a plain 1x1 conv otherwise), template center crop,
// depth-wise cross correlation, and softmax-weighted level fusion.
struct MatcherConfig {
  int out_channels = 64;
  int squeeze_ratio = 8;     // squeeze conv compresses channels to c_in/ratio
  bool thm = true;
  bool share_branch_thm = false;  // one reduction shared by both branches
  int template_crop = 7;
};

enum class Branch { TEMPLATE, SEARCH };

class Matcher {
 public:
  Matcher(MatcherConfig cfg, const BackboneConfig& backbone);

  const MatcherConfig& config() const { return cfg_; }

  void init_params(ParamStore& store, const Rng& rng) const;

  // Attention weights pi(f): sigmoid(excite(relu(squeeze(avgpool(f))))),
  // shape (n, out_channels, 1, 1), every entry strictly inside (0,1).
  ad::Var thm_weights(ad::Tape& t, ad::Var f, int level, Branch br,
                      const ParamBinding& p) const;

  // Channel reduction W(f) = pi(f) * conv(f). With thm off this is conv(f).
  ad::Var thm_reduce(ad::Tape& t, ad::Var f, int level, Branch br,
                     const ParamBinding& p) const;

  // Center-crops each template level and reduces it; result feeds dw_xcorr.
  std::array<ad::Var, 3> reduce_template(ad::Tape& t, const std::array<ad::Var, 3>& levels,
                                         const ParamBinding& p) const;

  struct MatchOut {
    std::array<ad::Var, 3> levels;
    ad::Var fused;
  };

  MatchOut match_reduced(ad::Tape& t, const std::array<ad::Var, 3>& tpl_reduced,
                         const std::array<ad::Var, 3>& srch_levels,
                         const ParamBinding& p) const;

  MatchOut match(ad::Tape& t, const std::array<ad::Var, 3>& tpl_levels,
                 const std::array<ad::Var, 3>& srch_levels, const ParamBinding& p) const;

  std::string param_prefix(int level, Branch br) const;

 private:
  MatcherConfig cfg_;
  std::array<int, 3> in_channels_;
};

}  // namespace thn
