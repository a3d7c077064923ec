#pragma once

#include <array>
#include <memory>

#include "thn/backbone.hpp"
#include "thn/head.hpp"
#include "thn/matcher.hpp"
#include "thn/params.hpp"

namespace thn {

struct ModelConfig {
  BackboneConfig backbone;
  MatcherConfig matcher;
  HeadConfig head;
};

// The full tracker network: siamese feature extraction, similarity matching
// and the two-branch head, over one shared parameter store.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return backbone_; }
  const Matcher& matcher() const { return matcher_; }
  const Head& head() const { return head_; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void init_params(const Rng& rng);
  // Replaces the store with `src`; the name sets and shapes must agree.
  void load_params(const ParamStore& src);
  std::set<std::string> freeze_mask() const { return backbone_.freeze_mask(); }

  ParamBinding bind(ad::Tape& tape, bool train) const {
    return bind_params(tape, params_, train ? freeze_mask() : std::set<std::string>{}, train);
  }

  struct TrainMaps {
    ad::Var cls_logits;
    ad::Var cls_probs;
    ad::Var reg_raw;
    ad::Var fused;
  };
  // Full training-mode graph for one (template, search) pair batch.
  TrainMaps forward_pair(ad::Tape& tape, ad::Var tpl_image, ad::Var srch_image,
                         const ParamBinding& p) const;

  // Inference: template features are extracted once per sequence...
  std::array<Tensor, 3> template_features(const Tensor& tpl_image) const;

  struct SearchOut {
    Tensor probs;    // (1,2,h,w)
    Tensor offsets;  // (1,4,h,w), pixels
    Tensor fused;    // (1,out_channels,h,w)
  };
  // ...and correlated against each frame's search crop.
  SearchOut forward_search(const std::array<Tensor, 3>& tpl_feats,
                           const Tensor& srch_image) const;

  // Response-map extent for a square search input.
  int response_size(int search_size) const {
    return backbone_.feature_size(search_size) - cfg_.matcher.template_crop + 1;
  }

 private:
  static ModelConfig fixup(ModelConfig cfg);

  ModelConfig cfg_;
  Backbone backbone_;
  Matcher matcher_;
  Head head_;
  ParamStore params_;
};

}  // namespace thn
