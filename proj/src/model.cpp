#include "thn/model.hpp"

namespace thn {

Model::Model(ModelConfig cfg)
    : cfg_(fixup(cfg)), backbone_(cfg_.backbone), matcher_(cfg_.matcher, cfg_.backbone),
      head_(cfg_.head) {}

ModelConfig Model::fixup(ModelConfig cfg) {
  // the head always consumes the matcher's fused map
  cfg.head.in_channels = cfg.matcher.out_channels;
  return cfg;
}

void Model::init_params(const Rng& rng) {
  params_.clear();
  backbone_.init_params(params_, rng);
  matcher_.init_params(params_, rng);
  head_.init_params(params_, rng);
}

void Model::load_params(const ParamStore& src) {
  if (params_.size() == 0) init_params(Rng(0));
  if (src.size() != params_.size())
    throw UsageError("model: checkpoint holds " + std::to_string(src.size()) +
                     " tensors, the configured model needs " + std::to_string(params_.size()));
  for (auto& [name, t] : params_) {
    const Tensor& s = src.at(name);
    if (!(s.shape() == t.shape()))
      throw UsageError("model: checkpoint shape mismatch for " + name + ": " +
                       s.shape().str() + " vs " + t.shape().str());
    t = s;
  }
}

Model::TrainMaps Model::forward_pair(ad::Tape& tape, ad::Var tpl_image, ad::Var srch_image,
                                     const ParamBinding& p) const {
  const auto tpl_levels = backbone_.extract(tape, tpl_image, p);
  const auto srch_levels = backbone_.extract(tape, srch_image, p);
  const Matcher::MatchOut m = matcher_.match(tape, tpl_levels, srch_levels, p);
  const Head::ClsOut cls = head_.classify(tape, m.fused, p);
  TrainMaps out;
  out.cls_logits = cls.logits;
  out.cls_probs = cls.probs;
  out.reg_raw = head_.regress_raw(tape, m.fused, p);
  out.fused = m.fused;
  return out;
}

std::array<Tensor, 3> Model::template_features(const Tensor& tpl_image) const {
  ad::Tape tape;
  ParamBinding p = bind(tape, /*train=*/false);
  ad::Var img = tape.leaf(tpl_image, false);
  const auto levels = backbone_.extract(tape, img, p);
  const auto reduced = matcher_.reduce_template(tape, levels, p);
  std::array<Tensor, 3> out;
  for (int l = 0; l < 3; ++l) out[static_cast<size_t>(l)] = tape.value(reduced[static_cast<size_t>(l)]);
  return out;
}

Model::SearchOut Model::forward_search(const std::array<Tensor, 3>& tpl_feats,
                                       const Tensor& srch_image) const {
  ad::Tape tape;
  ParamBinding p = bind(tape, /*train=*/false);
  ad::Var img = tape.leaf(srch_image, false);
  const auto srch_levels = backbone_.extract(tape, img, p);
  std::array<ad::Var, 3> tpl;
  for (int l = 0; l < 3; ++l) tpl[static_cast<size_t>(l)] = tape.leaf(tpl_feats[static_cast<size_t>(l)], false);
  const Matcher::MatchOut m = matcher_.match_reduced(tape, tpl, srch_levels, p);
  const Head::ClsOut cls = head_.classify(tape, m.fused, p);
  ad::Var offsets = head_.regress(tape, m.fused, p);
  SearchOut out;
  out.probs = tape.value(cls.probs);
  out.offsets = tape.value(offsets);
  out.fused = tape.value(m.fused);
  return out;
}

}  // namespace thn
