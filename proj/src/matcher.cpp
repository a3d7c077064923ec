#include "thn/matcher.hpp"

#include <cmath>

namespace thn {

namespace {

Tensor kaiming_conv1x1(int c_out, int c_in, Rng rng) {
  Tensor w(Shape{c_out, c_in, 1, 1});
  const double std_dev = std::sqrt(2.0 / static_cast<double>(c_in));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.gaussian() * std_dev;
  return w;
}

void add_1x1(ParamStore& store, const Rng& rng, const std::string& name, int c_out, int c_in) {
  store.insert(name + ".weight", kaiming_conv1x1(c_out, c_in, rng.stream("init." + name + ".weight")));
  store.insert(name + ".bias", Tensor(Shape{c_out, 1, 1, 1}, 0.0));
}

}  // namespace

Matcher::Matcher(MatcherConfig cfg, const BackboneConfig& backbone)
    : cfg_(cfg), in_channels_(backbone.block_channels) {
  if (cfg_.out_channels < 1) throw ConfigError("matcher: out_channels must be >= 1");
  if (cfg_.squeeze_ratio < 1) throw ConfigError("matcher: squeeze_ratio must be >= 1");
  if (cfg_.template_crop < 1) throw ConfigError("matcher: template_crop must be >= 1");
}

std::string Matcher::param_prefix(int level, Branch br) const {
  const char* b = cfg_.share_branch_thm ? "shared" : (br == Branch::TEMPLATE ? "t" : "s");
  return "matcher.l" + std::to_string(level) + "." + b;
}

void Matcher::init_params(ParamStore& store, const Rng& rng) const {
  const int n_branches = cfg_.share_branch_thm ? 1 : 2;
  for (int level = 0; level < 3; ++level) {
    const int c_in = in_channels_[static_cast<size_t>(level)];
    const int c_sq = std::max(1, c_in / cfg_.squeeze_ratio);
    for (int b = 0; b < n_branches; ++b) {
      const Branch br = b == 0 ? Branch::TEMPLATE : Branch::SEARCH;
      const std::string prefix = param_prefix(level, br);
      add_1x1(store, rng, prefix + ".reduce", cfg_.out_channels, c_in);
      if (cfg_.thm) {
        add_1x1(store, rng, prefix + ".squeeze", c_sq, c_in);
        add_1x1(store, rng, prefix + ".excite", cfg_.out_channels, c_sq);
        // gates open near sigmoid(2): attention starts as a gentle, nearly
        // uniform scaling and learns to modulate, instead of risking an
        // early saturation at zero that backward cannot escape
        Tensor& ew = store.at(prefix + ".excite.weight");
        for (std::int64_t i = 0; i < ew.size(); ++i) ew[i] *= 0.1;
        Tensor& eb = store.at(prefix + ".excite.bias");
        for (std::int64_t i = 0; i < eb.size(); ++i) eb[i] = 2.0;
      }
    }
  }
  store.insert("matcher.fusion.alpha", Tensor(Shape{1, 3, 1, 1}, 0.0));
}

ad::Var Matcher::thm_weights(ad::Tape& t, ad::Var f, int level, Branch br,
                             const ParamBinding& p) const {
  if (!cfg_.thm) throw UsageError("matcher: thm_weights called with thm disabled");
  const Shape fs = t.value(f).shape();
  const int c_in = in_channels_[static_cast<size_t>(level)];
  if (fs.c != c_in)
    throw DimensionError("matcher: level " + std::to_string(level) + " expects " +
                         std::to_string(c_in) + " channels, got " + fs.str());
  const std::string prefix = param_prefix(level, br);
  ad::Var g = t.global_avg_pool(f);
  g = t.conv2d(g, p.at(prefix + ".squeeze.weight"), p.at(prefix + ".squeeze.bias"));
  g = t.relu(g);
  g = t.conv2d(g, p.at(prefix + ".excite.weight"), p.at(prefix + ".excite.bias"));
  return t.sigmoid(g);
}

ad::Var Matcher::thm_reduce(ad::Tape& t, ad::Var f, int level, Branch br,
                            const ParamBinding& p) const {
  const Shape fs = t.value(f).shape();
  const int c_in = in_channels_[static_cast<size_t>(level)];
  if (fs.c != c_in)
    throw DimensionError("matcher: level " + std::to_string(level) + " expects " +
                         std::to_string(c_in) + " channels, got " + fs.str());
  const std::string prefix = param_prefix(level, br);
  ad::Var reduced = t.conv2d(f, p.at(prefix + ".reduce.weight"), p.at(prefix + ".reduce.bias"));
  if (!cfg_.thm) return reduced;
  return t.mul(reduced, thm_weights(t, f, level, br, p));
}

std::array<ad::Var, 3> Matcher::reduce_template(ad::Tape& t,
                                                const std::array<ad::Var, 3>& levels,
                                                const ParamBinding& p) const {
  std::array<ad::Var, 3> out;
  for (int l = 0; l < 3; ++l) {
    ad::Var cropped = t.center_crop(levels[static_cast<size_t>(l)], cfg_.template_crop);
    out[static_cast<size_t>(l)] = thm_reduce(t, cropped, l, Branch::TEMPLATE, p);
  }
  return out;
}

Matcher::MatchOut Matcher::match_reduced(ad::Tape& t,
                                         const std::array<ad::Var, 3>& tpl_reduced,
                                         const std::array<ad::Var, 3>& srch_levels,
                                         const ParamBinding& p) const {
  MatchOut out;
  for (int l = 0; l < 3; ++l) {
    ad::Var s = thm_reduce(t, srch_levels[static_cast<size_t>(l)], l, Branch::SEARCH, p);
    out.levels[static_cast<size_t>(l)] = t.dw_xcorr(tpl_reduced[static_cast<size_t>(l)], s);
  }
  out.fused = t.fuse3(out.levels, p.at("matcher.fusion.alpha"));
  return out;
}

Matcher::MatchOut Matcher::match(ad::Tape& t, const std::array<ad::Var, 3>& tpl_levels,
                                 const std::array<ad::Var, 3>& srch_levels,
                                 const ParamBinding& p) const {
  return match_reduced(t, reduce_template(t, tpl_levels, p), srch_levels, p);
}

}  // namespace thn
