#include "thn/backbone.hpp"

#include <cmath>

namespace thn {

namespace {

Tensor kaiming_conv(int c_out, int c_in, int k, Rng rng) {
  Tensor w(Shape{c_out, c_in, k, k});
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.gaussian() * std_dev;
  return w;
}

void add_conv(ParamStore& store, const Rng& rng, const std::string& name, int c_out,
              int c_in, int k, double weight_gain = 1.0) {
  Tensor w = kaiming_conv(c_out, c_in, k, rng.stream("init." + name + ".weight"));
  if (weight_gain != 1.0)
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] *= weight_gain;
  store.insert(name + ".weight", std::move(w));
  store.insert(name + ".bias", Tensor(Shape{c_out, 1, 1, 1}, 0.0));
}

ad::Var conv_relu(ad::Tape& t, ad::Var x, const ParamBinding& p, const std::string& name,
                  ad::ConvSpec spec) {
  ad::Var y = t.conv2d(x, p.at(name + ".weight"), p.at(name + ".bias"), spec);
  return t.relu(y);
}

int out_extent(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

}  // namespace

Backbone::Backbone(BackboneConfig cfg) : cfg_(cfg) {
  if (cfg_.total_stride != 8)
    throw ConfigError("backbone: the conv stack realizes total stride 8; got " +
                      std::to_string(cfg_.total_stride));
  if (cfg_.stem_channels < 1) throw ConfigError("backbone: stem_channels must be >= 1");
  for (int c : cfg_.block_channels)
    if (c < 1) throw ConfigError("backbone: block channel counts must be >= 1");
  if (cfg_.frozen_stages < 0 || cfg_.frozen_stages > 5)
    throw ConfigError("backbone: frozen_stages must be in [0,5]");
}

void Backbone::init_params(ParamStore& store, const Rng& rng) const {
  const int cs = cfg_.stem_channels;
  const auto& bc = cfg_.block_channels;
  add_conv(store, rng, "backbone.stem.conv", cs, 3, 7);
  add_conv(store, rng, "backbone.block1.conv1", cs, cs, 3);
  add_conv(store, rng, "backbone.block1.conv2", cs, cs, 3);
  add_conv(store, rng, "backbone.block2.conv1", bc[0], cs, 3);
  add_conv(store, rng, "backbone.block2.conv2", bc[0], bc[0], 3);
  add_conv(store, rng, "backbone.block3.conv1", bc[1], bc[0], 3);
  add_conv(store, rng, "backbone.block3.conv2", bc[1], bc[1], 3);
  add_conv(store, rng, "backbone.block4.conv1", bc[2], bc[1], 3);
  add_conv(store, rng, "backbone.block4.conv2", bc[2], bc[2], 3);
}

std::array<ad::Var, 3> Backbone::extract(ad::Tape& t, ad::Var image,
                                         const ParamBinding& p) const {
  const Shape is = t.value(image).shape();
  if (is.c != 3)
    throw DimensionError("backbone: expected 3-channel image, got " + is.str());

  ad::Var x = conv_relu(t, image, p, "backbone.stem.conv", {.stride = 2, .pad = 2});
  x = conv_relu(t, x, p, "backbone.block1.conv1", {.stride = 2, .pad = 0});
  x = conv_relu(t, x, p, "backbone.block1.conv2", {.stride = 1, .pad = 1});
  x = conv_relu(t, x, p, "backbone.block2.conv1", {.stride = 2, .pad = 0});
  ad::Var l0 = conv_relu(t, x, p, "backbone.block2.conv2", {.stride = 1, .pad = 1});
  ad::Var l1 = conv_relu(t, l0, p, "backbone.block3.conv1", {.stride = 1, .pad = 1});
  l1 = conv_relu(t, l1, p, "backbone.block3.conv2", {.stride = 1, .pad = 1});
  ad::Var l2 = conv_relu(t, l1, p, "backbone.block4.conv1", {.stride = 1, .pad = 1});
  l2 = conv_relu(t, l2, p, "backbone.block4.conv2", {.stride = 1, .pad = 1});
  return {l0, l1, l2};
}

std::set<std::string> Backbone::freeze_mask() const {
  static const char* stage_prefix[5] = {"backbone.stem.", "backbone.block1.",
                                        "backbone.block2.", "backbone.block3.",
                                        "backbone.block4."};
  std::set<std::string> frozen;
  for (int stage = 0; stage < cfg_.frozen_stages; ++stage) {
    const std::string prefix = stage_prefix[stage];
    if (stage == 0) {
      frozen.insert(prefix + "conv.weight");
      frozen.insert(prefix + "conv.bias");
    } else {
      frozen.insert(prefix + "conv1.weight");
      frozen.insert(prefix + "conv1.bias");
      frozen.insert(prefix + "conv2.weight");
      frozen.insert(prefix + "conv2.bias");
    }
  }
  return frozen;
}

int Backbone::feature_size(int input_size) const {
  int x = out_extent(input_size, 7, 2, 2);  // stem
  x = out_extent(x, 3, 2, 0);               // block1
  x = out_extent(x, 3, 2, 0);               // block2
  return x;                                 // blocks 3 and 4 preserve size
}

}  // namespace thn
