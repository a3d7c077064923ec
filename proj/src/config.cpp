#include "thn/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace thn {

namespace {

struct KeyDef {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;  // runtime-only knobs stay out of the config hash
};

int parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' expects on/off, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<KeyDef> build_registry() {
  std::vector<KeyDef> defs;
  auto field = [&](const char* sec, const char* key, auto getptr, bool hashed = true) {
    defs.push_back(KeyDef{
        sec, key,
        [getptr, k = std::string(key)](RunConfig& c, const std::string& v) {
          auto* p = getptr(c);
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, int>)
            *p = parse_int(v, k);
          else if constexpr (std::is_same_v<T, double>)
            *p = parse_double(v, k);
          else if constexpr (std::is_same_v<T, bool>)
            *p = parse_bool(v, k);
        },
        [getptr](const RunConfig& c) {
          auto* p = getptr(const_cast<RunConfig&>(c));
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, int>)
            return std::to_string(*p);
          else if constexpr (std::is_same_v<T, double>)
            return fmt_double(*p);
          else if constexpr (std::is_same_v<T, bool>)
            return std::string(*p ? "on" : "off");
        },
        hashed});
  };

  // backbone
  field("backbone", "stem_channels", [](RunConfig& c) { return &c.backbone.stem_channels; });
  defs.push_back({"backbone", "block_channels",
                  [](RunConfig& c, const std::string& v) {
                    std::stringstream ss(v);
                    std::string tok;
                    std::vector<int> vals;
                    while (std::getline(ss, tok, ','))
                      vals.push_back(parse_int(tok, "block_channels"));
                    if (vals.size() != 3)
                      throw ConfigError("config: block_channels expects 3 values, got '" + v + "'");
                    for (int i = 0; i < 3; ++i) c.backbone.block_channels[static_cast<size_t>(i)] = vals[static_cast<size_t>(i)];
                  },
                  [](const RunConfig& c) {
                    const auto& b = c.backbone.block_channels;
                    return std::to_string(b[0]) + "," + std::to_string(b[1]) + "," +
                           std::to_string(b[2]);
                  }});
  field("backbone", "total_stride", [](RunConfig& c) { return &c.backbone.total_stride; });
  field("backbone", "frozen_stages", [](RunConfig& c) { return &c.backbone.frozen_stages; });

  // matcher
  field("matcher", "out_channels", [](RunConfig& c) { return &c.matcher.out_channels; });
  field("matcher", "squeeze_ratio", [](RunConfig& c) { return &c.matcher.squeeze_ratio; });
  field("matcher", "thm", [](RunConfig& c) { return &c.matcher.thm; });
  field("matcher", "share_branch_thm", [](RunConfig& c) { return &c.matcher.share_branch_thm; });
  field("matcher", "template_crop", [](RunConfig& c) { return &c.matcher.template_crop; });

  // head
  field("head", "mid_channels", [](RunConfig& c) { return &c.head.mid_channels; });
  field("head", "stride_scale", [](RunConfig& c) { return &c.head.stride_scale; });
  field("head", "window_influence", [](RunConfig& c) { return &c.penalty.window_influence; });
  field("head", "penalty_k", [](RunConfig& c) { return &c.penalty.penalty_k; });
  field("head", "size_lr", [](RunConfig& c) { return &c.penalty.size_lr; });

  // losses
  field("losses", "corrective", [](RunConfig& c) { return &c.loss.corrective; });
  field("losses", "coefficient_grad", [](RunConfig& c) { return &c.loss.coefficient_grad; });
  defs.push_back({"losses", "normalizer",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "n_plus_m")
                      c.loss.normalizer = LossNormalizer::N_PLUS_M;
                    else if (v == "n")
                      c.loss.normalizer = LossNormalizer::N;
                    else
                      throw ConfigError("config: normalizer expects n_plus_m|n, got '" + v + "'");
                  },
                  [](const RunConfig& c) {
                    return std::string(c.loss.normalizer == LossNormalizer::N_PLUS_M ? "n_plus_m"
                                                                                     : "n");
                  }});
  field("losses", "smooth_l1_beta", [](RunConfig& c) { return &c.loss.beta; });

  // data
  field("data", "template_size", [](RunConfig& c) { return &c.crop.template_size; });
  field("data", "search_size_train", [](RunConfig& c) { return &c.crop.search_size_train; });
  field("data", "search_size_infer", [](RunConfig& c) { return &c.crop.search_size_infer; });
  field("data", "aug_shift", [](RunConfig& c) { return &c.crop.aug_shift; });
  field("data", "aug_scale", [](RunConfig& c) { return &c.crop.aug_scale; });
  field("data", "pos_axis_div", [](RunConfig& c) { return &c.assign.pos_axis_div; });
  field("data", "neg_axis_div", [](RunConfig& c) { return &c.assign.neg_axis_div; });

  // synth
  field("synth", "sequences", [](RunConfig& c) { return &c.synth_sequences; });
  field("synth", "frames", [](RunConfig& c) { return &c.synth.frames; });
  field("synth", "width", [](RunConfig& c) { return &c.synth.width; });
  field("synth", "height", [](RunConfig& c) { return &c.synth.height; });
  field("synth", "size_min", [](RunConfig& c) { return &c.synth.size_min; });
  field("synth", "size_max", [](RunConfig& c) { return &c.synth.size_max; });
  field("synth", "speed_max", [](RunConfig& c) { return &c.synth.speed_max; });
  field("synth", "max_distractors", [](RunConfig& c) { return &c.synth.max_distractors; });
  field("synth", "p_distractor", [](RunConfig& c) { return &c.synth.p_distractor; });
  field("synth", "p_occlusion", [](RunConfig& c) { return &c.synth.p_occlusion; });
  field("synth", "p_scale_drift", [](RunConfig& c) { return &c.synth.p_scale_drift; });
  field("synth", "scale_drift", [](RunConfig& c) { return &c.synth.scale_drift; });
  field("synth", "noise", [](RunConfig& c) { return &c.synth.noise; });

  // trainer
  field("trainer", "epochs", [](RunConfig& c) { return &c.trainer.epochs; });
  field("trainer", "warmup_epochs", [](RunConfig& c) { return &c.trainer.warmup_epochs; });
  field("trainer", "lr_start", [](RunConfig& c) { return &c.trainer.lr_start; });
  field("trainer", "lr_peak", [](RunConfig& c) { return &c.trainer.lr_peak; });
  field("trainer", "lr_end", [](RunConfig& c) { return &c.trainer.lr_end; });
  field("trainer", "momentum", [](RunConfig& c) { return &c.trainer.momentum; });
  field("trainer", "batch", [](RunConfig& c) { return &c.trainer.batch; });
  field("trainer", "weight_decay", [](RunConfig& c) { return &c.trainer.weight_decay; });
  field("trainer", "clip_norm", [](RunConfig& c) { return &c.trainer.clip_norm; });
  field("trainer", "pairs_per_epoch", [](RunConfig& c) { return &c.trainer.pairs_per_epoch; });
  field("trainer", "pair_max_gap", [](RunConfig& c) { return &c.trainer.pair_max_gap; });
  field("trainer", "neg_pair_rate", [](RunConfig& c) { return &c.trainer.neg_pair_rate; });
  field("trainer", "max_pos", [](RunConfig& c) { return &c.trainer.max_pos; });
  field("trainer", "max_neg", [](RunConfig& c) { return &c.trainer.max_neg; });
  field("trainer", "threads", [](RunConfig& c) { return &c.trainer.threads; }, false);
  field("trainer", "deterministic", [](RunConfig& c) { return &c.trainer.deterministic; }, false);

  // eval
  field("eval", "reinit_gap", [](RunConfig& c) { return &c.eval.reinit_gap; });
  field("eval", "burn_in", [](RunConfig& c) { return &c.eval.burn_in; });
  field("eval", "eao_k", [](RunConfig& c) { return &c.eval.eao_k; });

  return defs;
}

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> defs = build_registry();
  return defs;
}

const KeyDef* find_key(const std::string& section, const std::string& key) {
  for (const auto& d : registry())
    if (d.section == section && d.key == key) return &d;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.backbone = backbone;
  mc.matcher = matcher;
  mc.head = head;
  return mc;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& d : registry())
    out += d.section + "." + d.key + " = " + d.get(*this) + "\n";
  return out;
}

std::uint32_t RunConfig::hash() const {
  std::uint32_t h = 2166136261u;
  for (const auto& d : registry()) {
    if (!d.hashed) continue;
    const std::string line = d.section + "." + d.key + "=" + d.get(*this) + ";";
    for (char c : line) {
      h ^= static_cast<unsigned char>(c);
      h *= 16777619u;
    }
  }
  return h;
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config: malformed section header at line " + std::to_string(lineno));
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key=value at line " + std::to_string(lineno) + ": '" +
                        t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    const KeyDef* def = find_key(section, key);
    if (!def)
      throw ConfigError("config: unknown key '" + section + "." + key + "' at line " +
                        std::to_string(lineno));
    def->set(cfg, val);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw UsageError("override must be section.key=value, got '" + assignment + "'");
  const std::string path = trim(assignment.substr(0, eq));
  const std::string val = trim(assignment.substr(eq + 1));
  const size_t dot = path.find('.');
  if (dot == std::string::npos)
    throw UsageError("override must be section.key=value, got '" + assignment + "'");
  const KeyDef* def = find_key(path.substr(0, dot), path.substr(dot + 1));
  if (!def) throw ConfigError("config: unknown key '" + path + "'");
  def->set(cfg, val);
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("config: cannot write " + path);
  std::string section;
  for (const auto& d : registry()) {
    if (d.section != section) {
      section = d.section;
      os << "[" << section << "]\n";
    }
    os << d.key << " = " << d.get(cfg) << "\n";
  }
}

}  // namespace thn
