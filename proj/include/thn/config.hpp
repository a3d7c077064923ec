#pragma once

#include <cstdint>
#include <string>

#include "thn/data.hpp"
#include "thn/eval.hpp"
#include "thn/model.hpp"
#include "thn/trainer.hpp"

namespace thn {

// Whole-run configuration. On disk this is a sectioned key=value file;
// every key has a default, unknown keys are rejected by name.
struct RunConfig {
  BackboneConfig backbone;
  MatcherConfig matcher;
  HeadConfig head;        // mid_channels, stride_scale under [head]
  PenaltyConfig penalty;  // window_influence, penalty_k, size_lr under [head]
  LossOptions loss;       // [losses]
  CropConfig crop;        // [data]
  AssignConfig assign;    // [data]
  SynthSpec synth;        // [synth]
  int synth_sequences = 20;
  TrainConfig trainer;  // [trainer]
  VotOptions eval;      // [eval]

  ModelConfig model_config() const;
  // Canonical text form: every key, sorted, one per line.
  std::string canonical() const;
  // FNV-1a over the canonical form, minus runtime-only knobs. Stored in
  // checkpoints to refuse mismatched configs.
  std::uint32_t hash() const;
};

RunConfig load_config(const std::string& path);  // empty path -> defaults
void apply_override(RunConfig& cfg, const std::string& assignment);  // "sec.key=value"
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace thn
