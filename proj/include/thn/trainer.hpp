#pragma once

#include <map>
#include <string>
#include <vector>

#include "thn/data.hpp"
#include "thn/losses.hpp"
#include "thn/model.hpp"

namespace thn {

struct TrainConfig {
  int epochs = 20;
  int warmup_epochs = 5;
  double lr_start = 0.001;
  double lr_peak = 0.005;
  double lr_end = 0.00005;
  double momentum = 0.9;
  int batch = 8;
  double weight_decay = 0.0001;  // conv weights only
  double clip_norm = 10.0;       // global gradient norm
  int pairs_per_epoch = 64;
  int pair_max_gap = 20;
  double neg_pair_rate = 0.10;
  int max_pos = 16;  // per-sample label caps, -1 disables
  int max_neg = 48;
  int threads = 0;            // 0: THN_THREADS / hardware
  bool deterministic = false;  // forces serial sample processing
};

// Warmup is linear lr_start -> lr_peak; the remaining epochs decay
// geometrically lr_peak -> lr_end. Continuous at the boundary.
double lr_at(int epoch, const TrainConfig& cfg);

// v <- momentum * v + g;  p <- p - lr * v. Frozen names stay untouched.
void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
              ParamStore& momentum_buffers, double lr, double momentum,
              const std::set<std::string>& frozen);

struct TrainResult {
  int steps = 0;
  int last_epoch = -1;
  std::string final_checkpoint;
  std::vector<LossReport> reports;  // one row per step, in order
};

// SGD training over sampled (template, search) pairs. Deterministic under a
// fixed seed: sampling state derives from (seed, epoch), per-sample work runs
// on independent tapes and gradients reduce in sample order.
class Trainer {
 public:
  Trainer(Model& model, const std::vector<SequenceAnnotation>& dataset, TrainConfig cfg,
          CropConfig crop, AssignConfig assign, LossOptions loss, std::uint64_t seed,
          std::uint32_t config_hash);

  // resume: checkpoint path to continue from (training restarts at the next
  // epoch). stop_after_epoch: stop once that epoch completes (for resume
  // testing); -1 trains to cfg.epochs.
  TrainResult run(const std::string& out_dir, const std::string& resume = "",
                  int stop_after_epoch = -1);

 private:
  struct PairSample {
    int seq_t = 0, frame_t = 0;
    int seq_s = 0, frame_s = 0;
    CropJitter jitter;
    bool negative = false;
    std::uint64_t label_seed = 0;
  };

  struct SampleOut {
    std::vector<Tensor> grads;  // aligned with trainable_; empty if absent
    LossReport report;
  };

  std::vector<PairSample> sample_epoch(int epoch) const;
  SampleOut process_sample(const PairSample& s) const;

  Model& model_;
  const std::vector<SequenceAnnotation>& dataset_;
  TrainConfig cfg_;
  CropConfig crop_;
  AssignConfig assign_;
  LossOptions loss_;
  Rng root_;
  std::uint32_t config_hash_;
  std::set<std::string> frozen_;
  std::vector<std::string> trainable_;
  std::vector<std::vector<Image>> frames_;  // preloaded per sequence
  MapGeometry train_geom_;
};

}  // namespace thn
