#include "thn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "thn/checkpoint.hpp"
#include "thn/parallel.hpp"

namespace fs = std::filesystem;

namespace thn {

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw UsageError("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                     std::to_string(cfg.epochs) + ")");
  if (epoch < cfg.warmup_epochs) {
    if (cfg.warmup_epochs == 1) return cfg.lr_peak;
    const double t = static_cast<double>(epoch) / (cfg.warmup_epochs - 1);
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * t;
  }
  const int decay_epochs = cfg.epochs - cfg.warmup_epochs;
  if (decay_epochs <= 1) return cfg.lr_end;
  const double t = static_cast<double>(epoch - cfg.warmup_epochs) / (decay_epochs - 1);
  return cfg.lr_peak * std::pow(cfg.lr_end / cfg.lr_peak, t);
}

void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
              ParamStore& momentum_buffers, double lr, double momentum,
              const std::set<std::string>& frozen) {
  for (auto& [name, p] : params) {
    if (frozen.count(name)) continue;
    auto it = grads.find(name);
    if (it == grads.end())
      throw TrainingError("sgd_step: missing gradient for unfrozen parameter " + name);
    const Tensor& g = it->second;
    if (!(g.shape() == p.shape()))
      throw TrainingError("sgd_step: gradient shape mismatch for " + name);
    Tensor& v = momentum_buffers.at(name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

Trainer::Trainer(Model& model, const std::vector<SequenceAnnotation>& dataset, TrainConfig cfg,
                 CropConfig crop, AssignConfig assign, LossOptions loss, std::uint64_t seed,
                 std::uint32_t config_hash)
    : model_(model),
      dataset_(dataset),
      cfg_(cfg),
      crop_(crop),
      assign_(assign),
      loss_(loss),
      root_(seed),
      config_hash_(config_hash) {
  if (dataset_.empty()) throw TrainingError("trainer: empty dataset");
  if (cfg_.batch < 1 || cfg_.pairs_per_epoch < 1)
    throw ConfigError("trainer: batch and pairs_per_epoch must be >= 1");
  if (cfg_.warmup_epochs >= cfg_.epochs)
    throw ConfigError("trainer: warmup_epochs must be smaller than epochs");

  frozen_ = model_.freeze_mask();
  for (const auto& name : model_.params().names())
    if (!frozen_.count(name)) trainable_.push_back(name);

  frames_.resize(dataset_.size());
  for (size_t s = 0; s < dataset_.size(); ++s)
    for (const auto& path : dataset_[s].frame_paths)
      frames_[s].push_back(read_ppm(path));

  const int r = model_.response_size(crop_.search_size_train);
  train_geom_ = MapGeometry::centered(crop_.search_size_train, r, r,
                                      model_.config().backbone.total_stride);
}

std::vector<Trainer::PairSample> Trainer::sample_epoch(int epoch) const {
  Rng rng = root_.stream("epoch" + std::to_string(epoch));
  std::vector<PairSample> out;
  const int n_seq = static_cast<int>(dataset_.size());
  for (int i = 0; i < cfg_.pairs_per_epoch; ++i) {
    PairSample s;
    s.negative = n_seq > 1 && rng.bernoulli(cfg_.neg_pair_rate);
    auto pick_frame = [&](int seq) {
      const auto& ann = dataset_[static_cast<size_t>(seq)];
      for (int tries = 0; tries < 8; ++tries) {
        const int f = rng.uniform_int(0, static_cast<int>(ann.frames()) - 1);
        if (!ann.out_of_view[static_cast<size_t>(f)]) return f;
      }
      return 0;
    };
    s.seq_t = rng.uniform_int(0, n_seq - 1);
    s.frame_t = pick_frame(s.seq_t);
    if (s.negative) {
      do {
        s.seq_s = rng.uniform_int(0, n_seq - 1);
      } while (s.seq_s == s.seq_t);
      s.frame_s = pick_frame(s.seq_s);
    } else {
      s.seq_s = s.seq_t;
      const auto& ann = dataset_[static_cast<size_t>(s.seq_t)];
      const int len = static_cast<int>(ann.frames());
      for (int tries = 0; tries < 8; ++tries) {
        const int f = std::clamp(s.frame_t + rng.uniform_int(-cfg_.pair_max_gap, cfg_.pair_max_gap),
                                 0, len - 1);
        s.frame_s = f;
        if (!ann.out_of_view[static_cast<size_t>(f)]) break;
      }
    }
    s.jitter.dx = rng.uniform(-crop_.aug_shift, crop_.aug_shift);
    s.jitter.dy = rng.uniform(-crop_.aug_shift, crop_.aug_shift);
    s.jitter.scale = 1.0 + rng.uniform(-crop_.aug_scale, crop_.aug_scale);
    s.label_seed = rng.next_u64();
    out.push_back(s);
  }
  return out;
}

Trainer::SampleOut Trainer::process_sample(const PairSample& s) const {
  const auto& ann_t = dataset_[static_cast<size_t>(s.seq_t)];
  const auto& ann_s = dataset_[static_cast<size_t>(s.seq_s)];
  const Image& frame_t = frames_[static_cast<size_t>(s.seq_t)][static_cast<size_t>(s.frame_t)];
  const Image& frame_s = frames_[static_cast<size_t>(s.seq_s)][static_cast<size_t>(s.frame_s)];

  CropPair pair = crop_pair(frame_t, ann_t.gt[static_cast<size_t>(s.frame_t)], frame_s,
                            ann_s.gt[static_cast<size_t>(s.frame_s)], CropMode::TRAIN, crop_,
                            s.jitter);

  LabelAssignment labels = s.negative ? negative_labels(train_geom_)
                                      : assign_labels(pair.gt_in_search, train_geom_, assign_);
  Rng label_rng(s.label_seed);
  labels = subsample_labels(labels, cfg_.max_pos, cfg_.max_neg, label_rng);

  ad::Tape tape;
  ParamBinding binding = bind_params(tape, model_.params(), frozen_, /*train=*/true);
  ad::Var tpl = tape.leaf(pair.template_img, false);
  ad::Var srch = tape.leaf(pair.search_img, false);
  Model::TrainMaps maps = model_.forward_pair(tape, tpl, srch, binding);

  LossOptions opt = loss_;
  opt.stride_scale = model_.config().head.stride_scale;
  LossResult res = total_loss(tape, maps.cls_logits, maps.reg_raw, labels, train_geom_, opt);
  tape.backward(res.loss);

  SampleOut out;
  out.report = res.report;
  out.grads.reserve(trainable_.size());
  for (const auto& name : trainable_) {
    ad::Var v = binding.at(name);
    out.grads.push_back(tape.has_grad(v) ? tape.grad(v)
                                         : Tensor::zeros(model_.params().at(name).shape()));
  }
  return out;
}

TrainResult Trainer::run(const std::string& out_dir, const std::string& resume,
                         int stop_after_epoch) {
  fs::create_directories(out_dir);
  ParamStore momentum;
  int start_epoch = 0;

  if (!resume.empty()) {
    Checkpoint ckpt = load_checkpoint(resume);
    if (ckpt.config_hash != config_hash_)
      throw ConfigError("trainer: checkpoint " + resume + " was produced by a different config (hash " +
                        std::to_string(ckpt.config_hash) + " vs " + std::to_string(config_hash_) + ")");
    for (auto& [name, t] : model_.params()) t = ckpt.params.at(name);
    momentum = std::move(ckpt.momentum);
    start_epoch = ckpt.epoch + 1;
  } else {
    for (const auto& [name, t] : model_.params()) momentum.insert(name, Tensor::zeros(t.shape()));
  }

  const fs::path log_path = fs::path(out_dir) / "train_log.csv";
  const bool append = !resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("trainer: cannot open log " + log_path.string());
  if (!append)
    log << "step,epoch,lr,cls_pos,cls_neg,reg_smooth_l1,reg_iou,coefficient_mean,total\n";

  const int workers = cfg_.deterministic ? 1 : thread_budget(cfg_.threads);
  const int end_epoch = stop_after_epoch >= 0 ? std::min(stop_after_epoch + 1, cfg_.epochs)
                                              : cfg_.epochs;

  TrainResult result;
  result.steps = start_epoch * ((cfg_.pairs_per_epoch + cfg_.batch - 1) / cfg_.batch);
  std::string last_checkpoint = resume;
  char buf[512];

  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const double lr = lr_at(epoch, cfg_);
    const std::vector<PairSample> pairs = sample_epoch(epoch);

    for (size_t base = 0; base < pairs.size(); base += static_cast<size_t>(cfg_.batch)) {
      const int bsz = static_cast<int>(std::min(static_cast<size_t>(cfg_.batch), pairs.size() - base));
      std::vector<SampleOut> outs(static_cast<size_t>(bsz));
      parallel_for(bsz, workers,
                   [&](int i) { outs[static_cast<size_t>(i)] = process_sample(pairs[base + static_cast<size_t>(i)]); });

      // ordered reduction keeps training bitwise deterministic
      std::map<std::string, Tensor> grads;
      for (size_t pi = 0; pi < trainable_.size(); ++pi) {
        Tensor acc = outs[0].grads[pi];
        for (int i = 1; i < bsz; ++i) {
          const Tensor& g = outs[static_cast<size_t>(i)].grads[pi];
          for (std::int64_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
        for (std::int64_t k = 0; k < acc.size(); ++k) acc[k] /= bsz;
        grads.emplace(trainable_[pi], std::move(acc));
      }

      if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& [name, g] : grads)
          for (std::int64_t k = 0; k < g.size(); ++k) sq += g[k] * g[k];
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) {
          const double scale = cfg_.clip_norm / norm;
          for (auto& [name, g] : grads)
            for (std::int64_t k = 0; k < g.size(); ++k) g[k] *= scale;
        }
      }

      if (cfg_.weight_decay > 0.0) {
        for (auto& [name, g] : grads) {
          if (name.size() < 7 || name.compare(name.size() - 7, 7, ".weight") != 0) continue;
          const Tensor& p = model_.params().at(name);
          for (std::int64_t k = 0; k < g.size(); ++k) g[k] += cfg_.weight_decay * p[k];
        }
      }

      sgd_step(model_.params(), grads, momentum, lr, cfg_.momentum, frozen_);

      std::vector<LossReport> reps;
      reps.reserve(static_cast<size_t>(bsz));
      for (const auto& o : outs) reps.push_back(o.report);
      const LossReport rep = merge_reports(reps);
      if (!std::isfinite(rep.total))
        throw TrainingError("trainer: loss diverged at step " + std::to_string(result.steps) +
                            (last_checkpoint.empty() ? "" : "; last good checkpoint: " + last_checkpoint));

      std::snprintf(buf, sizeof(buf),
                    "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", result.steps, epoch,
                    lr, rep.cls_pos, rep.cls_neg, rep.reg_smooth_l1, rep.reg_iou,
                    rep.coefficient_mean, rep.total);
      log << buf;
      result.reports.push_back(rep);
      ++result.steps;
    }

    Checkpoint ckpt;
    ckpt.epoch = epoch;
    ckpt.config_hash = config_hash_;
    ckpt.params = model_.params();
    ckpt.momentum = momentum;
    std::snprintf(buf, sizeof(buf), "epoch_%03d.thnk", epoch);
    const std::string ckpt_path = (fs::path(out_dir) / buf).string();
    save_checkpoint(ckpt_path, ckpt);
    last_checkpoint = ckpt_path;
    result.last_epoch = epoch;
  }

  log.flush();
  if (!log) throw IoError("trainer: writing log failed");

  if (result.last_epoch >= 0 && result.last_epoch == cfg_.epochs - 1) {
    Checkpoint ckpt;
    ckpt.epoch = result.last_epoch;
    ckpt.config_hash = config_hash_;
    ckpt.params = model_.params();
    ckpt.momentum = momentum;
    result.final_checkpoint = (fs::path(out_dir) / "final.thnk").string();
    save_checkpoint(result.final_checkpoint, ckpt);
  } else {
    result.final_checkpoint = last_checkpoint;
  }
  return result;
}

}  // namespace thn
