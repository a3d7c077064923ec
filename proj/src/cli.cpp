#include "thn/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "thn/checkpoint.hpp"
#include "thn/config.hpp"
#include "thn/gradcheck.hpp"
#include "thn/parallel.hpp"
#include "thn/tracker.hpp"

namespace fs = std::filesystem;

namespace thn::cli {

namespace {

constexpr const char* kUsage =
    "usage: thn <gen|train|track|eval|gradcheck> [options]\n"
    "\n"
    "common options:\n"
    "  --config PATH        sectioned key=value config file (defaults built in)\n"
    "  --set sec.key=value  override one config key (repeatable)\n"
    "  --seed N             master random seed (default 1)\n"
    "  --deterministic      force serial sample processing\n"
    "  --thm on|off         toggle the target-highlight reduction\n"
    "  --corrective on|off  toggle the corrective loss\n"
    "  --out DIR            output directory\n"
    "\n"
    "gen:        --out DIR                     write a synthetic benchmark\n"
    "train:      --data DIR --out DIR [--resume CKPT] [--stop-after EPOCH]\n"
    "track:      --data DIR --checkpoint CKPT --out DIR\n"
    "eval:       --data DIR --results DIR [--results DIR...] --out DIR\n"
    "            [--checkpoint CKPT]           adds the live reset protocol\n"
    "gradcheck:  [--seed N]                    finite-difference verification\n";

struct Args {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 1;
  bool deterministic = false;
  std::optional<bool> thm, corrective;
  std::string out_dir, data_dir, checkpoint, resume;
  std::vector<std::string> results_dirs;
  std::vector<std::string> overrides;
  int stop_after = -1;
};

Args parse_args(const std::vector<std::string>& argv) {
  if (argv.empty()) throw UsageError("missing command\n" + std::string(kUsage));
  Args a;
  a.command = argv[0];
  auto need_value = [&](size_t i, const std::string& flag) {
    if (i + 1 >= argv.size()) throw UsageError("flag " + flag + " needs a value");
    return argv[i + 1];
  };
  for (size_t i = 1; i < argv.size(); ++i) {
    const std::string& f = argv[i];
    if (f == "--config") a.config_path = need_value(i++, f);
    else if (f == "--set") a.overrides.push_back(need_value(i++, f));
    else if (f == "--seed") a.seed = std::stoull(need_value(i++, f));
    else if (f == "--deterministic") a.deterministic = true;
    else if (f == "--thm") a.thm = need_value(i++, f) == "on";
    else if (f == "--corrective") a.corrective = need_value(i++, f) == "on";
    else if (f == "--out") a.out_dir = need_value(i++, f);
    else if (f == "--data") a.data_dir = need_value(i++, f);
    else if (f == "--checkpoint") a.checkpoint = need_value(i++, f);
    else if (f == "--resume") a.resume = need_value(i++, f);
    else if (f == "--results") a.results_dirs.push_back(need_value(i++, f));
    else if (f == "--stop-after") a.stop_after = std::stoi(need_value(i++, f));
    else throw UsageError("unknown flag '" + f + "'\n" + std::string(kUsage));
  }
  return a;
}

RunConfig build_config(const Args& a) {
  RunConfig cfg = load_config(a.config_path);
  for (const auto& o : a.overrides) apply_override(cfg, o);
  if (a.thm) cfg.matcher.thm = *a.thm;
  if (a.corrective) cfg.loss.corrective = *a.corrective;
  if (a.deterministic) cfg.trainer.deterministic = true;
  return cfg;
}

int cmd_gen(const Args& a, const RunConfig& cfg, std::ostream& out) {
  if (a.out_dir.empty()) throw UsageError("gen: --out DIR is required");
  Rng root(a.seed);
  std::vector<SynthSequence> seqs;
  char name[32];
  for (int i = 0; i < cfg.synth_sequences; ++i) {
    std::snprintf(name, sizeof(name), "synth%03d", i);
    seqs.push_back(gen_sequence(cfg.synth, name, root.stream(std::string("data.synth.") + name)));
  }
  const std::string manifest = write_dataset(a.out_dir, seqs);
  size_t frames = 0;
  for (const auto& s : seqs) frames += s.frames.size();
  out << "wrote " << seqs.size() << " sequences (" << frames << " frames) under " << a.out_dir
      << "\nmanifest: " << manifest << "\n";
  return 0;
}

int cmd_train(const Args& a, RunConfig& cfg, std::ostream& out) {
  if (a.data_dir.empty() || a.out_dir.empty())
    throw UsageError("train: --data DIR and --out DIR are required");
  const auto dataset = load_dataset(a.data_dir);
  Model model(cfg.model_config());
  model.init_params(Rng(a.seed));
  Trainer trainer(model, dataset, cfg.trainer, cfg.crop, cfg.assign, cfg.loss, a.seed,
                  cfg.hash());
  const TrainResult res = trainer.run(a.out_dir, a.resume, a.stop_after);
  out << "trained " << res.steps << " steps";
  if (!res.reports.empty()) out << ", final loss " << res.reports.back().total;
  out << "\ncheckpoint: " << res.final_checkpoint << "\n";
  return 0;
}

int cmd_track(const Args& a, const RunConfig& cfg, std::ostream& out) {
  if (a.data_dir.empty() || a.out_dir.empty() || a.checkpoint.empty())
    throw UsageError("track: --data, --checkpoint and --out are required");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.config_hash != cfg.hash())
    throw ConfigError("track: checkpoint " + a.checkpoint +
                      " was trained under a different config (hash " +
                      std::to_string(ckpt.config_hash) + ", current " +
                      std::to_string(cfg.hash()) + "); pass the matching --config");
  Model model(cfg.model_config());
  model.load_params(ckpt.params);

  const auto dataset = load_dataset(a.data_dir);
  fs::create_directories(a.out_dir);
  const int workers = cfg.trainer.deterministic ? 1 : thread_budget(cfg.trainer.threads);
  std::vector<std::string> errors(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), workers, [&](int i) {
    try {
      const auto frames = track_sequence(model, cfg.penalty, cfg.crop, dataset[static_cast<size_t>(i)]);
      write_result_csv((fs::path(a.out_dir) / (dataset[static_cast<size_t>(i)].name + ".csv")).string(),
                       frames);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw EvalError("track: " + e);
  out << "tracked " << dataset.size() << " sequences into " << a.out_dir << "\n";
  return 0;
}

struct DirEval {
  std::string label;
  EvalCurves curves;
  double accuracy = 0.0;
  int robustness = 0;
  double eao = 0.0;
};

int cmd_eval(const Args& a, const RunConfig& cfg, std::ostream& out) {
  if (a.data_dir.empty() || a.results_dirs.empty() || a.out_dir.empty())
    throw UsageError("eval: --data, --results and --out are required");
  const auto dataset = load_dataset(a.data_dir);
  fs::create_directories(a.out_dir);

  std::optional<Model> model;
  if (!a.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    if (ckpt.config_hash != cfg.hash())
      throw ConfigError("eval: checkpoint/config hash mismatch");
    model.emplace(cfg.model_config());
    model->load_params(ckpt.params);
  }

  std::vector<DirEval> rows;
  for (const std::string& dir : a.results_dirs) {
    DirEval row;
    row.label = fs::path(dir).filename().string();
    if (row.label.empty()) row.label = "results";

    std::vector<SequenceResult> results;
    std::vector<double> all_os, all_err;
    std::vector<std::vector<double>> series;
    double acc_sum = 0.0;
    int acc_n = 0, failures = 0;

    for (const auto& ann : dataset) {
      const fs::path csv = fs::path(dir) / (ann.name + ".csv");
      if (!fs::exists(csv))
        throw EvalError("eval: missing results for sequence '" + ann.name + "' in " + dir);
      const auto frames = read_result_csv(csv.string());
      if (frames.size() != ann.frames())
        throw EvalError("eval: sequence '" + ann.name + "' has " + std::to_string(frames.size()) +
                        " result rows for " + std::to_string(ann.frames()) + " frames");
      SequenceResult res;
      res.name = ann.name;
      for (size_t f = 0; f < frames.size(); ++f) {
        res.overlaps.push_back(iou(frames[f].box, ann.gt[f]));
        res.errors.push_back(center_error(frames[f].box, ann.gt[f]));
      }
      all_os.insert(all_os.end(), res.overlaps.begin(), res.overlaps.end());
      all_err.insert(all_err.end(), res.errors.begin(), res.errors.end());

      if (model) {
        SiamTracker tracker(*model, cfg.penalty, cfg.crop);
        std::vector<Image> imgs;
        for (const auto& p : ann.frame_paths) imgs.push_back(read_ppm(p));
        VotReport vr = vot_protocol(
            ann.gt,
            [&](int f) { tracker.init(imgs[static_cast<size_t>(f)], ann.gt[static_cast<size_t>(f)]); },
            [&](int f) { return tracker.update(imgs[static_cast<size_t>(f)]).box; }, cfg.eval);
        series.push_back(vr.series);
        acc_sum += vr.accuracy;
        ++acc_n;
        failures += vr.robustness;
      } else {
        VotReport vr = vot_from_series(
            std::vector<double>(res.overlaps.begin() + 1, res.overlaps.end()), cfg.eval);
        series.push_back(vr.series);
        acc_sum += vr.accuracy;
        ++acc_n;
        failures += vr.robustness;
      }
      results.push_back(std::move(res));
    }

    row.curves = make_curves(all_os, all_err);
    row.accuracy = acc_n > 0 ? acc_sum / acc_n : 0.0;
    row.robustness = failures;
    row.eao = eao_simple(series, cfg.eval.eao_k);

    const fs::path rdir = fs::path(a.out_dir) / row.label;
    fs::create_directories(rdir);
    write_curves_csv((rdir / "success.csv").string(), row.curves.success_thresholds,
                     row.curves.success_values);
    write_curves_csv((rdir / "precision.csv").string(), row.curves.precision_thresholds,
                     row.curves.precision_values);
    write_summary((rdir / "summary.txt").string(),
                  {{"auc", row.curves.auc},
                   {"precision_at_20", row.curves.precision_at_20},
                   {"accuracy", row.accuracy},
                   {"robustness", static_cast<double>(row.robustness)},
                   {"eao_simple", row.eao}});

    for (const auto& [tag, curves] : attribute_breakdown(results, dataset)) {
      write_curves_csv((rdir / ("attr_" + tag + "_success.csv")).string(),
                       curves.success_thresholds, curves.success_values);
      write_curves_csv((rdir / ("attr_" + tag + "_precision.csv")).string(),
                       curves.precision_thresholds, curves.precision_values);
    }
    out << row.label << ": auc " << row.curves.auc << ", precision@20 "
        << row.curves.precision_at_20 << ", accuracy " << row.accuracy << ", robustness "
        << row.robustness << ", eao_simple " << row.eao << "\n";
    rows.push_back(std::move(row));
  }

  if (rows.size() > 1) {
    std::ofstream cmp(fs::path(a.out_dir) / "comparison.csv", std::ios::trunc);
    cmp << "tracker,auc,precision_at_20,accuracy,robustness,eao_simple\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%d,%.6f\n", r.label.c_str(),
                    r.curves.auc, r.curves.precision_at_20, r.accuracy, r.robustness, r.eao);
      cmp << buf;
    }
  }
  return 0;
}

int cmd_gradcheck(const Args& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = gradcheck_suite(a.seed);
  bool ok = true;
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-28s %s  max_rel %.3e  max_abs %.3e  (%d components)\n",
                  r.name.c_str(), r.pass ? "PASS" : "FAIL", r.max_rel_err, r.max_abs_err,
                  r.n_checked);
    out << buf;
    ok = ok && r.pass;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::snprintf(buf, sizeof(buf), "%zu checks in %.2fs: %s\n", results.size(), secs,
                ok ? "all PASS" : "FAILURES PRESENT");
  out << buf;
  return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    const Args a = parse_args(args);
    RunConfig cfg = build_config(a);
    if (a.command == "gen") return cmd_gen(a, cfg, out);
    if (a.command == "train") return cmd_train(a, cfg, out);
    if (a.command == "track") return cmd_track(a, cfg, out);
    if (a.command == "eval") return cmd_eval(a, cfg, out);
    if (a.command == "gradcheck") return cmd_gradcheck(a, out);
    throw UsageError("unknown command '" + a.command + "'\n" + std::string(kUsage));
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace thn::cli
