#include "thn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace thn {

double center_error(const BBox& pred, const BBox& gt) { return center_distance(pred, gt); }

EvalCurves success_curve(const std::vector<double>& overlaps) {
  if (overlaps.empty()) throw EvalError("success_curve: no frames");
  EvalCurves c;
  for (int i = 0; i <= 20; ++i) {
    const double t = i * 0.05;
    c.success_thresholds.push_back(t);
    int n = 0;
    for (double os : overlaps) n += os > t ? 1 : 0;
    c.success_values.push_back(static_cast<double>(n) / overlaps.size());
  }
  double acc = 0.0;
  for (double v : c.success_values) acc += v;
  c.auc = acc / c.success_values.size();
  return c;
}

EvalCurves precision_curve(const std::vector<double>& errors) {
  if (errors.empty()) throw EvalError("precision_curve: no frames");
  EvalCurves c;
  for (int t = 0; t <= 50; ++t) {
    c.precision_thresholds.push_back(t);
    int n = 0;
    for (double e : errors) n += e <= t ? 1 : 0;
    c.precision_values.push_back(static_cast<double>(n) / errors.size());
  }
  c.precision_at_20 = c.precision_values[20];
  return c;
}

EvalCurves make_curves(const std::vector<double>& overlaps, const std::vector<double>& errors) {
  EvalCurves s = success_curve(overlaps);
  EvalCurves p = precision_curve(errors);
  s.precision_thresholds = std::move(p.precision_thresholds);
  s.precision_values = std::move(p.precision_values);
  s.precision_at_20 = p.precision_at_20;
  return s;
}

VotReport vot_protocol(const std::vector<BBox>& gt, const std::function<void(int)>& do_init,
                       const std::function<BBox(int)>& do_update, const VotOptions& opt) {
  const int n = static_cast<int>(gt.size());
  if (n < 1) throw EvalError("vot: empty sequence");
  VotReport rep;
  rep.series.assign(static_cast<size_t>(std::max(0, n - 1)), 0.0);

  do_init(0);
  int pending_init = -1;          // frame index of the next re-init, -1 if none
  int last_reinit_frame = -1000;  // for the accuracy burn-in window
  double acc_sum = 0.0;
  int acc_count = 0;

  for (int f = 1; f < n; ++f) {
    if (pending_init >= 0) {
      if (f < pending_init) continue;  // waiting, frame counts as lost
      do_init(f);
      last_reinit_frame = f;
      pending_init = -1;
      continue;  // the re-init frame itself is not tracked
    }
    const BBox pred = do_update(f);
    const double os = iou(pred, gt[static_cast<size_t>(f)]);
    rep.series[static_cast<size_t>(f - 1)] = os;
    if (os == 0.0) {
      rep.resets.push_back(f);
      if (f + opt.reinit_gap < n) pending_init = f + opt.reinit_gap;
      continue;  // failed frame is excluded from accuracy
    }
    if (f - last_reinit_frame > opt.burn_in) {
      acc_sum += os;
      ++acc_count;
    }
  }

  rep.robustness = static_cast<int>(rep.resets.size());
  rep.accuracy = acc_count > 0 ? acc_sum / acc_count : 0.0;
  rep.eao_simple = eao_simple({rep.series}, opt.eao_k);
  return rep;
}

double eao_simple(const std::vector<std::vector<double>>& per_sequence_series, int eao_k) {
  if (per_sequence_series.empty()) throw EvalError("eao: no sequences");
  double total = 0.0;
  for (const auto& series : per_sequence_series) {
    const size_t horizon = std::min(series.size(), static_cast<size_t>(eao_k));
    if (horizon == 0) continue;
    double acc = 0.0;
    for (size_t i = 0; i < horizon; ++i) acc += series[i];
    total += acc / static_cast<double>(horizon);
  }
  return total / static_cast<double>(per_sequence_series.size());
}

VotReport vot_from_series(const std::vector<double>& series, const VotOptions& opt) {
  VotReport rep;
  rep.series = series;
  double acc = 0.0;
  int cnt = 0;
  for (size_t i = 0; i < series.size(); ++i) {
    if (series[i] == 0.0) {
      rep.resets.push_back(static_cast<int>(i + 1));
      continue;
    }
    acc += series[i];
    ++cnt;
  }
  rep.robustness = static_cast<int>(rep.resets.size());
  rep.accuracy = cnt > 0 ? acc / cnt : 0.0;
  rep.eao_simple = eao_simple({series}, opt.eao_k);
  return rep;
}

std::map<std::string, EvalCurves> attribute_breakdown(
    const std::vector<SequenceResult>& results,
    const std::vector<SequenceAnnotation>& annotations) {
  std::map<std::string, const SequenceAnnotation*> by_name;
  for (const auto& a : annotations) by_name.emplace(a.name, &a);

  std::map<std::string, std::vector<double>> overlaps, errors;
  for (const auto& r : results) {
    auto it = by_name.find(r.name);
    if (it == by_name.end()) throw EvalError("attribute breakdown: unknown sequence " + r.name);
    for (const auto& tag : it->second->attributes) {
      auto& o = overlaps[tag];
      o.insert(o.end(), r.overlaps.begin(), r.overlaps.end());
      auto& e = errors[tag];
      e.insert(e.end(), r.errors.begin(), r.errors.end());
    }
  }
  std::map<std::string, EvalCurves> out;
  for (const auto& [tag, os] : overlaps)
    if (!os.empty()) out.emplace(tag, make_curves(os, errors[tag]));
  return out;
}

void write_curves_csv(const std::string& path, const std::vector<double>& thresholds,
                      const std::vector<double>& values) {
  if (thresholds.size() != values.size()) throw UsageError("curves: size mismatch");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("curves: cannot open " + path);
  os << "threshold,value\n";
  char buf[96];
  for (size_t i = 0; i < thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.17g\n", thresholds[i], values[i]);
    os << buf;
  }
}

void write_summary(const std::string& path, const std::map<std::string, double>& keys) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("summary: cannot open " + path);
  char buf[96];
  for (const auto& [k, v] : keys) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", k.c_str(), v);
    os << buf;
  }
}

}  // namespace thn
