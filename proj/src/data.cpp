#include "thn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace thn {

// ---------------------------------------------------------------------------
// OTB-layout ingestion

namespace {

std::vector<double> parse_rect_line(const std::string& line, const std::string& seq,
                                    size_t lineno) {
  std::vector<double> vals;
  std::string token;
  for (char ch : line) {
    if (ch == ',' || ch == '\t' || ch == ' ') {
      if (!token.empty()) {
        vals.push_back(std::stod(token));
        token.clear();
      }
    } else {
      token += ch;
    }
  }
  if (!token.empty()) vals.push_back(std::stod(token));
  if (vals.size() != 4)
    throw IngestionError("sequence " + seq + ": groundtruth line " + std::to_string(lineno) +
                         " does not hold 4 values: '" + line + "'");
  return vals;
}

}  // namespace

SequenceAnnotation load_otb(const std::string& dir) {
  const fs::path root(dir);
  SequenceAnnotation ann;
  ann.name = root.filename().string();
  if (ann.name.empty()) ann.name = root.parent_path().filename().string();

  const fs::path gt_path = root / "groundtruth_rect.txt";
  std::ifstream gt_file(gt_path);
  if (!gt_file)
    throw IngestionError("sequence " + ann.name + ": missing " + gt_path.string());

  std::string line;
  size_t lineno = 0;
  while (std::getline(gt_file, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto v = parse_rect_line(line, ann.name, lineno);
    ann.gt.push_back(BBox::from_corner(v[0], v[1], v[2], v[3]));
  }

  const fs::path img_dir = root / "img";
  if (!fs::is_directory(img_dir))
    throw IngestionError("sequence " + ann.name + ": missing img/ directory");
  for (const auto& e : fs::directory_iterator(img_dir))
    if (e.path().extension() == ".ppm") ann.frame_paths.push_back(e.path().string());
  std::sort(ann.frame_paths.begin(), ann.frame_paths.end());

  if (ann.frame_paths.size() != ann.gt.size())
    throw IngestionError("sequence " + ann.name + ": " + std::to_string(ann.gt.size()) +
                         " groundtruth lines for " + std::to_string(ann.frame_paths.size()) +
                         " frames");
  if (ann.frame_paths.empty())
    throw IngestionError("sequence " + ann.name + ": no frames");

  // flag boxes that left the frame; frame size read once
  const Image first = read_ppm(ann.frame_paths.front());
  ann.out_of_view.resize(ann.gt.size(), false);
  for (size_t i = 0; i < ann.gt.size(); ++i) {
    const BBox& b = ann.gt[i];
    ann.out_of_view[i] =
        b.x2() <= 0.0 || b.y2() <= 0.0 || b.x1() >= first.w || b.y1() >= first.h || !b.positive();
  }
  return ann;
}

std::vector<SequenceAnnotation> load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw IoError("dataset: not a directory: " + dir);
  std::vector<SequenceAnnotation> out;

  const fs::path manifest = root / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream mf(manifest);
    std::string line;
    while (std::getline(mf, line)) {
      if (line.empty()) continue;
      std::string name = line, attrs;
      const size_t tab = line.find('\t');
      if (tab != std::string::npos) {
        name = line.substr(0, tab);
        attrs = line.substr(tab + 1);
      }
      SequenceAnnotation ann = load_otb((root / name).string());
      std::stringstream ss(attrs);
      std::string a;
      while (std::getline(ss, a, ','))
        if (!a.empty()) ann.attributes.insert(a);
      out.push_back(std::move(ann));
    }
  } else {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && fs::exists(e.path() / "groundtruth_rect.txt"))
        names.push_back(e.path().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) out.push_back(load_otb(n));
  }
  if (out.empty()) throw IngestionError("dataset: no sequences found under " + dir);
  return out;
}

// ---------------------------------------------------------------------------
// synthetic sequence generation

namespace {

struct Blob {
  bool ellipse = true;
  double cx = 0, cy = 0, w = 0, h = 0;
  double vx = 0, vy = 0;
  std::array<std::uint8_t, 3> color{};
  std::array<std::uint8_t, 3> core{};  // inner two-tone fill

  double coverage(double px, double py) const {
    int hit = 0;
    for (double oy : {0.25, 0.75})
      for (double ox : {0.25, 0.75}) {
        const double dx = px + ox - cx, dy = py + oy - cy;
        bool in;
        if (ellipse) {
          const double rx = dx / (w / 2.0), ry = dy / (h / 2.0);
          in = rx * rx + ry * ry <= 1.0;
        } else {
          in = std::fabs(dx) <= w / 2.0 && std::fabs(dy) <= h / 2.0;
        }
        hit += in ? 1 : 0;
      }
    return hit / 4.0;
  }

  bool in_core(double px, double py) const {
    const double dx = px + 0.5 - cx, dy = py + 0.5 - cy;
    const double rx = dx / (w / 4.0), ry = dy / (h / 4.0);
    return rx * rx + ry * ry <= 1.0;
  }

  void step(int frame_w, int frame_h) {
    cx += vx;
    cy += vy;
    const double mx = w / 2.0 + 2.0, my = h / 2.0 + 2.0;
    if (cx < mx) {
      cx = mx;
      vx = std::fabs(vx);
    }
    if (cx > frame_w - mx) {
      cx = frame_w - mx;
      vx = -std::fabs(vx);
    }
    if (cy < my) {
      cy = my;
      vy = std::fabs(vy);
    }
    if (cy > frame_h - my) {
      cy = frame_h - my;
      vy = -std::fabs(vy);
    }
  }
};

void paint(Image& img, const Blob& b) {
  const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - b.w / 2.0 - 1)));
  const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(b.cx + b.w / 2.0 + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - b.h / 2.0 - 1)));
  const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(b.cy + b.h / 2.0 + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double cov = b.coverage(x, y);
      if (cov <= 0.0) continue;
      const auto& col = b.in_core(x, y) ? b.core : b.color;
      for (int c = 0; c < 3; ++c) {
        const double mixed = (1.0 - cov) * img.at(x, y, c) + cov * col[static_cast<size_t>(c)];
        img.set(x, y, c, static_cast<std::uint8_t>(std::lround(mixed)));
      }
    }
}

std::array<std::uint8_t, 3> random_color(Rng& rng, int lo, int hi) {
  return {static_cast<std::uint8_t>(rng.uniform_int(lo, hi)),
          static_cast<std::uint8_t>(rng.uniform_int(lo, hi)),
          static_cast<std::uint8_t>(rng.uniform_int(lo, hi))};
}

}  // namespace

SynthSequence gen_sequence(const SynthSpec& spec, const std::string& name, Rng rng) {
  if (spec.frames < 1 || spec.width < 32 || spec.height < 32)
    throw ConfigError("synth: degenerate spec for sequence " + name);

  SynthSequence seq;
  seq.ann.name = name;

  const auto bg_top = random_color(rng, 20, 80);
  const auto bg_bot = random_color(rng, 20, 80);

  Blob target;
  target.ellipse = rng.bernoulli(0.5);
  target.w = rng.uniform(spec.size_min, spec.size_max);
  target.h = target.w * rng.uniform(0.75, 1.3);
  target.cx = rng.uniform(0.25, 0.75) * spec.width;
  target.cy = rng.uniform(0.25, 0.75) * spec.height;
  const double speed = rng.uniform(0.3, 1.0) * spec.speed_max;
  const double angle = rng.uniform(0.0, 6.2831853);
  target.vx = speed * std::cos(angle);
  target.vy = speed * std::sin(angle);
  target.color = random_color(rng, 150, 245);
  target.core = random_color(rng, 90, 230);

  const bool drifting = rng.bernoulli(spec.p_scale_drift);
  const double drift = drifting ? (rng.bernoulli(0.5) ? 1.0 + spec.scale_drift
                                                      : 1.0 / (1.0 + spec.scale_drift))
                                : 1.0;

  int n_distractors = 0;
  if (spec.max_distractors > 0 && rng.bernoulli(spec.p_distractor))
    n_distractors = rng.uniform_int(1, spec.max_distractors);
  std::vector<Blob> distractors;
  for (int i = 0; i < n_distractors; ++i) {
    Blob d = target;
    d.w = target.w * rng.uniform(0.8, 1.2);
    d.h = target.h * rng.uniform(0.8, 1.2);
    d.cx = rng.uniform(0.15, 0.85) * spec.width;
    d.cy = rng.uniform(0.15, 0.85) * spec.height;
    const double da = rng.uniform(0.0, 6.2831853);
    const double ds = rng.uniform(0.3, 1.0) * spec.speed_max;
    d.vx = ds * std::cos(da);
    d.vy = ds * std::sin(da);
    for (int c = 0; c < 3; ++c) {
      d.color[static_cast<size_t>(c)] = static_cast<std::uint8_t>(
          std::min(255.0, target.color[static_cast<size_t>(c)] * rng.uniform(0.75, 0.95)));
      d.core[static_cast<size_t>(c)] = static_cast<std::uint8_t>(
          std::min(255.0, target.core[static_cast<size_t>(c)] * rng.uniform(0.75, 0.95)));
    }
    distractors.push_back(d);
  }

  const bool occluding = rng.bernoulli(spec.p_occlusion);
  int occ_start = 0, occ_len = 0;
  std::array<std::uint8_t, 3> occ_color = random_color(rng, 100, 140);
  if (occluding) {
    occ_len = std::max(3, spec.frames / 4);
    occ_start = rng.uniform_int(spec.frames / 4, std::max(spec.frames / 4, spec.frames - occ_len - 1));
  }

  if (drifting) seq.ann.attributes.insert("scale-variation");
  if (n_distractors > 0) seq.ann.attributes.insert("similar-object");
  if (occluding) seq.ann.attributes.insert("occlusion");
  if (speed > 0.7 * spec.speed_max) seq.ann.attributes.insert("fast-motion");

  for (int f = 0; f < spec.frames; ++f) {
    // background gradient + per-frame noise
    Image img = Image::filled(spec.width, spec.height, bg_top);
    Rng noise = rng.stream("noise" + std::to_string(f));
    const double amp = spec.noise * 255.0;
    for (int y = 0; y < spec.height; ++y) {
      const double ty = static_cast<double>(y) / spec.height;
      for (int x = 0; x < spec.width; ++x)
        for (int c = 0; c < 3; ++c) {
          double v = (1.0 - ty) * bg_top[static_cast<size_t>(c)] + ty * bg_bot[static_cast<size_t>(c)];
          v += noise.uniform(-amp, amp);
          img.set(x, y, c, static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)));
        }
    }

    for (const Blob& d : distractors) paint(img, d);
    paint(img, target);

    if (occluding && f >= occ_start && f < occ_start + occ_len) {
      // a bar sweeping across the target, wide enough to cover most of it
      const double phase = (f - occ_start + 0.5) / occ_len;  // 0..1
      Blob bar;
      bar.ellipse = false;
      bar.w = target.w * 0.8;
      bar.h = target.h * 2.5;
      bar.cx = target.cx + (phase - 0.5) * 2.0 * target.w;
      bar.cy = target.cy;
      bar.color = occ_color;
      bar.core = occ_color;
      paint(img, bar);
    }

    seq.frames.push_back(std::move(img));
    seq.ann.gt.push_back(BBox{target.cx, target.cy, target.w, target.h});
    const bool oov = target.cx + target.w / 2.0 <= 0.0 || target.cy + target.h / 2.0 <= 0.0 ||
                     target.cx - target.w / 2.0 >= spec.width ||
                     target.cy - target.h / 2.0 >= spec.height;
    seq.ann.out_of_view.push_back(oov);
    if (oov) {
      seq.ann.truncated = true;
      break;
    }

    target.step(spec.width, spec.height);
    target.w = std::clamp(target.w * drift, 8.0, spec.width / 2.5);
    target.h = std::clamp(target.h * drift, 8.0, spec.height / 2.5);
    for (Blob& d : distractors) d.step(spec.width, spec.height);
  }
  return seq;
}

std::string write_dataset(const std::string& out_dir, std::vector<SynthSequence>& seqs) {
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("dataset: cannot create " + out_dir + ": " + ec.message());

  for (SynthSequence& s : seqs) {
    const fs::path seq_dir = root / s.ann.name;
    fs::create_directories(seq_dir / "img", ec);
    if (ec) throw IoError("dataset: cannot create " + (seq_dir / "img").string());
    std::ofstream gt(seq_dir / "groundtruth_rect.txt", std::ios::trunc);
    if (!gt) throw IoError("dataset: cannot write groundtruth for " + s.ann.name);
    s.ann.frame_paths.clear();
    char buf[64];
    for (size_t f = 0; f < s.frames.size(); ++f) {
      std::snprintf(buf, sizeof(buf), "%04zu.ppm", f + 1);
      const fs::path p = seq_dir / "img" / buf;
      write_ppm(p.string(), s.frames[f]);
      s.ann.frame_paths.push_back(p.string());
      const BBox& b = s.ann.gt[f];
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%.3f,%.3f\n", b.x1(), b.y1(), b.w, b.h);
      gt << buf;
    }
  }

  const fs::path manifest = root / "manifest.txt";
  std::ofstream mf(manifest, std::ios::trunc);
  if (!mf) throw IoError("dataset: cannot write manifest");
  for (const SynthSequence& s : seqs) {
    mf << s.ann.name << '\t';
    bool first = true;
    for (const auto& a : s.ann.attributes) {
      if (!first) mf << ',';
      mf << a;
      first = false;
    }
    mf << '\n';
  }
  return manifest.string();
}

// ---------------------------------------------------------------------------
// crop pipeline

double context_side(const BBox& box) {
  const double p = (box.w + box.h) / 2.0;
  return std::sqrt((box.w + p) * (box.h + p));
}

CropPair crop_pair(const Image& frame_t, const BBox& gt_t, const Image& frame_s,
                   const BBox& gt_s, CropMode mode, const CropConfig& cfg,
                   const CropJitter& jitter) {
  if (!gt_t.positive() || !gt_s.positive())
    throw DomainError("crop_pair: degenerate ground truth box");

  const int T = cfg.template_size;
  const int S = mode == CropMode::TRAIN ? cfg.search_size_train : cfg.search_size_infer;

  CropPair out;
  const double s_z = context_side(gt_t);
  Crop tpl = crop_square(frame_t, gt_t.cx, gt_t.cy, s_z, T);
  out.template_img = std::move(tpl.tensor);
  out.template_geom = tpl.geom;

  double side = context_side(gt_s) * static_cast<double>(S) / T;
  side *= jitter.scale;
  const double fdx = jitter.dx * side / S, fdy = jitter.dy * side / S;
  Crop srch = crop_square(frame_s, gt_s.cx + fdx, gt_s.cy + fdy, side, S);
  out.search_img = std::move(srch.tensor);
  out.search_geom = srch.geom;
  out.gt_in_search = out.search_geom.to_crop(gt_s);
  return out;
}

// ---------------------------------------------------------------------------
// label assignment

LabelAssignment assign_labels(const BBox& gt, const MapGeometry& geom,
                              const AssignConfig& cfg) {
  if (!gt.positive()) throw DomainError("assign_labels: degenerate ground truth box");
  LabelAssignment lab;
  lab.rows = geom.rows;
  lab.cols = geom.cols;
  lab.cls.assign(static_cast<size_t>(geom.rows) * geom.cols, PointLabel::NEG);
  lab.d_hat = Tensor(Shape{1, 4, geom.rows, geom.cols});
  lab.gt = gt;
  lab.has_gt = true;

  const double ax_pos_x = gt.w / cfg.pos_axis_div, ax_pos_y = gt.h / cfg.pos_axis_div;
  const double ax_neg_x = gt.w / cfg.neg_axis_div, ax_neg_y = gt.h / cfg.neg_axis_div;

  int n_pos = 0;
  double best_d2 = 1e300;
  int best_iy = -1, best_ix = -1;
  for (int iy = 0; iy < geom.rows; ++iy)
    for (int ix = 0; ix < geom.cols; ++ix) {
      const double x = geom.point_x(ix), y = geom.point_y(iy);
      const double dx = x - gt.cx, dy = y - gt.cy;
      const double rp = (dx / ax_pos_x) * (dx / ax_pos_x) + (dy / ax_pos_y) * (dy / ax_pos_y);
      const double rn = (dx / ax_neg_x) * (dx / ax_neg_x) + (dy / ax_neg_y) * (dy / ax_neg_y);
      const size_t idx = static_cast<size_t>(iy) * geom.cols + ix;
      if (rp <= 1.0) {
        lab.cls[idx] = PointLabel::POS;
        ++n_pos;
      } else if (rn <= 1.0) {
        lab.cls[idx] = PointLabel::IGNORE;
      }
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best_iy = iy;
        best_ix = ix;
      }
      lab.d_hat(0, 0, iy, ix) = x - gt.x1();
      lab.d_hat(0, 1, iy, ix) = y - gt.y1();
      lab.d_hat(0, 2, iy, ix) = gt.x2() - x;
      lab.d_hat(0, 3, iy, ix) = gt.y2() - y;
    }

  // tiny targets can miss every grid point: promote the nearest point when it
  // still lies strictly inside the box (otherwise the sample trains
  // classification only)
  if (n_pos == 0 && best_iy >= 0) {
    const double x = geom.point_x(best_ix), y = geom.point_y(best_iy);
    if (x > gt.x1() && x < gt.x2() && y > gt.y1() && y < gt.y2())
      lab.cls[static_cast<size_t>(best_iy) * geom.cols + best_ix] = PointLabel::POS;
  }
  return lab;
}

LabelAssignment negative_labels(const MapGeometry& geom) {
  LabelAssignment lab;
  lab.rows = geom.rows;
  lab.cols = geom.cols;
  lab.cls.assign(static_cast<size_t>(geom.rows) * geom.cols, PointLabel::NEG);
  lab.d_hat = Tensor(Shape{1, 4, geom.rows, geom.cols});
  lab.has_gt = false;
  return lab;
}

LabelAssignment subsample_labels(const LabelAssignment& in, int max_pos, int max_neg, Rng& rng) {
  LabelAssignment out = in;
  auto cap = [&](PointLabel which, int keep) {
    if (keep < 0) return;
    std::vector<size_t> idx;
    for (size_t i = 0; i < out.cls.size(); ++i)
      if (out.cls[i] == which) idx.push_back(i);
    if (static_cast<int>(idx.size()) <= keep) return;
    // Fisher-Yates prefix selection
    for (size_t i = 0; i < static_cast<size_t>(keep); ++i) {
      const size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int>(idx.size() - i - 1)));
      std::swap(idx[i], idx[j]);
    }
    for (size_t i = static_cast<size_t>(keep); i < idx.size(); ++i)
      out.cls[idx[i]] = PointLabel::IGNORE;
  };
  cap(PointLabel::POS, max_pos);
  cap(PointLabel::NEG, max_neg);
  return out;
}

}  // namespace thn
