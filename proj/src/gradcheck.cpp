#include "thn/gradcheck.hpp"

#include <cmath>

#include "thn/losses.hpp"
#include "thn/model.hpp"
#include "thn/rng.hpp"

namespace thn {

GradCheckResult check_gradient(const std::string& name,
                               const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& analytic_grad,
                               const std::vector<double>& x0, GradCheckOptions opt) {
  if (analytic_grad.size() != x0.size())
    throw UsageError("check_gradient: gradient/point size mismatch for " + name);
  GradCheckResult res;
  res.name = name;
  res.n_checked = static_cast<int>(x0.size());
  res.pass = true;
  std::vector<double> x = x0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + opt.eps;
    const double fp = f(x);
    x[i] = keep - opt.eps;
    const double fm = f(x);
    x[i] = keep;
    const double fd = (fp - fm) / (2.0 * opt.eps);
    const double a = analytic_grad[i];
    const double abs_err = std::fabs(a - fd);
    const double denom = std::max(std::fabs(a), std::fabs(fd));
    const double rel = abs_err / std::max(denom, 1e-12);
    res.max_abs_err = std::max(res.max_abs_err, abs_err);
    if (abs_err > opt.abs_floor) res.max_rel_err = std::max(res.max_rel_err, rel);
    if (abs_err > std::max(opt.abs_floor, opt.rel_tol * denom)) res.pass = false;
  }
  return res;
}

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double scale = 1.0, double min_abs = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) {
    do {
      x = rng.gaussian() * scale;
    } while (min_abs > 0.0 && std::fabs(x) < min_abs);
  }
  return v;
}

Tensor tensor_from(Shape s, const std::vector<double>& flat, size_t offset) {
  std::vector<double> d(flat.begin() + static_cast<long>(offset),
                        flat.begin() + static_cast<long>(offset) + s.numel());
  return Tensor::from(s, std::move(d));
}

void append_grad(std::vector<double>& out, const ad::Tape& tape, ad::Var v) {
  const Tensor& g = tape.grad(v);
  for (std::int64_t i = 0; i < g.size(); ++i) out.push_back(g[i]);
}

// Weighted sum against a fixed random projection turns a map-valued op into
// the scalar that finite differences need.
double project(const Tensor& t, const std::vector<double>& proj) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) acc += t[i] * proj[static_cast<size_t>(i)];
  return acc;
}

// A generic harness: the caller provides shapes for the differentiated
// inputs plus a builder that maps bound leaves to an output Var.
struct TapeCheck {
  std::string name;
  std::vector<Shape> shapes;
  std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)> build;

  GradCheckResult run(Rng rng, GradCheckOptions opt = {}) const {
    size_t total = 0;
    for (const Shape& s : shapes) total += static_cast<size_t>(s.numel());
    // keep ReLU and kink-bearing ops away from their non-differentiable points
    std::vector<double> x0 = random_vec(total, rng, 0.6, 1e-3);

    auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
      ad::Tape tape;
      std::vector<ad::Var> leaves;
      size_t off = 0;
      for (const Shape& s : shapes) {
        leaves.push_back(tape.leaf(tensor_from(s, x, off), grad_out != nullptr));
        off += static_cast<size_t>(s.numel());
      }
      ad::Var out = build(tape, leaves);
      const double v = tape.value(out).item();
      if (grad_out) {
        tape.backward(out);
        for (ad::Var l : leaves) {
          if (tape.has_grad(l))
            append_grad(*grad_out, tape, l);
          else
            grad_out->insert(grad_out->end(),
                             static_cast<size_t>(tape.value(l).size()), 0.0);
        }
      }
      return v;
    };

    std::vector<double> analytic;
    eval(x0, &analytic);
    return check_gradient(
        name, [&](const std::vector<double>& x) { return eval(x, nullptr); }, analytic, x0,
        opt);
  }
};

ad::Var sum_sq(ad::Tape& t, ad::Var x) { return t.sum(t.mul(x, x)); }

LabelAssignment make_labels(int rows, int cols, const MapGeometry& geom, Rng& rng) {
  LabelAssignment lab;
  lab.rows = rows;
  lab.cols = cols;
  lab.cls.assign(static_cast<size_t>(rows) * cols, PointLabel::NEG);
  lab.d_hat = Tensor(Shape{1, 4, rows, cols});
  // a ground-truth box covering the middle of the grid
  const double cx = geom.point_x(cols / 2) + 1.3;
  const double cy = geom.point_y(rows / 2) - 0.7;
  const double w = geom.stride * (cols * 0.55), h = geom.stride * (rows * 0.45);
  lab.gt = BBox{cx, cy, w, h};
  lab.has_gt = true;
  int pos_budget = 3;
  for (int iy = 0; iy < rows; ++iy)
    for (int ix = 0; ix < cols; ++ix) {
      const double x = geom.point_x(ix), y = geom.point_y(iy);
      const bool inside = std::fabs(x - cx) < w / 4.0 && std::fabs(y - cy) < h / 4.0;
      if (inside && pos_budget > 0) {
        lab.cls[static_cast<size_t>(iy) * cols + ix] = PointLabel::POS;
        --pos_budget;
        lab.d_hat(0, 0, iy, ix) = x - lab.gt.x1();
        lab.d_hat(0, 1, iy, ix) = y - lab.gt.y1();
        lab.d_hat(0, 2, iy, ix) = lab.gt.x2() - x;
        lab.d_hat(0, 3, iy, ix) = lab.gt.y2() - y;
      } else if (rng.uniform() < 0.2) {
        lab.cls[static_cast<size_t>(iy) * cols + ix] = PointLabel::IGNORE;
      }
    }
  return lab;
}

GradCheckResult check_total_loss(const std::string& name, Rng rng, bool corrective,
                                 bool coefficient_grad) {
  const int rows = 5, cols = 5;
  const MapGeometry geom = MapGeometry::centered(8 * cols + 7, rows, cols, 8);
  Rng lab_rng = rng.stream("labels");
  const LabelAssignment lab = make_labels(rows, cols, geom, lab_rng);

  LossOptions opt;
  opt.corrective = corrective;
  opt.coefficient_grad = coefficient_grad;
  opt.stride_scale = 8.0;

  const Shape ls{1, 2, rows, cols}, rs{1, 4, rows, cols};
  const size_t n_l = static_cast<size_t>(ls.numel());
  std::vector<double> x0 = random_vec(n_l + static_cast<size_t>(rs.numel()), rng, 0.5, 1e-3);

  // With the coefficient detached, finite differences must probe the same
  // function the analytic gradient differentiates: coefficients frozen at
  // their base-point values.
  std::optional<std::vector<double>> frozen;
  if (corrective && !coefficient_grad) {
    // per-positive coefficients at the base point, row-major positive order
    std::vector<double> w;
    const Tensor logits = tensor_from(ls, x0, 0);
    for (int iy = 0; iy < rows; ++iy)
      for (int ix = 0; ix < cols; ++ix)
        if (lab.at(iy, ix) == PointLabel::POS) {
          const double t = logits(0, 0, iy, ix) - logits(0, 1, iy, ix);
          const double ce = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
          w.push_back(1.0 + std::exp(-ce));
        }
    frozen = std::move(w);
  }

  auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
    ad::Tape tape;
    ad::Var l = tape.leaf(tensor_from(ls, x, 0), grad_out != nullptr);
    ad::Var r = tape.leaf(tensor_from(rs, x, n_l), grad_out != nullptr);
    LossOptions o = opt;
    if (!grad_out && frozen) o.frozen_coefficients = frozen;
    LossResult res = total_loss(tape, l, r, lab, geom, o);
    const double v = tape.value(res.loss).item();
    if (grad_out) {
      tape.backward(res.loss);
      append_grad(*grad_out, tape, l);
      append_grad(*grad_out, tape, r);
    }
    return v;
  };

  std::vector<double> analytic;
  eval(x0, &analytic);
  return check_gradient(
      name, [&](const std::vector<double>& x) { return eval(x, nullptr); }, analytic, x0);
}

}  // namespace

std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed) {
  Rng root(seed);
  std::vector<GradCheckResult> out;

  auto run = [&](TapeCheck chk, const char* stream) {
    out.push_back(chk.run(root.stream(stream)));
  };

  // conv2d: gradients w.r.t. input, weight and bias, strided + padded cases
  run({"conv2d_s1p1",
       {Shape{2, 3, 6, 6}, Shape{4, 3, 3, 3}, Shape{4, 1, 1, 1}},
       [](ad::Tape& t, std::vector<ad::Var>& v) {
         return sum_sq(t, t.conv2d(v[0], v[1], v[2], {.stride = 1, .pad = 1}));
       }},
      "conv2d_a");
  run({"conv2d_s2p0",
       {Shape{1, 2, 7, 7}, Shape{3, 2, 3, 3}, Shape{3, 1, 1, 1}},
       [](ad::Tape& t, std::vector<ad::Var>& v) {
         return sum_sq(t, t.conv2d(v[0], v[1], v[2], {.stride = 2, .pad = 0}));
       }},
      "conv2d_b");
  run({"conv2d_dilated",
       {Shape{1, 2, 9, 9}, Shape{2, 2, 3, 3}, Shape{2, 1, 1, 1}},
       [](ad::Tape& t, std::vector<ad::Var>& v) {
         return sum_sq(t, t.conv2d(v[0], v[1], v[2], {.stride = 1, .pad = 2, .dilation = 2}));
       }},
      "conv2d_c");

  run({"sigmoid",
       {Shape{2, 3, 4, 4}},
       [](ad::Tape& t, std::vector<ad::Var>& v) { return sum_sq(t, t.sigmoid(v[0])); }},
      "sigmoid");
  run({"global_avg_pool",
       {Shape{2, 5, 6, 7}},
       [](ad::Tape& t, std::vector<ad::Var>& v) { return sum_sq(t, t.global_avg_pool(v[0])); }},
      "gap");
  run({"softmax2",
       {Shape{1, 2, 4, 4}},
       [](ad::Tape& t, std::vector<ad::Var>& v) { return sum_sq(t, t.softmax2(v[0])); }},
      "softmax");

  // softmax + cross entropy in isolation: an all-negative assignment makes
  // the loss op a pure background CE over the score map
  {
    Rng rng = root.stream("softmax_ce");
    const int rows = 4, cols = 4;
    const MapGeometry geom = MapGeometry::centered(8 * cols + 7, rows, cols, 8);
    LabelAssignment lab;
    lab.rows = rows;
    lab.cols = cols;
    lab.cls.assign(static_cast<size_t>(rows) * cols, PointLabel::NEG);
    lab.d_hat = Tensor(Shape{1, 4, rows, cols});
    const Shape ls{1, 2, rows, cols}, rs{1, 4, rows, cols};
    std::vector<double> x0 = random_vec(static_cast<size_t>(ls.numel() + rs.numel()), rng, 0.6);
    auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
      ad::Tape tape;
      ad::Var l = tape.leaf(tensor_from(ls, x, 0), grad_out != nullptr);
      ad::Var r = tape.leaf(tensor_from(rs, x, static_cast<size_t>(ls.numel())), grad_out != nullptr);
      LossResult res = total_loss(tape, l, r, lab, geom, LossOptions{});
      if (grad_out) {
        tape.backward(res.loss);
        append_grad(*grad_out, tape, l);
        if (tape.has_grad(r))
          append_grad(*grad_out, tape, r);
        else
          grad_out->insert(grad_out->end(), static_cast<size_t>(rs.numel()), 0.0);
      }
      return tape.value(res.loss).item();
    };
    std::vector<double> analytic;
    eval(x0, &analytic);
    out.push_back(check_gradient(
        "softmax_ce", [&](const std::vector<double>& x) { return eval(x, nullptr); },
        analytic, x0));
  }
  run({"dw_xcorr",
       {Shape{1, 3, 3, 3}, Shape{1, 3, 7, 7}},
       [](ad::Tape& t, std::vector<ad::Var>& v) { return sum_sq(t, t.dw_xcorr(v[0], v[1])); }},
      "dwx");
  run({"elementwise_broadcast",
       {Shape{2, 3, 4, 4}, Shape{2, 3, 1, 1}},
       [](ad::Tape& t, std::vector<ad::Var>& v) {
         return t.sum(t.mul(t.add(v[0], v[1]), v[1]));
       }},
      "bcast");
  run({"center_crop",
       {Shape{1, 2, 9, 9}},
       [](ad::Tape& t, std::vector<ad::Var>& v) { return sum_sq(t, t.center_crop(v[0], 5)); }},
      "crop");
  run({"exp_scale",
       {Shape{1, 4, 3, 3}},
       [](ad::Tape& t, std::vector<ad::Var>& v) { return sum_sq(t, t.exp_scale(v[0], 8.0)); }},
      "exps");
  run({"fuse3",
       {Shape{1, 2, 3, 3}, Shape{1, 2, 3, 3}, Shape{1, 2, 3, 3}, Shape{1, 3, 1, 1}},
       [](ad::Tape& t, std::vector<ad::Var>& v) {
         return sum_sq(t, t.fuse3({v[0], v[1], v[2]}, v[3]));
       }},
      "fuse3");

  // scalar losses through the fused op's machinery: smooth_l1 and iou_loss
  // as functions of the raw regression channels at a single positive point
  {
    Rng rng = root.stream("sl1");
    const MapGeometry geom = MapGeometry::centered(15, 1, 1, 8);
    LabelAssignment lab;
    lab.rows = lab.cols = 1;
    lab.cls = {PointLabel::POS};
    lab.d_hat = Tensor(Shape{1, 4, 1, 1});
    lab.gt = BBox{7.0, 7.0, 9.0, 11.0};
    lab.has_gt = true;
    lab.d_hat(0, 0, 0, 0) = 7.0 - lab.gt.x1();
    lab.d_hat(0, 1, 0, 0) = 7.0 - lab.gt.y1();
    lab.d_hat(0, 2, 0, 0) = lab.gt.x2() - 7.0;
    lab.d_hat(0, 3, 0, 0) = lab.gt.y2() - 7.0;
    LossOptions opt;
    opt.corrective = false;  // isolate the regression path
    const Shape ls{1, 2, 1, 1}, rs{1, 4, 1, 1};
    std::vector<double> x0 = random_vec(6, rng, 0.4, 1e-3);
    auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
      ad::Tape tape;
      ad::Var l = tape.leaf(tensor_from(ls, x, 0), grad_out != nullptr);
      ad::Var r = tape.leaf(tensor_from(rs, x, 2), grad_out != nullptr);
      LossResult res = total_loss(tape, l, r, lab, geom, opt);
      if (grad_out) {
        tape.backward(res.loss);
        append_grad(*grad_out, tape, l);
        append_grad(*grad_out, tape, r);
      }
      return tape.value(res.loss).item();
    };
    std::vector<double> analytic;
    eval(x0, &analytic);
    out.push_back(check_gradient(
        "smooth_l1_iou_loss", [&](const std::vector<double>& x) { return eval(x, nullptr); },
        analytic, x0));
  }

  out.push_back(check_total_loss("pos_loss_detached", root.stream("pos_det"), true, false));
  out.push_back(check_total_loss("pos_loss_coefficient_grad", root.stream("pos_cg"), true, true));
  out.push_back(check_total_loss("total_loss", root.stream("total"), true, false));
  out.push_back(check_total_loss("total_loss_plain", root.stream("plain"), false, false));

  // module-level compositions: thm_reduce, classify, regress, match
  {
    ModelConfig mc;
    mc.backbone.stem_channels = 4;
    mc.backbone.block_channels = {4, 6, 8};
    mc.matcher.out_channels = 4;
    mc.matcher.squeeze_ratio = 2;
    mc.matcher.template_crop = 3;
    mc.head.mid_channels = 4;
    Model model(mc);
    model.init_params(Rng(seed).stream("gradcheck_model"));

    // thm_reduce on level 0, gradients w.r.t. the THM parameter tensors + input
    {
      Rng rng = root.stream("thm");
      const Shape fs{1, 4, 5, 5};
      const std::vector<std::string> pnames = {
          "matcher.l0.s.reduce.weight", "matcher.l0.s.reduce.bias",
          "matcher.l0.s.squeeze.weight", "matcher.l0.s.squeeze.bias",
          "matcher.l0.s.excite.weight", "matcher.l0.s.excite.bias"};
      std::vector<Shape> shapes = {fs};
      for (const auto& n : pnames) shapes.push_back(model.params().at(n).shape());
      size_t total = 0;
      for (const Shape& s : shapes) total += static_cast<size_t>(s.numel());
      std::vector<double> x0 = random_vec(total, rng, 0.5, 1e-3);
      auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
        ad::Tape tape;
        ParamBinding pb;
        pb.tape = &tape;
        std::vector<ad::Var> leaves;
        size_t off = 0;
        for (size_t i = 0; i < shapes.size(); ++i) {
          leaves.push_back(tape.leaf(tensor_from(shapes[i], x, off), grad_out != nullptr));
          off += static_cast<size_t>(shapes[i].numel());
        }
        for (size_t i = 0; i < pnames.size(); ++i) pb.vars.emplace(pnames[i], leaves[i + 1]);
        ad::Var y = model.matcher().thm_reduce(tape, leaves[0], 0, Branch::SEARCH, pb);
        ad::Var s = sum_sq(tape, y);
        if (grad_out) {
          tape.backward(s);
          for (ad::Var l : leaves) append_grad(*grad_out, tape, l);
        }
        return tape.value(s).item();
      };
      std::vector<double> analytic;
      eval(x0, &analytic);
      out.push_back(check_gradient(
          "thm_reduce", [&](const std::vector<double>& x) { return eval(x, nullptr); },
          analytic, x0));
    }

    // classify / regress / end-to-end match with frozen backbone features
    auto head_check = [&](const std::string& name, bool classify_branch) {
      Rng rng = root.stream(name);
      const Shape fs{1, 4, 5, 5};
      const std::vector<std::string> pnames =
          classify_branch
              ? std::vector<std::string>{"head.cls.conv1.weight", "head.cls.conv1.bias",
                                         "head.cls.conv2.weight", "head.cls.conv2.bias"}
              : std::vector<std::string>{"head.reg.conv1.weight", "head.reg.conv1.bias",
                                         "head.reg.conv2.weight", "head.reg.conv2.bias"};
      std::vector<Shape> shapes = {fs};
      for (const auto& n : pnames) shapes.push_back(model.params().at(n).shape());
      size_t total = 0;
      for (const Shape& s : shapes) total += static_cast<size_t>(s.numel());
      std::vector<double> x0 = random_vec(total, rng, 0.5, 1e-3);
      auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
        ad::Tape tape;
        ParamBinding pb;
        pb.tape = &tape;
        std::vector<ad::Var> leaves;
        size_t off = 0;
        for (size_t i = 0; i < shapes.size(); ++i) {
          leaves.push_back(tape.leaf(tensor_from(shapes[i], x, off), grad_out != nullptr));
          off += static_cast<size_t>(shapes[i].numel());
        }
        for (size_t i = 0; i < pnames.size(); ++i) pb.vars.emplace(pnames[i], leaves[i + 1]);
        ad::Var y = classify_branch ? model.head().classify(tape, leaves[0], pb).probs
                                    : model.head().regress(tape, leaves[0], pb);
        ad::Var s = sum_sq(tape, y);
        if (grad_out) {
          tape.backward(s);
          for (ad::Var l : leaves) append_grad(*grad_out, tape, l);
        }
        return tape.value(s).item();
      };
      std::vector<double> analytic;
      eval(x0, &analytic);
      out.push_back(check_gradient(
          name, [&](const std::vector<double>& x) { return eval(x, nullptr); }, analytic, x0));
    };
    head_check("classify", true);
    head_check("regress", false);

    // match: THM params of all levels/branches plus fusion logits, backbone
    // features fixed
    {
      Rng rng = root.stream("match");
      std::vector<std::string> pnames;
      for (int l = 0; l < 3; ++l)
        for (const char* br : {"t", "s"})
          for (const char* pc : {"reduce", "squeeze", "excite"})
            for (const char* leaf : {"weight", "bias"})
              pnames.push_back("matcher.l" + std::to_string(l) + "." + br + "." + pc + "." + leaf);
      pnames.push_back("matcher.fusion.alpha");

      const std::array<Shape, 3> tpl_shapes{Shape{1, 4, 5, 5}, Shape{1, 6, 5, 5}, Shape{1, 8, 5, 5}};
      const std::array<Shape, 3> srch_shapes{Shape{1, 4, 9, 9}, Shape{1, 6, 9, 9}, Shape{1, 8, 9, 9}};
      std::vector<Shape> shapes;
      for (const Shape& s : tpl_shapes) shapes.push_back(s);
      for (const Shape& s : srch_shapes) shapes.push_back(s);
      for (const auto& n : pnames) shapes.push_back(model.params().at(n).shape());
      size_t total = 0;
      for (const Shape& s : shapes) total += static_cast<size_t>(s.numel());
      std::vector<double> x0 = random_vec(total, rng, 0.3, 1e-3);
      auto eval = [&](const std::vector<double>& x, std::vector<double>* grad_out) {
        ad::Tape tape;
        ParamBinding pb;
        pb.tape = &tape;
        std::vector<ad::Var> leaves;
        size_t off = 0;
        for (size_t i = 0; i < shapes.size(); ++i) {
          // backbone features fixed: only parameter leaves carry gradients
          const bool rg = grad_out != nullptr && i >= 6;
          leaves.push_back(tape.leaf(tensor_from(shapes[i], x, off), rg));
          off += static_cast<size_t>(shapes[i].numel());
        }
        for (size_t i = 0; i < pnames.size(); ++i) pb.vars.emplace(pnames[i], leaves[i + 6]);
        const std::array<ad::Var, 3> tpl{leaves[0], leaves[1], leaves[2]};
        const std::array<ad::Var, 3> srch{leaves[3], leaves[4], leaves[5]};
        Matcher::MatchOut m = model.matcher().match(tape, tpl, srch, pb);
        ad::Var s = sum_sq(tape, m.fused);
        if (grad_out) {
          tape.backward(s);
          for (size_t i = 6; i < leaves.size(); ++i) append_grad(*grad_out, tape, leaves[i]);
        }
        return tape.value(s).item();
      };
      std::vector<double> analytic;
      eval(x0, &analytic);
      // frozen feature entries carry no gradient; compare only parameters
      std::vector<double> x_params(x0.begin() + (x0.size() - analytic.size()), x0.end());
      size_t feat_count = x0.size() - analytic.size();
      auto f_params = [&](const std::vector<double>& xp) {
        std::vector<double> full(x0.begin(), x0.begin() + static_cast<long>(feat_count));
        full.insert(full.end(), xp.begin(), xp.end());
        return eval(full, nullptr);
      };
      out.push_back(check_gradient("match", f_params, analytic, x_params));
    }
  }

  return out;
}

}  // namespace thn
