#include "thn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace thn::ad {

namespace {

// Output extent of a strided, padded, dilated correlation. The toy shapes in
// this project are constructed so the division is exact; anything else is a
// caller bug and reported as such.
int conv_out_extent(int in, int k, int stride, int pad, int dil, const char* axis) {
  const int span = in + 2 * pad - dil * (k - 1) - 1;
  if (span < 0 || span % stride != 0)
    throw DimensionError(std::string("conv2d: ") + axis + " extent " + std::to_string(in) +
                         " with kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                         ", pad " + std::to_string(pad) + ", dilation " + std::to_string(dil) +
                         " does not divide exactly");
  return span / stride + 1;
}

bool is_bcast_shape(const Shape& a, const Shape& b) {
  return b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1;
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  check_same_tape(v);
  return nodes_[static_cast<size_t>(v.idx)];
}

Tape::Node& Tape::node(Var v) {
  check_same_tape(v);
  return nodes_[static_cast<size_t>(v.idx)];
}

void Tape::check_same_tape(Var v) const {
  if (v.tape != this || v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
    throw UsageError("tape: variable does not belong to this tape");
}

Var Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&, const Tensor&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty())
    throw UsageError("tape: no gradient recorded for node " + std::to_string(v.idx));
  return n.grad;
}

Tensor& Tape::grad_buf(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::backward(Var output) {
  const Node& out = node(output);
  if (out.value.size() != 1)
    throw UsageError("backward: output must be scalar, got " + out.value.shape().str());
  if (backward_done_)
    throw UsageError("backward: tape already differentiated");
  backward_done_ = true;
  grad_buf(output)[0] = 1.0;
  for (int i = output.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// conv2d

Var Tape::conv2d(Var input, Var weight, Var bias, ConvSpec spec) {
  const Tensor& x = value(input);
  const Tensor& w = value(weight);
  const Shape xs = x.shape(), ws = w.shape();
  if (ws.h != ws.w || ws.h < 1)
    throw DimensionError("conv2d: kernel must be square and >=1, got " + ws.str());
  if (xs.c != ws.c)
    throw DimensionError("conv2d: input channels " + xs.str() + " do not match kernel " + ws.str());
  if (spec.stride < 1 || spec.pad < 0 || spec.dilation < 1)
    throw DimensionError("conv2d: invalid stride/pad/dilation");
  const bool has_bias = bias.valid();
  if (has_bias) {
    const Shape bs = value(bias).shape();
    if (bs.numel() != ws.n)
      throw DimensionError("conv2d: bias length " + bs.str() + " does not match out channels " + ws.str());
  }

  const int k = ws.h, s = spec.stride, p = spec.pad, d = spec.dilation;
  const int ho = conv_out_extent(xs.h, k, s, p, d, "height");
  const int wo = conv_out_extent(xs.w, k, s, p, d, "width");
  Tensor out(Shape{xs.n, ws.n, ho, wo});

  const double* bptr = has_bias ? value(bias).data() : nullptr;
  for (int n = 0; n < xs.n; ++n) {
    for (int o = 0; o < ws.n; ++o) {
      double* op = out.plane(n, o);
      if (has_bias) {
        const double bv = bptr[o];
        for (int i = 0; i < ho * wo; ++i) op[i] = bv;
      }
      for (int i = 0; i < xs.c; ++i) {
        const double* ip = x.plane(n, i);
        const double* wp = w.plane(o, i);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wv = wp[ky * k + kx];
            if (wv == 0.0) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const int yi = oy * s - p + ky * d;
              if (yi < 0 || yi >= xs.h) continue;
              const double* irow = ip + static_cast<std::int64_t>(yi) * xs.w;
              double* orow = op + static_cast<std::int64_t>(oy) * wo;
              // x bounds with xi = ox*s - p + kx*d inside [0, w)
              int ox0 = 0;
              while (ox0 < wo && ox0 * s - p + kx * d < 0) ++ox0;
              int ox1 = wo;
              while (ox1 > ox0 && (ox1 - 1) * s - p + kx * d >= xs.w) --ox1;
              const int base = -p + kx * d;
              if (s == 1) {
                const double* irow2 = irow + base;
                for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * irow2[ox];
              } else {
                for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * irow[ox * s + base];
              }
            }
          }
        }
      }
    }
  }

  const bool rg = requires_grad(input) || requires_grad(weight) ||
                  (has_bias && requires_grad(bias));
  const int in_i = input.idx, w_i = weight.idx, b_i = has_bias ? bias.idx : -1;
  return push(std::move(out), rg, [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.nodes_[in_i].value;
    const Tensor& wv = t.nodes_[w_i].value;
    const Shape xsh = xv.shape(), wsh = wv.shape();
    const Shape gs = g.shape();
    const bool need_x = t.nodes_[in_i].requires_grad;
    const bool need_w = t.nodes_[w_i].requires_grad;
    const bool need_b = b_i >= 0 && t.nodes_[b_i].requires_grad;

    if (need_b) {
      Tensor& gb = t.grad_buf(Var{&t, b_i});
      for (int n = 0; n < gs.n; ++n)
        for (int o = 0; o < gs.c; ++o) {
          const double* gp = g.plane(n, o);
          double acc = 0.0;
          for (int i2 = 0; i2 < gs.h * gs.w; ++i2) acc += gp[i2];
          gb[o] += acc;
        }
    }
    if (need_x) {
      Tensor& gx = t.grad_buf(Var{&t, in_i});
      for (int n = 0; n < gs.n; ++n)
        for (int o = 0; o < gs.c; ++o) {
          const double* gp = g.plane(n, o);
          for (int i = 0; i < xsh.c; ++i) {
            double* gxp = gx.plane(n, i);
            const double* wp = wv.plane(o, i);
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const double wq = wp[ky * k + kx];
                if (wq == 0.0) continue;
                for (int oy = 0; oy < gs.h; ++oy) {
                  const int yi = oy * s - p + ky * d;
                  if (yi < 0 || yi >= xsh.h) continue;
                  double* grow = gxp + static_cast<std::int64_t>(yi) * xsh.w;
                  const double* gor = gp + static_cast<std::int64_t>(oy) * gs.w;
                  for (int ox = 0; ox < gs.w; ++ox) {
                    const int xi = ox * s - p + kx * d;
                    if (xi < 0 || xi >= xsh.w) continue;
                    grow[xi] += wq * gor[ox];
                  }
                }
              }
          }
        }
    }
    if (need_w) {
      Tensor& gw = t.grad_buf(Var{&t, w_i});
      for (int n = 0; n < gs.n; ++n)
        for (int o = 0; o < gs.c; ++o) {
          const double* gp = g.plane(n, o);
          for (int i = 0; i < xsh.c; ++i) {
            const double* ip = xv.plane(n, i);
            double* gwp = gw.plane(o, i);
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                double acc = 0.0;
                for (int oy = 0; oy < gs.h; ++oy) {
                  const int yi = oy * s - p + ky * d;
                  if (yi < 0 || yi >= xsh.h) continue;
                  const double* irow = ip + static_cast<std::int64_t>(yi) * xsh.w;
                  const double* gor = gp + static_cast<std::int64_t>(oy) * gs.w;
                  for (int ox = 0; ox < gs.w; ++ox) {
                    const int xi = ox * s - p + kx * d;
                    if (xi < 0 || xi >= xsh.w) continue;
                    acc += gor[ox] * irow[xi];
                  }
                }
                gwp[ky * k + kx] += acc;
              }
          }
        }
    }
  });
}

// ---------------------------------------------------------------------------
// pointwise ops

Var Tape::relu(Var x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const int xi = x.idx;
  return push(std::move(out), requires_grad(x), [xi](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    const Tensor& xv = t.nodes_[xi].value;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var Tape::sigmoid(Var x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    // branch on sign for stability at large |v|
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  const int xi = x.idx, oi = size();
  return push(std::move(out), requires_grad(x), [xi, oi](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    const Tensor& y = t.nodes_[oi].value;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::exp_scale(Var x, double scale) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = scale * std::exp(xv[i]);
  const int xi = x.idx, oi = size();
  return push(std::move(out), requires_grad(x), [xi, oi](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    const Tensor& y = t.nodes_[oi].value;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
}

Var Tape::scale(Var x, double k) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = k * xv[i];
  const int xi = x.idx;
  return push(std::move(out), requires_grad(x), [xi, k](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += k * g[i];
  });
}

// ---------------------------------------------------------------------------
// binary ops with (n,c,1,1) broadcast of the right operand

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const Shape as = av.shape(), bs = bv.shape();
  const bool bcast = is_bcast_shape(as, bs) && !(as == bs);
  if (!(as == bs) && !bcast)
    throw DimensionError("add: incompatible shapes " + as.str() + " vs " + bs.str());

  Tensor out(as);
  if (!bcast) {
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    const int hw = as.h * as.w;
    for (int n = 0; n < as.n; ++n)
      for (int c = 0; c < as.c; ++c) {
        const double k = bv(n, c, 0, 0);
        const double* ap = av.plane(n, c);
        double* op = out.plane(n, c);
        for (int i = 0; i < hw; ++i) op[i] = ap[i] + k;
      }
  }
  const int ai = a.idx, bi = b.idx;
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ai, bi, bcast](Tape& t, const Tensor& g) {
                if (t.nodes_[ai].requires_grad) {
                  Tensor& ga = t.grad_buf(Var{&t, ai});
                  for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (t.nodes_[bi].requires_grad) {
                  Tensor& gb = t.grad_buf(Var{&t, bi});
                  if (!bcast) {
                    for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                  } else {
                    const Shape gs = g.shape();
                    for (int n = 0; n < gs.n; ++n)
                      for (int c = 0; c < gs.c; ++c) {
                        const double* gp = g.plane(n, c);
                        double acc = 0.0;
                        for (int i = 0; i < gs.h * gs.w; ++i) acc += gp[i];
                        gb(n, c, 0, 0) += acc;
                      }
                  }
                }
              });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const Shape as = av.shape(), bs = bv.shape();
  const bool bcast = is_bcast_shape(as, bs) && !(as == bs);
  if (!(as == bs) && !bcast)
    throw DimensionError("mul: incompatible shapes " + as.str() + " vs " + bs.str());

  Tensor out(as);
  if (!bcast) {
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  } else {
    const int hw = as.h * as.w;
    for (int n = 0; n < as.n; ++n)
      for (int c = 0; c < as.c; ++c) {
        const double k = bv(n, c, 0, 0);
        const double* ap = av.plane(n, c);
        double* op = out.plane(n, c);
        for (int i = 0; i < hw; ++i) op[i] = ap[i] * k;
      }
  }
  const int ai = a.idx, bi = b.idx;
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ai, bi, bcast](Tape& t, const Tensor& g) {
                const Tensor& av = t.nodes_[ai].value;
                const Tensor& bv = t.nodes_[bi].value;
                const Shape gs = g.shape();
                if (t.nodes_[ai].requires_grad) {
                  Tensor& ga = t.grad_buf(Var{&t, ai});
                  if (!bcast) {
                    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                  } else {
                    const int hw = gs.h * gs.w;
                    for (int n = 0; n < gs.n; ++n)
                      for (int c = 0; c < gs.c; ++c) {
                        const double k = bv(n, c, 0, 0);
                        const double* gp = g.plane(n, c);
                        double* gap = ga.plane(n, c);
                        for (int i = 0; i < hw; ++i) gap[i] += gp[i] * k;
                      }
                  }
                }
                if (t.nodes_[bi].requires_grad) {
                  Tensor& gb = t.grad_buf(Var{&t, bi});
                  if (!bcast) {
                    for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                  } else {
                    const int hw = gs.h * gs.w;
                    for (int n = 0; n < gs.n; ++n)
                      for (int c = 0; c < gs.c; ++c) {
                        const double* gp = g.plane(n, c);
                        const double* ap = av.plane(n, c);
                        double acc = 0.0;
                        for (int i = 0; i < hw; ++i) acc += gp[i] * ap[i];
                        gb(n, c, 0, 0) += acc;
                      }
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// spatial ops

Var Tape::center_crop(Var x, int size) {
  const Tensor& xv = value(x);
  const Shape xs = xv.shape();
  if (size > xs.h || size > xs.w)
    throw DimensionError("center_crop: size " + std::to_string(size) + " exceeds input " + xs.str());
  if ((xs.h - size) % 2 != 0 || (xs.w - size) % 2 != 0)
    throw DimensionError("center_crop: off-center crop of " + std::to_string(size) + " from " + xs.str());
  const int oy = (xs.h - size) / 2, ox = (xs.w - size) / 2;
  Tensor out(Shape{xs.n, xs.c, size, size});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const double* ip = xv.plane(n, c);
      double* op = out.plane(n, c);
      for (int y = 0; y < size; ++y)
        for (int xq = 0; xq < size; ++xq)
          op[y * size + xq] = ip[(y + oy) * xs.w + (xq + ox)];
    }
  const int xi = x.idx;
  return push(std::move(out), requires_grad(x), [xi, oy, ox, size](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    const Shape xs = gx.shape();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const double* gp = g.plane(n, c);
        double* gxp = gx.plane(n, c);
        for (int y = 0; y < size; ++y)
          for (int xq = 0; xq < size; ++xq)
            gxp[(y + oy) * xs.w + (xq + ox)] += gp[y * size + xq];
      }
  });
}

Var Tape::global_avg_pool(Var x) {
  const Tensor& xv = value(x);
  const Shape xs = xv.shape();
  if (xs.h < 1 || xs.w < 1)
    throw DimensionError("global_avg_pool: empty spatial plane in " + xs.str());
  Tensor out(Shape{xs.n, xs.c, 1, 1});
  const int hw = xs.h * xs.w;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const double* ip = xv.plane(n, c);
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += ip[i];
      out(n, c, 0, 0) = acc / hw;
    }
  const int xi = x.idx;
  return push(std::move(out), requires_grad(x), [xi](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    const Shape xs = gx.shape();
    const int hw = xs.h * xs.w;
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const double k = g(n, c, 0, 0) / hw;
        double* gxp = gx.plane(n, c);
        for (int i = 0; i < hw; ++i) gxp[i] += k;
      }
  });
}

Var Tape::softmax2(Var x) {
  const Tensor& xv = value(x);
  const Shape xs = xv.shape();
  if (xs.c != 2)
    throw DimensionError("softmax2: expected 2 channels, got " + xs.str());
  Tensor out(xs);
  for (int n = 0; n < xs.n; ++n) {
    const double* p0 = xv.plane(n, 0);
    const double* p1 = xv.plane(n, 1);
    double* o0 = out.plane(n, 0);
    double* o1 = out.plane(n, 1);
    for (int i = 0; i < xs.h * xs.w; ++i) {
      const double m = std::max(p0[i], p1[i]);
      const double e0 = std::exp(p0[i] - m), e1 = std::exp(p1[i] - m);
      const double z = e0 + e1;
      o0[i] = e0 / z;
      o1[i] = e1 / z;
    }
  }
  const int xi = x.idx, oi = size();
  return push(std::move(out), requires_grad(x), [xi, oi](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    const Tensor& y = t.nodes_[oi].value;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    const Shape s = y.shape();
    for (int n = 0; n < s.n; ++n) {
      const double* y0 = y.plane(n, 0);
      const double* y1 = y.plane(n, 1);
      const double* g0 = g.plane(n, 0);
      const double* g1 = g.plane(n, 1);
      double* gx0 = gx.plane(n, 0);
      double* gx1 = gx.plane(n, 1);
      for (int i = 0; i < s.h * s.w; ++i) {
        const double dot = g0[i] * y0[i] + g1[i] * y1[i];
        gx0[i] += y0[i] * (g0[i] - dot);
        gx1[i] += y1[i] * (g1[i] - dot);
      }
    }
  });
}

Var Tape::dw_xcorr(Var tpl, Var srch) {
  const Tensor& tv = value(tpl);
  const Tensor& sv = value(srch);
  const Shape ts = tv.shape(), ss = sv.shape();
  if (ts.n != ss.n || ts.c != ss.c)
    throw DimensionError("dw_xcorr: batch/channel mismatch " + ts.str() + " vs " + ss.str());
  if (ts.h > ss.h || ts.w > ss.w)
    throw DimensionError("dw_xcorr: template " + ts.str() + " larger than search " + ss.str());
  const int ho = ss.h - ts.h + 1, wo = ss.w - ts.w + 1;
  Tensor out(Shape{ts.n, ts.c, ho, wo});
  for (int n = 0; n < ts.n; ++n)
    for (int c = 0; c < ts.c; ++c) {
      const double* tp = tv.plane(n, c);
      const double* sp = sv.plane(n, c);
      double* op = out.plane(n, c);
      for (int u = 0; u < ts.h; ++u)
        for (int v = 0; v < ts.w; ++v) {
          const double tw = tp[u * ts.w + v];
          if (tw == 0.0) continue;
          for (int y = 0; y < ho; ++y) {
            const double* srow = sp + static_cast<std::int64_t>(y + u) * ss.w + v;
            double* orow = op + static_cast<std::int64_t>(y) * wo;
            for (int x = 0; x < wo; ++x) orow[x] += tw * srow[x];
          }
        }
    }
  const int ti = tpl.idx, si = srch.idx;
  return push(std::move(out), requires_grad(tpl) || requires_grad(srch),
              [ti, si](Tape& t, const Tensor& g) {
                const Tensor& tv = t.nodes_[ti].value;
                const Tensor& sv = t.nodes_[si].value;
                const Shape ts = tv.shape(), ss = sv.shape(), gs = g.shape();
                if (t.nodes_[ti].requires_grad) {
                  Tensor& gt = t.grad_buf(Var{&t, ti});
                  for (int n = 0; n < ts.n; ++n)
                    for (int c = 0; c < ts.c; ++c) {
                      const double* sp = sv.plane(n, c);
                      const double* gp = g.plane(n, c);
                      double* gtp = gt.plane(n, c);
                      for (int u = 0; u < ts.h; ++u)
                        for (int v = 0; v < ts.w; ++v) {
                          double acc = 0.0;
                          for (int y = 0; y < gs.h; ++y) {
                            const double* srow = sp + static_cast<std::int64_t>(y + u) * ss.w + v;
                            const double* grow = gp + static_cast<std::int64_t>(y) * gs.w;
                            for (int x = 0; x < gs.w; ++x) acc += grow[x] * srow[x];
                          }
                          gtp[u * ts.w + v] += acc;
                        }
                    }
                }
                if (t.nodes_[si].requires_grad) {
                  Tensor& gsb = t.grad_buf(Var{&t, si});
                  for (int n = 0; n < ts.n; ++n)
                    for (int c = 0; c < ts.c; ++c) {
                      const double* tp = tv.plane(n, c);
                      const double* gp = g.plane(n, c);
                      double* gsp = gsb.plane(n, c);
                      for (int u = 0; u < ts.h; ++u)
                        for (int v = 0; v < ts.w; ++v) {
                          const double tw = tp[u * ts.w + v];
                          if (tw == 0.0) continue;
                          for (int y = 0; y < gs.h; ++y) {
                            double* grow = gsp + static_cast<std::int64_t>(y + u) * ss.w + v;
                            const double* gor = gp + static_cast<std::int64_t>(y) * gs.w;
                            for (int x = 0; x < gs.w; ++x) grow[x] += tw * gor[x];
                          }
                        }
                    }
                }
              });
}

Var Tape::fuse3(const std::array<Var, 3>& levels, Var alpha) {
  const Shape s0 = value(levels[0]).shape();
  for (int l = 1; l < 3; ++l)
    if (!(value(levels[l]).shape() == s0))
      throw DimensionError("fuse3: level shapes differ: " + s0.str() + " vs " +
                           value(levels[l]).shape().str());
  const Tensor& av = value(alpha);
  if (av.size() != 3)
    throw DimensionError("fuse3: alpha must have 3 entries, got " + av.shape().str());

  double m = std::max({av[0], av[1], av[2]});
  double e[3], z = 0.0;
  for (int l = 0; l < 3; ++l) {
    e[l] = std::exp(av[l] - m);
    z += e[l];
  }
  double wgt[3];
  for (int l = 0; l < 3; ++l) wgt[l] = e[l] / z;

  Tensor out(s0);
  for (int l = 0; l < 3; ++l) {
    const Tensor& lv = value(levels[l]);
    const double wl = wgt[l];
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += wl * lv[i];
  }

  bool rg = requires_grad(alpha);
  for (const Var& l : levels) rg = rg || requires_grad(l);
  const std::array<int, 3> li{levels[0].idx, levels[1].idx, levels[2].idx};
  const int ai = alpha.idx;
  const std::array<double, 3> wsave{wgt[0], wgt[1], wgt[2]};
  return push(std::move(out), rg, [li, ai, wsave](Tape& t, const Tensor& g) {
    double dots[3] = {0, 0, 0};
    const bool need_alpha = t.nodes_[ai].requires_grad;
    for (int l = 0; l < 3; ++l) {
      const Tensor& lv = t.nodes_[li[l]].value;
      if (need_alpha)
        for (std::int64_t i = 0; i < g.size(); ++i) dots[l] += g[i] * lv[i];
      if (t.nodes_[li[l]].requires_grad) {
        Tensor& gl = t.grad_buf(Var{&t, li[l]});
        const double wl = wsave[l];
        for (std::int64_t i = 0; i < g.size(); ++i) gl[i] += wl * g[i];
      }
    }
    if (need_alpha) {
      Tensor& ga = t.grad_buf(Var{&t, ai});
      const double mix = wsave[0] * dots[0] + wsave[1] * dots[1] + wsave[2] * dots[2];
      for (int l = 0; l < 3; ++l) ga[l] += wsave[l] * (dots[l] - mix);
    }
  });
}

Var Tape::sum(Var x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
  const int xi = x.idx;
  return push(Tensor::scalar(acc), requires_grad(x), [xi](Tape& t, const Tensor& g) {
    if (!t.nodes_[xi].requires_grad) return;
    Tensor& gx = t.grad_buf(Var{&t, xi});
    const double gv = g[0];
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += gv;
  });
}

Var Tape::custom(Tensor value, const std::vector<Var>& inputs,
                 std::function<void(Tape&, const Tensor&)> backprop) {
  bool rg = false;
  for (const Var& v : inputs) {
    check_same_tape(v);
    rg = rg || requires_grad(v);
  }
  return push(std::move(value), rg, std::move(backprop));
}

}  // namespace thn::ad
