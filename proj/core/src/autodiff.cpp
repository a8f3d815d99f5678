#include "ugmcs/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ugmcs/errors.hpp"

namespace ugmcs::ad {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require(bool cond, const char* msg) {
  if (!cond) throw invalid_input(msg);
}

} // namespace

Value Tape::make(Tensor v, bool requires_grad) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return &n;
}

Value Tape::leaf(Tensor v, bool requires_grad) {
  return make(std::move(v), requires_grad);
}

Value Tape::add(Value a, Value b) {
  require(a->value.same_shape(b->value), "ad::add: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
  Value o = make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, a, b] {
      const auto& g = o->grad.data;
      if (a->requires_grad) {
        ensure_grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) a->grad.data[i] += g[i];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) b->grad.data[i] += g[i];
      }
    };
  return o;
}

Value Tape::sub(Value a, Value b) {
  require(a->value.same_shape(b->value), "ad::sub: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
  Value o = make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, a, b] {
      const auto& g = o->grad.data;
      if (a->requires_grad) {
        ensure_grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) a->grad.data[i] += g[i];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) b->grad.data[i] -= g[i];
      }
    };
  return o;
}

Value Tape::mul(Value a, Value b) {
  require(a->value.same_shape(b->value), "ad::mul: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
  Value o = make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, a, b] {
      const auto& g = o->grad.data;
      if (a->requires_grad) {
        ensure_grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) a->grad.data[i] += g[i] * b->value.data[i];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) b->grad.data[i] += g[i] * a->value.data[i];
      }
    };
  return o;
}

Value Tape::scale(Value a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  Value o = make(std::move(out), a->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, a, c] {
      ensure_grad(a);
      for (std::size_t i = 0; i < o->grad.data.size(); ++i)
        a->grad.data[i] += c * o->grad.data[i];
    };
  return o;
}

Value Tape::relu(Value a) {
  Tensor out = a->value;
  for (double& v : out.data)
    if (v < 0.0) v = 0.0;
  Value o = make(std::move(out), a->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, a] {
      ensure_grad(a);
      for (std::size_t i = 0; i < o->grad.data.size(); ++i)
        if (a->value.data[i] > 0.0) a->grad.data[i] += o->grad.data[i];
    };
  return o;
}

Value Tape::sigmoid(Value a) {
  Tensor out = a->value;
  for (double& v : out.data) v = stable_sigmoid(v);
  Value o = make(std::move(out), a->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, a] {
      ensure_grad(a);
      for (std::size_t i = 0; i < o->grad.data.size(); ++i) {
        const double y = o->value.data[i];
        a->grad.data[i] += o->grad.data[i] * y * (1.0 - y);
      }
    };
  return o;
}

Value Tape::scalar_mul(Value s, Value x) {
  require(s->value.size() == 1, "ad::scalar_mul: s must be a single element");
  const double sv = s->value.data[0];
  Tensor out = x->value;
  for (double& v : out.data) v *= sv;
  Value o = make(std::move(out), s->requires_grad || x->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, s, x, sv] {
      const auto& g = o->grad.data;
      if (s->requires_grad) {
        ensure_grad(s);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x->value.data[i];
        s->grad.data[0] += acc;
      }
      if (x->requires_grad) {
        ensure_grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) x->grad.data[i] += sv * g[i];
      }
    };
  return o;
}

Value Tape::mul_spatial(Value x, Value m) {
  require(x->value.shape.size() == 3 && m->value.shape.size() == 3,
          "ad::mul_spatial: rank mismatch");
  require(m->value.dim(0) == 1 && m->value.dim(1) == x->value.dim(1) &&
              m->value.dim(2) == x->value.dim(2),
          "ad::mul_spatial: m must be {1,H,W} matching x");
  const int c_n = x->value.dim(0);
  const std::size_t plane = m->value.data.size();

  Tensor out = x->value;
  for (int c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      out.data[c * plane + i] *= m->value.data[i];

  Value o = make(std::move(out), x->requires_grad || m->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, x, m, c_n, plane] {
      if (x->requires_grad) {
        ensure_grad(x);
        for (int c = 0; c < c_n; ++c)
          for (std::size_t i = 0; i < plane; ++i)
            x->grad.data[c * plane + i] += o->grad.data[c * plane + i] * m->value.data[i];
      }
      if (m->requires_grad) {
        ensure_grad(m);
        for (int c = 0; c < c_n; ++c)
          for (std::size_t i = 0; i < plane; ++i)
            m->grad.data[i] += o->grad.data[c * plane + i] * x->value.data[c * plane + i];
      }
    };
  return o;
}

Value Tape::affine_scalars(const std::vector<std::pair<double, Value>>& terms) {
  Tensor out({1});
  bool rg = false;
  for (const auto& [c, v] : terms) {
    require(v->value.size() == 1, "ad::affine_scalars: non-scalar term");
    out.data[0] += c * v->value.data[0];
    rg = rg || v->requires_grad;
  }
  Value o = make(std::move(out), rg);
  if (o->requires_grad) {
    auto captured = terms;
    o->backprop = [o, captured] {
      for (const auto& [c, v] : captured) {
        if (!v->requires_grad) continue;
        ensure_grad(v);
        v->grad.data[0] += c * o->grad.data[0];
      }
    };
  }
  return o;
}

// ---- conv2d ----------------------------------------------------------------

Value Tape::conv2d(Value x, Value w, Value b, int pad) {
  require(x->value.shape.size() == 3, "ad::conv2d: x must be {C,H,W}");
  require(w->value.shape.size() == 4, "ad::conv2d: w must be {Co,Ci,kh,kw}");
  require(b->value.shape.size() == 1, "ad::conv2d: b must be {Co}");
  const int ci_n = x->value.dim(0), h = x->value.dim(1), wdt = x->value.dim(2);
  const int co_n = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  require(w->value.dim(1) == ci_n, "ad::conv2d: channel mismatch");
  require(b->value.dim(0) == co_n, "ad::conv2d: bias size mismatch");
  const int ho = h + 2 * pad - kh + 1;
  const int wo = wdt + 2 * pad - kw + 1;
  require(ho > 0 && wo > 0, "ad::conv2d: kernel larger than padded input");

  Tensor out({co_n, ho, wo});
  const double* xd = x->value.data.data();
  const double* wd = w->value.data.data();
  for (int co = 0; co < co_n; ++co) {
    double* op = &out.data[static_cast<std::size_t>(co) * ho * wo];
    std::fill(op, op + static_cast<std::size_t>(ho) * wo, b->value.data[co]);
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const double wv = wd[((static_cast<std::size_t>(co) * ci_n + ci) * kh + ky) * kw + kx];
          const int ox0 = std::max(0, pad - kx);
          const int ox1 = std::min(wo, wdt + pad - kx);
          if (ox0 >= ox1) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const double* xrow = &xd[(static_cast<std::size_t>(ci) * h + iy) * wdt];
            double* orow = &op[static_cast<std::size_t>(oy) * wo];
            for (int ox = ox0; ox < ox1; ++ox)
              orow[ox] += wv * xrow[ox + kx - pad];
          }
        }
      }
    }
  }

  Value o = make(std::move(out), x->requires_grad || w->requires_grad || b->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, x, w, b, pad, ci_n, h, wdt, co_n, kh, kw, ho, wo] {
      const double* gd = o->grad.data.data();
      if (b->requires_grad) {
        ensure_grad(b);
        for (int co = 0; co < co_n; ++co) {
          const double* gp = &gd[static_cast<std::size_t>(co) * ho * wo];
          double acc = 0.0;
          for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i) acc += gp[i];
          b->grad.data[co] += acc;
        }
      }
      if (w->requires_grad) {
        ensure_grad(w);
        const double* xd = x->value.data.data();
        for (int co = 0; co < co_n; ++co) {
          const double* gp = &gd[static_cast<std::size_t>(co) * ho * wo];
          for (int ci = 0; ci < ci_n; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int ox0 = std::max(0, pad - kx);
                const int ox1 = std::min(wo, wdt + pad - kx);
                if (ox0 >= ox1) continue;
                double acc = 0.0;
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  const double* xrow = &xd[(static_cast<std::size_t>(ci) * h + iy) * wdt];
                  const double* grow = &gp[static_cast<std::size_t>(oy) * wo];
                  for (int ox = ox0; ox < ox1; ++ox)
                    acc += grow[ox] * xrow[ox + kx - pad];
                }
                w->grad.data[((static_cast<std::size_t>(co) * ci_n + ci) * kh + ky) * kw + kx] += acc;
              }
            }
          }
        }
      }
      if (x->requires_grad) {
        ensure_grad(x);
        const double* wd = w->value.data.data();
        double* dx = x->grad.data.data();
        for (int co = 0; co < co_n; ++co) {
          const double* gp = &gd[static_cast<std::size_t>(co) * ho * wo];
          for (int ci = 0; ci < ci_n; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const double wv = wd[((static_cast<std::size_t>(co) * ci_n + ci) * kh + ky) * kw + kx];
                const int ox0 = std::max(0, pad - kx);
                const int ox1 = std::min(wo, wdt + pad - kx);
                if (ox0 >= ox1) continue;
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  double* dxrow = &dx[(static_cast<std::size_t>(ci) * h + iy) * wdt];
                  const double* grow = &gp[static_cast<std::size_t>(oy) * wo];
                  for (int ox = ox0; ox < ox1; ++ox)
                    dxrow[ox + kx - pad] += wv * grow[ox];
                }
              }
            }
          }
        }
      }
    };
  return o;
}

Value Tape::fixed_depthwise_conv(Value x, const Tensor& kernel) {
  require(x->value.shape.size() == 3, "ad::fixed_depthwise_conv: x must be {C,H,W}");
  require(kernel.shape.size() == 2, "ad::fixed_depthwise_conv: kernel must be {kh,kw}");
  const int c_n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1);
  const int py = kh / 2, px = kw / 2;

  Tensor out({c_n, h, w});
  const double* xd = x->value.data.data();
  for (int c = 0; c < c_n; ++c) {
    const double* xp = &xd[static_cast<std::size_t>(c) * h * w];
    double* op = &out.data[static_cast<std::size_t>(c) * h * w];
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = std::clamp(y + ky - py, 0, h - 1);
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = std::clamp(xx + kx - px, 0, w - 1);
            acc += kernel.data[static_cast<std::size_t>(ky) * kw + kx] *
                   xp[static_cast<std::size_t>(iy) * w + ix];
          }
        }
        op[static_cast<std::size_t>(y) * w + xx] = acc;
      }
    }
  }

  Value o = make(std::move(out), x->requires_grad);
  if (o->requires_grad) {
    Tensor k = kernel;
    o->backprop = [o, x, k, c_n, h, w, kh, kw, py, px] {
      ensure_grad(x);
      double* dx = x->grad.data.data();
      const double* gd = o->grad.data.data();
      for (int c = 0; c < c_n; ++c) {
        double* dxp = &dx[static_cast<std::size_t>(c) * h * w];
        const double* gp = &gd[static_cast<std::size_t>(c) * h * w];
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const double g = gp[static_cast<std::size_t>(y) * w + xx];
            if (g == 0.0) continue;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = std::clamp(y + ky - py, 0, h - 1);
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = std::clamp(xx + kx - px, 0, w - 1);
                dxp[static_cast<std::size_t>(iy) * w + ix] +=
                    g * k.data[static_cast<std::size_t>(ky) * kw + kx];
              }
            }
          }
        }
      }
    };
  }
  return o;
}

Value Tape::instance_norm(Value x, Value gamma, Value beta, double eps) {
  require(x->value.shape.size() == 3, "ad::instance_norm: x must be {C,H,W}");
  const int c_n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  require(gamma->value.size() == c_n && beta->value.size() == c_n,
          "ad::instance_norm: affine size mismatch");
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  std::vector<double> mu(c_n), istd(c_n);
  Tensor out({c_n, h, w});
  for (int c = 0; c < c_n; ++c) {
    const double* xp = &x->value.data[c * plane];
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += xp[i];
    m /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = xp[i] - m;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    mu[c] = m;
    istd[c] = 1.0 / std::sqrt(var + eps);
    const double g = gamma->value.data[c], bt = beta->value.data[c];
    double* op = &out.data[c * plane];
    for (std::size_t i = 0; i < plane; ++i)
      op[i] = g * (xp[i] - m) * istd[c] + bt;
  }

  Value o = make(std::move(out),
                 x->requires_grad || gamma->requires_grad || beta->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, x, gamma, beta, mu, istd, c_n, plane] {
      for (int c = 0; c < c_n; ++c) {
        const double* gp = &o->grad.data[c * plane];
        const double* xp = &x->value.data[c * plane];
        const double m = mu[c], is = istd[c];
        const double gw = gamma->value.data[c];

        if (beta->requires_grad) {
          ensure_grad(beta);
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
          beta->grad.data[c] += acc;
        }
        if (gamma->requires_grad) {
          ensure_grad(gamma);
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i)
            acc += gp[i] * (xp[i] - m) * is;
          gamma->grad.data[c] += acc;
        }
        if (x->requires_grad) {
          ensure_grad(x);
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const double dxh = gp[i] * gw;
            const double xh = (xp[i] - m) * is;
            m1 += dxh;
            m2 += dxh * xh;
          }
          m1 /= static_cast<double>(plane);
          m2 /= static_cast<double>(plane);
          double* dxp = &x->grad.data[c * plane];
          for (std::size_t i = 0; i < plane; ++i) {
            const double dxh = gp[i] * gw;
            const double xh = (xp[i] - m) * is;
            dxp[i] += is * (dxh - m1 - xh * m2);
          }
        }
      }
    };
  return o;
}

Value Tape::maxpool2(Value x) {
  require(x->value.shape.size() == 3, "ad::maxpool2: x must be {C,H,W}");
  const int c_n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  require(h % 2 == 0 && w % 2 == 0, "ad::maxpool2: odd spatial size");
  const int ho = h / 2, wo = w / 2;

  Tensor out({c_n, ho, wo});
  std::vector<std::int32_t> arg(static_cast<std::size_t>(c_n) * ho * wo);
  for (int c = 0; c < c_n; ++c) {
    const double* xp = &x->value.data[static_cast<std::size_t>(c) * h * w];
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double best = -1e300;
        int best_i = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (2 * oy + dy) * w + 2 * ox + dx;
            if (xp[idx] > best) {
              best = xp[idx];
              best_i = idx;
            }
          }
        }
        const std::size_t oi = (static_cast<std::size_t>(c) * ho + oy) * wo + ox;
        out.data[oi] = best;
        arg[oi] = best_i;
      }
    }
  }

  Value o = make(std::move(out), x->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, x, arg = std::move(arg), c_n, h, w, ho, wo] {
      ensure_grad(x);
      for (int c = 0; c < c_n; ++c) {
        double* dxp = &x->grad.data[static_cast<std::size_t>(c) * h * w];
        const std::size_t base = static_cast<std::size_t>(c) * ho * wo;
        for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i)
          dxp[arg[base + i]] += o->grad.data[base + i];
      }
    };
  return o;
}

Value Tape::upsample2_nearest(Value x) {
  require(x->value.shape.size() == 3, "ad::upsample2_nearest: x must be {C,H,W}");
  const int c_n = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int ho = h * 2, wo = w * 2;
  Tensor out({c_n, ho, wo});
  for (int c = 0; c < c_n; ++c)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        out.data[(static_cast<std::size_t>(c) * ho + y) * wo + xx] =
            x->value.data[(static_cast<std::size_t>(c) * h + y / 2) * w + xx / 2];

  Value o = make(std::move(out), x->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, x, c_n, h, w, ho, wo] {
      ensure_grad(x);
      for (int c = 0; c < c_n; ++c)
        for (int y = 0; y < ho; ++y)
          for (int xx = 0; xx < wo; ++xx)
            x->grad.data[(static_cast<std::size_t>(c) * h + y / 2) * w + xx / 2] +=
                o->grad.data[(static_cast<std::size_t>(c) * ho + y) * wo + xx];
    };
  return o;
}

Value Tape::concat_channels(const std::vector<Value>& xs) {
  require(!xs.empty(), "ad::concat_channels: empty list");
  const int h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
  int c_total = 0;
  bool rg = false;
  for (Value v : xs) {
    require(v->value.shape.size() == 3, "ad::concat_channels: rank mismatch");
    require(v->value.dim(1) == h && v->value.dim(2) == w,
            "ad::concat_channels: spatial mismatch");
    c_total += v->value.dim(0);
    rg = rg || v->requires_grad;
  }
  Tensor out({c_total, h, w});
  std::size_t off = 0;
  for (Value v : xs) {
    std::copy(v->value.data.begin(), v->value.data.end(), out.data.begin() + off);
    off += v->value.data.size();
  }
  Value o = make(std::move(out), rg);
  if (o->requires_grad) {
    auto parts = xs;
    o->backprop = [o, parts] {
      std::size_t off = 0;
      for (Value v : parts) {
        if (v->requires_grad) {
          ensure_grad(v);
          for (std::size_t i = 0; i < v->value.data.size(); ++i)
            v->grad.data[i] += o->grad.data[off + i];
        }
        off += v->value.data.size();
      }
    };
  }
  return o;
}

// ---- attention -------------------------------------------------------------

namespace {

// Position-major copy: {C,H,W} -> N rows of C values.
std::vector<double> position_major(const Tensor& t) {
  const int c_n = t.dim(0);
  const std::size_t n = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
  std::vector<double> out(n * c_n);
  for (int c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < n; ++i)
      out[i * c_n + c] = t.data[c * n + i];
  return out;
}

void softmax_row(std::vector<double>& row) {
  double m = row[0];
  for (double v : row) m = std::max(m, v);
  double s = 0.0;
  for (double& v : row) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : row) v /= s;
}

} // namespace

Value Tape::spatial_attention(Value q, Value k, Value v) {
  require(q->value.shape.size() == 3 && k->value.shape.size() == 3 &&
              v->value.shape.size() == 3,
          "ad::spatial_attention: rank mismatch");
  require(q->value.shape == k->value.shape, "ad::spatial_attention: q/k mismatch");
  const int cq = q->value.dim(0), h = q->value.dim(1), w = q->value.dim(2);
  require(v->value.dim(1) == h && v->value.dim(2) == w,
          "ad::spatial_attention: v spatial mismatch");
  const int cv = v->value.dim(0);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cq));

  const auto qt = position_major(q->value);
  const auto kt = position_major(k->value);
  const auto vt = position_major(v->value);

  Tensor out({cv, h, w});
  std::vector<double> row(n), acc(cv);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = &qt[i * cq];
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = &kt[j * cq];
      double d = 0.0;
      for (int c = 0; c < cq; ++c) d += qi[c] * kj[c];
      row[j] = d * scale;
    }
    softmax_row(row);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = row[j];
      const double* vj = &vt[j * cv];
      for (int c = 0; c < cv; ++c) acc[c] += a * vj[c];
    }
    for (int c = 0; c < cv; ++c) out.data[c * n + i] = acc[c];
  }

  Value o = make(std::move(out),
                 q->requires_grad || k->requires_grad || v->requires_grad);
  if (o->requires_grad)
    // Attention rows are recomputed row-by-row rather than stored: memory
    // stays O(N) instead of O(N^2).
    o->backprop = [o, q, k, v, cq, cv, n, scale] {
      const auto qt = position_major(q->value);
      const auto kt = position_major(k->value);
      const auto vt = position_major(v->value);
      const bool need_q = q->requires_grad, need_k = k->requires_grad,
                 need_v = v->requires_grad;
      if (need_q) ensure_grad(q);
      if (need_k) ensure_grad(k);
      if (need_v) ensure_grad(v);

      std::vector<double> row(n), s(n), gi(cv);
      std::vector<double> dqt(need_q ? n * cq : 0, 0.0);
      std::vector<double> dkt(need_k ? n * cq : 0, 0.0);
      std::vector<double> dvt(need_v ? n * cv : 0, 0.0);

      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = &qt[i * cq];
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = &kt[j * cq];
          double d = 0.0;
          for (int c = 0; c < cq; ++c) d += qi[c] * kj[c];
          row[j] = d * scale;
        }
        softmax_row(row);

        for (int c = 0; c < cv; ++c) gi[c] = o->grad.data[c * n + i];

        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double* vj = &vt[j * cv];
          double sj = 0.0;
          for (int c = 0; c < cv; ++c) sj += vj[c] * gi[c];
          s[j] = sj;
          dot += row[j] * sj;
        }

        if (need_v) {
          for (std::size_t j = 0; j < n; ++j) {
            const double a = row[j];
            if (a == 0.0) continue;
            double* dvj = &dvt[j * cv];
            for (int c = 0; c < cv; ++c) dvj[c] += a * gi[c];
          }
        }
        if (need_q || need_k) {
          for (std::size_t j = 0; j < n; ++j) {
            const double da = row[j] * (s[j] - dot) * scale;
            if (da == 0.0) continue;
            const double* kj = &kt[j * cq];
            if (need_q) {
              double* dqi = &dqt[i * cq];
              for (int c = 0; c < cq; ++c) dqi[c] += da * kj[c];
            }
            if (need_k) {
              double* dkj = &dkt[j * cq];
              for (int c = 0; c < cq; ++c) dkj[c] += da * qi[c];
            }
          }
        }
      }

      // Scatter position-major grads back to channel-major layout.
      if (need_q)
        for (int c = 0; c < cq; ++c)
          for (std::size_t i = 0; i < n; ++i)
            q->grad.data[c * n + i] += dqt[i * cq + c];
      if (need_k)
        for (int c = 0; c < cq; ++c)
          for (std::size_t i = 0; i < n; ++i)
            k->grad.data[c * n + i] += dkt[i * cq + c];
      if (need_v)
        for (int c = 0; c < cv; ++c)
          for (std::size_t i = 0; i < n; ++i)
            v->grad.data[c * n + i] += dvt[i * cv + c];
    };
  return o;
}

Tensor attention_rows(const Tensor& q, const Tensor& k) {
  const int cq = q.dim(0);
  const std::size_t n = static_cast<std::size_t>(q.dim(1)) * q.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cq));
  const auto qt = position_major(q);
  const auto kt = position_major(k);
  Tensor a({static_cast<int>(n), static_cast<int>(n)});
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      for (int c = 0; c < cq; ++c) d += qt[i * cq + c] * kt[j * cq + c];
      row[j] = d * scale;
    }
    softmax_row(row);
    for (std::size_t j = 0; j < n; ++j) a.data[i * n + j] = row[j];
  }
  return a;
}

Value Tape::hard_gate(Value x, std::vector<std::uint8_t> keep) {
  require(keep.size() == x->value.data.size(), "ad::hard_gate: keep size mismatch");
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (!keep[i]) out.data[i] = 0.0;
  Value o = make(std::move(out), x->requires_grad);
  if (o->requires_grad)
    o->backprop = [o, x, keep = std::move(keep)] {
      ensure_grad(x);
      for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) x->grad.data[i] += o->grad.data[i];
    };
  return o;
}

Value Tape::cosine_flat(Value a, Value b) {
  require(a->value.size() == b->value.size(), "ad::cosine_flat: size mismatch");
  double na2 = 0.0, nb2 = 0.0, d = 0.0;
  for (std::size_t i = 0; i < a->value.data.size(); ++i) {
    na2 += a->value.data[i] * a->value.data[i];
    nb2 += b->value.data[i] * b->value.data[i];
    d += a->value.data[i] * b->value.data[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const bool degenerate = na == 0.0 || nb == 0.0;
  Tensor out({1});
  out.data[0] = degenerate ? 0.0 : d / (na * nb);

  Value o = make(std::move(out), a->requires_grad || b->requires_grad);
  if (o->requires_grad && !degenerate) {
    const double sim = o->value.data[0];
    o->backprop = [o, a, b, na, nb, sim] {
      const double g = o->grad.data[0];
      if (a->requires_grad) {
        ensure_grad(a);
        for (std::size_t i = 0; i < a->value.data.size(); ++i)
          a->grad.data[i] += g * (b->value.data[i] / (na * nb) -
                                  sim * a->value.data[i] / (na * na));
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (std::size_t i = 0; i < b->value.data.size(); ++i)
          b->grad.data[i] += g * (a->value.data[i] / (na * nb) -
                                  sim * b->value.data[i] / (nb * nb));
      }
    };
  }
  return o;
}

Value Tape::bce_mean(Value pred, const Tensor& target, double eps) {
  require(pred->value.size() == static_cast<std::int64_t>(target.data.size()),
          "ad::bce_mean: size mismatch");
  const std::size_t n = pred->value.data.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = target.data[i];
    require(t == 0.0 || t == 1.0, "ad::bce_mean: non-binary target");
    const double p = std::clamp(pred->value.data[i], eps, 1.0 - eps);
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  Tensor out({1});
  out.data[0] = acc / static_cast<double>(n);

  Value o = make(std::move(out), pred->requires_grad);
  if (o->requires_grad) {
    Tensor tgt = target;
    o->backprop = [o, pred, tgt = std::move(tgt), eps, n] {
      ensure_grad(pred);
      const double g = o->grad.data[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = pred->value.data[i];
        if (p <= eps || p >= 1.0 - eps) continue; // clamped: flat
        const double t = tgt.data[i];
        pred->grad.data[i] += g * (p - t) / (p * (1.0 - p));
      }
    };
  }
  return o;
}

void Tape::backward(Value root) {
  require(root->value.size() == 1, "ad::backward: root must be a single element");
  ensure_grad(root);
  root->grad.data[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = *it;
    if (node.requires_grad && node.has_grad() && node.backprop) node.backprop();
  }
}

} // namespace ugmcs::ad
