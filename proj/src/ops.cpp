#include "quadsci/ops.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "quadsci/error.hpp"
#include "quadsci/flops.hpp"
#include "quadsci/parallel.hpp"

namespace quadsci::ad {
namespace {

using Dims = VideoCube::Dims;

void same_dims(Var a, Var b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
  }
}

std::size_t last_dim(const VideoCube& v) { return v.dims().back(); }

struct Grid {
  std::size_t t, h, w, c;
};

Grid grid_of(Var x, const char* op) {
  if (x.value().rank() != 4) {
    throw ShapeError(std::string(op) + " expects a (T, H, W, C) feature, got " +
                     dims_to_string(x.dims()));
  }
  const auto& d = x.dims();
  return {d[0], d[1], d[2], d[3]};
}

std::array<int, 3> tap_offset(std::size_t taps, std::size_t tap) {
  if (taps == 1) return {0, 0, 0};
  return {static_cast<int>(tap / 9) - 1, static_cast<int>((tap / 3) % 3) - 1,
          static_cast<int>(tap % 3) - 1};
}

// Flat token index of (t, h, w) shifted by off, or -1 when outside the grid.
inline long long shifted(const Grid& g, std::size_t t, std::size_t h, std::size_t w,
                         const std::array<int, 3>& off) {
  const long long tt = static_cast<long long>(t) + off[0];
  const long long hh = static_cast<long long>(h) + off[1];
  const long long ww = static_cast<long long>(w) + off[2];
  if (tt < 0 || hh < 0 || ww < 0 || tt >= static_cast<long long>(g.t) ||
      hh >= static_cast<long long>(g.h) || ww >= static_cast<long long>(g.w)) {
    return -1;
  }
  return (tt * static_cast<long long>(g.h) + hh) * static_cast<long long>(g.w) + ww;
}

template <class F, class DF>
Var unary(Var x, F f, DF df, const char* op) {
  const VideoCube& xv = x.value();
  VideoCube out(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape().record(
      std::move(out), {x},
      [x, df](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        VideoCube dx(xv.dims());
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] = g[i] * df(xv[i]);
        tape.accumulate(x, dx);
      },
      flops::elementwise(xv.size()), op);
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }
double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Var add(Var a, Var b) {
  same_dims(a, b, "add");
  VideoCube out = a.value();
  const VideoCube& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const VideoCube& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
      },
      flops::elementwise(a.value().size()), "add");
}

Var sub(Var a, Var b) {
  same_dims(a, b, "sub");
  VideoCube out = a.value();
  const VideoCube& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const VideoCube& g) {
        tape.accumulate(a, g);
        VideoCube neg = g;
        for (auto& v : neg.values()) v = -v;
        tape.accumulate(b, neg);
      },
      flops::elementwise(a.value().size()), "sub");
}

Var mul(Var a, Var b) {
  same_dims(a, b, "mul");
  VideoCube out = a.value();
  const VideoCube& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const VideoCube& g) {
        const VideoCube& av = tape.value(a.id());
        const VideoCube& bv = tape.value(b.id());
        VideoCube da(g.dims()), db(g.dims());
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] = g[i] * bv[i];
          db[i] = g[i] * av[i];
        }
        tape.accumulate(a, da);
        tape.accumulate(b, db);
      },
      flops::elementwise(a.value().size()), "mul");
}

Var scale(Var x, Var s) {
  if (s.value().size() != 1) throw ShapeError("scale: factor must have one element");
  const double k = s.value()[0];
  VideoCube out = x.value();
  for (auto& v : out.values()) v *= k;
  return x.tape().record(
      std::move(out), {x, s},
      [x, s](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        const double k = tape.value(s.id())[0];
        VideoCube dx(g.dims());
        double ds = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] = g[i] * k;
          ds += g[i] * xv[i];
        }
        tape.accumulate(x, dx);
        tape.accumulate(s, VideoCube({1}, ds));
      },
      flops::elementwise(x.value().size()), "scale");
}

Var mul_channels(Var x, Var w) {
  const VideoCube& xv = x.value();
  const std::size_t c = last_dim(xv);
  if (w.value().size() != c) {
    throw ShapeError("mul_channels: weight of " + std::to_string(w.value().size()) +
                     " for " + std::to_string(c) + " channels");
  }
  VideoCube out = xv;
  const VideoCube& wv = w.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= wv[i % c];
  return x.tape().record(
      std::move(out), {x, w},
      [x, w, c](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        const VideoCube& wv = tape.value(w.id());
        VideoCube dx(g.dims()), dw({c}, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] = g[i] * wv[i % c];
          dw[i % c] += g[i] * xv[i];
        }
        tape.accumulate(x, dx);
        tape.accumulate(w, dw);
      },
      flops::elementwise(xv.size()), "mul_channels");
}

Var silu(Var x) {
  return unary(
      x, [](double v) { return v * quadsci::sigmoid(v); },
      [](double v) {
        const double s = quadsci::sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      },
      "silu");
}

Var gelu(Var x) { return unary(x, gelu_value, gelu_grad, "gelu"); }

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return quadsci::sigmoid(v); },
      [](double v) {
        const double s = quadsci::sigmoid(v);
        return s * (1.0 - s);
      },
      "sigmoid");
}

Var softplus(Var x) {
  return unary(
      x, [](double v) { return quadsci::softplus(v); },
      [](double v) { return quadsci::sigmoid(v); }, "softplus");
}

Var linear(Var x, Var w, Var b) {
  const VideoCube& xv = x.value();
  const VideoCube& wv = w.value();
  if (wv.rank() != 2) throw ShapeError("linear: weight must be (out, in)");
  const std::size_t in = wv.dim(1), out_c = wv.dim(0);
  if (last_dim(xv) != in) {
    throw ShapeError("linear: input " + dims_to_string(xv.dims()) + " vs weight " +
                     dims_to_string(wv.dims()));
  }
  if (b.valid() && b.value().size() != out_c) throw ShapeError("linear: bias size mismatch");
  const std::size_t tokens = xv.size() / in;
  Dims od = xv.dims();
  od.back() = out_c;
  VideoCube out(od);
  const double* bias = b.valid() ? b.value().data().data() : nullptr;
  parallel_for(tokens, [&](std::size_t t) {
    const double* xr = &xv[t * in];
    double* yr = &out[t * out_c];
    for (std::size_t o = 0; o < out_c; ++o) {
      const double* wr = &wv[o * in];
      double s = bias != nullptr ? bias[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
      yr[o] = s;
    }
  });
  return x.tape().record(
      std::move(out), {x, w, b},
      [x, w, b, tokens, in, out_c](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        const VideoCube& wv = tape.value(w.id());
        if (x.requires_grad()) {
          VideoCube dx(xv.dims());
          parallel_for(tokens, [&](std::size_t t) {
            double* dr = &dx[t * in];
            const double* gr = &g[t * out_c];
            for (std::size_t o = 0; o < out_c; ++o) {
              const double go = gr[o];
              const double* wr = &wv[o * in];
              for (std::size_t i = 0; i < in; ++i) dr[i] += go * wr[i];
            }
          });
          tape.accumulate(x, dx);
        }
        if (w.requires_grad()) {
          VideoCube dw(wv.dims());
          parallel_for(out_c, [&](std::size_t o) {
            double* dr = &dw[o * in];
            for (std::size_t t = 0; t < tokens; ++t) {
              const double go = g[t * out_c + o];
              const double* xr = &xv[t * in];
              for (std::size_t i = 0; i < in; ++i) dr[i] += go * xr[i];
            }
          });
          tape.accumulate(w, dw);
        }
        if (b.valid() && b.requires_grad()) {
          VideoCube db({out_c}, 0.0);
          for (std::size_t t = 0; t < tokens; ++t)
            for (std::size_t o = 0; o < out_c; ++o) db[o] += g[t * out_c + o];
          tape.accumulate(b, db);
        }
      },
      flops::linear(tokens, in, out_c, b.valid()), "linear");
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const VideoCube& xv = x.value();
  const std::size_t c = last_dim(xv);
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(c) + " entries");
  }
  const std::size_t tokens = xv.size() / c;
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv = std::make_shared<std::vector<double>>(tokens);
  VideoCube out(xv.dims());
  const VideoCube& gv = gamma.value();
  const VideoCube& bv = beta.value();
  parallel_for(tokens, [&](std::size_t t) {
    const double* xr = &xv[t * c];
    double mean = 0.0;
    for (std::size_t i = 0; i < c; ++i) mean += xr[i];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(c);
    const double r = 1.0 / std::sqrt(var + eps);
    (*inv)[t] = r;
    for (std::size_t i = 0; i < c; ++i) {
      const double xh = (xr[i] - mean) * r;
      (*xhat)[t * c + i] = xh;
      out[t * c + i] = gv[i] * xh + bv[i];
    }
  });
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv, tokens, c](Tape& tape, const VideoCube& g) {
        const VideoCube& gv = tape.value(gamma.id());
        if (x.requires_grad()) {
          VideoCube dx(g.dims());
          parallel_for(tokens, [&](std::size_t t) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < c; ++i) {
              const double d = g[t * c + i] * gv[i];
              m1 += d;
              m2 += d * (*xhat)[t * c + i];
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
            for (std::size_t i = 0; i < c; ++i) {
              const double d = g[t * c + i] * gv[i];
              dx[t * c + i] = (*inv)[t] * (d - m1 - (*xhat)[t * c + i] * m2);
            }
          });
          tape.accumulate(x, dx);
        }
        VideoCube dg({c}, 0.0), db({c}, 0.0);
        for (std::size_t t = 0; t < tokens; ++t) {
          for (std::size_t i = 0; i < c; ++i) {
            dg[i] += g[t * c + i] * (*xhat)[t * c + i];
            db[i] += g[t * c + i];
          }
        }
        tape.accumulate(gamma, dg);
        tape.accumulate(beta, db);
      },
      flops::layer_norm(tokens, c), "layer_norm");
}

Var conv1d_causal(Var x, Var w, Var b) {
  const VideoCube& xv = x.value();
  const VideoCube& wv = w.value();
  if (xv.rank() != 2) throw ShapeError("conv1d_causal expects (L, C)");
  const std::size_t len = xv.dim(0), c = xv.dim(1);
  if (wv.rank() != 2 || wv.dim(0) != c || b.value().size() != c) {
    throw ShapeError("conv1d_causal: weight must be (C, K) and bias (C)");
  }
  const std::size_t k = wv.dim(1);
  const VideoCube& bv = b.value();
  VideoCube out({len, c});
  parallel_for(c, [&](std::size_t ch) {
    for (std::size_t s = 0; s < len; ++s) {
      double acc = bv[ch];
      for (std::size_t j = 0; j < k; ++j) {
        const long long src = static_cast<long long>(s) - static_cast<long long>(k - 1 - j);
        if (src >= 0) acc += wv[ch * k + j] * xv[static_cast<std::size_t>(src) * c + ch];
      }
      out[s * c + ch] = acc;
    }
  });
  return x.tape().record(
      std::move(out), {x, w, b},
      [x, w, b, len, c, k](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        const VideoCube& wv = tape.value(w.id());
        VideoCube dx({len, c}), dw({c, k}), db({c});
        parallel_for(c, [&](std::size_t ch) {
          double sb = 0.0;
          for (std::size_t s = 0; s < len; ++s) {
            const double gs = g[s * c + ch];
            sb += gs;
            for (std::size_t j = 0; j < k; ++j) {
              const long long src = static_cast<long long>(s) - static_cast<long long>(k - 1 - j);
              if (src < 0) continue;
              const auto si = static_cast<std::size_t>(src);
              dx[si * c + ch] += gs * wv[ch * k + j];
              dw[ch * k + j] += gs * xv[si * c + ch];
            }
          }
          db[ch] = sb;
        });
        tape.accumulate(x, dx);
        tape.accumulate(w, dw);
        tape.accumulate(b, db);
      },
      flops::conv1d_causal(len, c, k), "conv1d_causal");
}

Var conv3d_depthwise(Var x, Var w, Var b) {
  const Grid gr = grid_of(x, "conv3d_depthwise");
  const VideoCube& xv = x.value();
  const VideoCube& wv = w.value();
  if (wv.dims() != Dims{gr.c, 27} || b.value().size() != gr.c) {
    throw ShapeError("conv3d_depthwise: weight must be (C, 27) and bias (C), got " +
                     dims_to_string(wv.dims()));
  }
  const VideoCube& bv = b.value();
  const std::size_t c = gr.c;
  VideoCube out(xv.dims());
  parallel_for(gr.t * gr.h, [&](std::size_t row) {
    const std::size_t t = row / gr.h, h = row % gr.h;
    for (std::size_t wi = 0; wi < gr.w; ++wi) {
      double* y = &out[((t * gr.h + h) * gr.w + wi) * c];
      for (std::size_t ch = 0; ch < c; ++ch) y[ch] = bv[ch];
      for (std::size_t tap = 0; tap < 27; ++tap) {
        const long long src = shifted(gr, t, h, wi, tap_offset(27, tap));
        if (src < 0) continue;
        const double* xr = &xv[static_cast<std::size_t>(src) * c];
        for (std::size_t ch = 0; ch < c; ++ch) y[ch] += wv[ch * 27 + tap] * xr[ch];
      }
    }
  });
  return x.tape().record(
      std::move(out), {x, w, b},
      [x, w, b, gr](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        const VideoCube& wv = tape.value(w.id());
        const std::size_t c = gr.c;
        VideoCube dx(xv.dims());
        parallel_for(gr.t * gr.h, [&](std::size_t row) {
          const std::size_t t = row / gr.h, h = row % gr.h;
          for (std::size_t wi = 0; wi < gr.w; ++wi) {
            double* d = &dx[((t * gr.h + h) * gr.w + wi) * c];
            for (std::size_t tap = 0; tap < 27; ++tap) {
              auto off = tap_offset(27, tap);
              const long long dst = shifted(gr, t, h, wi, {-off[0], -off[1], -off[2]});
              if (dst < 0) continue;
              const double* gy = &g[static_cast<std::size_t>(dst) * c];
              for (std::size_t ch = 0; ch < c; ++ch) d[ch] += wv[ch * 27 + tap] * gy[ch];
            }
          }
        });
        tape.accumulate(x, dx);
        VideoCube dw({c, 27}), db({c});
        parallel_for(27, [&](std::size_t tap) {
          const auto off = tap_offset(27, tap);
          std::vector<double> acc(c, 0.0);
          for (std::size_t t = 0; t < gr.t; ++t)
            for (std::size_t h = 0; h < gr.h; ++h)
              for (std::size_t wi = 0; wi < gr.w; ++wi) {
                const long long src = shifted(gr, t, h, wi, off);
                if (src < 0) continue;
                const double* xr = &xv[static_cast<std::size_t>(src) * c];
                const double* gy = &g[((t * gr.h + h) * gr.w + wi) * c];
                for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += xr[ch] * gy[ch];
              }
          for (std::size_t ch = 0; ch < c; ++ch) dw[ch * 27 + tap] = acc[ch];
        });
        const std::size_t tokens = gr.t * gr.h * gr.w;
        for (std::size_t p = 0; p < tokens; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += g[p * c + ch];
        tape.accumulate(w, dw);
        tape.accumulate(b, db);
      },
      flops::conv3d_depthwise(gr.t * gr.h * gr.w, 27, c), "conv3d_depthwise");
}

Var conv3d(Var x, Var w, Var b) {
  const Grid gr = grid_of(x, "conv3d");
  const VideoCube& xv = x.value();
  const VideoCube& wv = w.value();
  if (wv.rank() != 3 || (wv.dim(0) != 27 && wv.dim(0) != 1) || wv.dim(1) != gr.c) {
    throw ShapeError("conv3d: weight must be (27 or 1, C_in, C_out), got " +
                     dims_to_string(wv.dims()) + " for input " + dims_to_string(xv.dims()));
  }
  const std::size_t taps = wv.dim(0), cin = gr.c, cout = wv.dim(2);
  if (b.value().size() != cout) throw ShapeError("conv3d: bias size mismatch");
  const VideoCube& bv = b.value();
  VideoCube out({gr.t, gr.h, gr.w, cout});
  parallel_for(gr.t * gr.h, [&](std::size_t row) {
    const std::size_t t = row / gr.h, h = row % gr.h;
    for (std::size_t wi = 0; wi < gr.w; ++wi) {
      double* y = &out[((t * gr.h + h) * gr.w + wi) * cout];
      for (std::size_t o = 0; o < cout; ++o) y[o] = bv[o];
      for (std::size_t tap = 0; tap < taps; ++tap) {
        const long long src = shifted(gr, t, h, wi, tap_offset(taps, tap));
        if (src < 0) continue;
        const double* xr = &xv[static_cast<std::size_t>(src) * cin];
        const double* k = &wv[tap * cin * cout];
        for (std::size_t i = 0; i < cin; ++i) {
          const double xi = xr[i];
          const double* kr = &k[i * cout];
          for (std::size_t o = 0; o < cout; ++o) y[o] += xi * kr[o];
        }
      }
    }
  });
  const std::size_t tokens = gr.t * gr.h * gr.w;
  return x.tape().record(
      std::move(out), {x, w, b},
      [x, w, b, gr, taps, cin, cout, tokens](Tape& tape, const VideoCube& g) {
        const VideoCube& xv = tape.value(x.id());
        const VideoCube& wv = tape.value(w.id());
        if (x.requires_grad()) {
          VideoCube dx(xv.dims());
          parallel_for(gr.t * gr.h, [&](std::size_t row) {
            const std::size_t t = row / gr.h, h = row % gr.h;
            for (std::size_t wi = 0; wi < gr.w; ++wi) {
              double* d = &dx[((t * gr.h + h) * gr.w + wi) * cin];
              for (std::size_t tap = 0; tap < taps; ++tap) {
                const auto off = tap_offset(taps, tap);
                const long long dst = shifted(gr, t, h, wi, {-off[0], -off[1], -off[2]});
                if (dst < 0) continue;
                const double* gy = &g[static_cast<std::size_t>(dst) * cout];
                const double* k = &wv[tap * cin * cout];
                for (std::size_t i = 0; i < cin; ++i) {
                  const double* kr = &k[i * cout];
                  double s = 0.0;
                  for (std::size_t o = 0; o < cout; ++o) s += kr[o] * gy[o];
                  d[i] += s;
                }
              }
            }
          });
          tape.accumulate(x, dx);
        }
        if (w.requires_grad()) {
          VideoCube dw(wv.dims());
          parallel_for(taps, [&](std::size_t tap) {
            const auto off = tap_offset(taps, tap);
            double* k = &dw[tap * cin * cout];
            for (std::size_t t = 0; t < gr.t; ++t)
              for (std::size_t h = 0; h < gr.h; ++h)
                for (std::size_t wi = 0; wi < gr.w; ++wi) {
                  const long long src = shifted(gr, t, h, wi, off);
                  if (src < 0) continue;
                  const double* xr = &xv[static_cast<std::size_t>(src) * cin];
                  const double* gy = &g[((t * gr.h + h) * gr.w + wi) * cout];
                  for (std::size_t i = 0; i < cin; ++i) {
                    const double xi = xr[i];
                    double* kr = &k[i * cout];
                    for (std::size_t o = 0; o < cout; ++o) kr[o] += xi * gy[o];
                  }
                }
          });
          tape.accumulate(w, dw);
        }
        if (b.requires_grad()) {
          VideoCube db({cout}, 0.0);
          for (std::size_t p = 0; p < tokens; ++p)
            for (std::size_t o = 0; o < cout; ++o) db[o] += g[p * cout + o];
          tape.accumulate(b, db);
        }
      },
      flops::conv3d(tokens, taps, cin, cout), "conv3d");
}

Var max_pool2(Var x) {
  const Grid gr = grid_of(x, "max_pool2");
  if (gr.h % 2 != 0 || gr.w % 2 != 0) throw ShapeError("max_pool2 needs even H and W");
  const VideoCube& xv = x.value();
  const std::size_t oh = gr.h / 2, ow = gr.w / 2, c = gr.c;
  VideoCube out({gr.t, oh, ow, c});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t t = 0; t < gr.t; ++t)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((t * gr.h + 2 * i) * gr.w + 2 * j) * c + ch;
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t idx = ((t * gr.h + 2 * i + di) * gr.w + 2 * j + dj) * c + ch;
              if (xv[idx] > xv[best]) best = idx;
            }
          const std::size_t o = ((t * oh + i) * ow + j) * c + ch;
          out[o] = xv[best];
          (*arg)[o] = best;
        }
  return x.tape().record(
      std::move(out), {x},
      [x, arg](Tape& tape, const VideoCube& g) {
        VideoCube dx(tape.value(x.id()).dims());
        for (std::size_t o = 0; o < g.size(); ++o) dx[(*arg)[o]] += g[o];
        tape.accumulate(x, dx);
      },
      flops::max_pool2(gr.t * oh * ow * c), "max_pool2");
}

Var upsample2(Var x) {
  const Grid gr = grid_of(x, "upsample2");
  const VideoCube& xv = x.value();
  const std::size_t oh = gr.h * 2, ow = gr.w * 2, c = gr.c;
  VideoCube out({gr.t, oh, ow, c});
  for (std::size_t t = 0; t < gr.t; ++t)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t ch = 0; ch < c; ++ch)
          out[((t * oh + i) * ow + j) * c + ch] = xv[((t * gr.h + i / 2) * gr.w + j / 2) * c + ch];
  return x.tape().record(
      std::move(out), {x},
      [x, gr, oh, ow](Tape& tape, const VideoCube& g) {
        const std::size_t c = gr.c;
        VideoCube dx(tape.value(x.id()).dims());
        for (std::size_t t = 0; t < gr.t; ++t)
          for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j)
              for (std::size_t ch = 0; ch < c; ++ch)
                dx[((t * gr.h + i / 2) * gr.w + j / 2) * c + ch] +=
                    g[((t * oh + i) * ow + j) * c + ch];
        tape.accumulate(x, dx);
      },
      0, "upsample2");
}

Var global_avg_pool(Var x) {
  const VideoCube& xv = x.value();
  const std::size_t c = last_dim(xv);
  const std::size_t tokens = xv.size() / c;
  VideoCube out({c}, 0.0);
  for (std::size_t p = 0; p < tokens; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += xv[p * c + ch];
  for (auto& v : out.values()) v /= static_cast<double>(tokens);
  return x.tape().record(
      std::move(out), {x},
      [x, c, tokens](Tape& tape, const VideoCube& g) {
        VideoCube dx(tape.value(x.id()).dims());
        const double inv = 1.0 / static_cast<double>(tokens);
        for (std::size_t p = 0; p < tokens; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) dx[p * c + ch] = g[ch] * inv;
        tape.accumulate(x, dx);
      },
      flops::reduction(xv.size()), "global_avg_pool");
}

Var permute(Var x, std::array<int, 4> perm) {
  const VideoCube& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("permute expects a rank-4 cube");
  const Dims& in = xv.dims();
  Dims od(4);
  for (int i = 0; i < 4; ++i) od[i] = in[perm[i]];
  std::array<std::size_t, 4> in_stride{in[1] * in[2] * in[3], in[2] * in[3], in[3], 1};
  // Source offset of every output element, shared by forward and backward.
  auto map = std::make_shared<std::vector<std::size_t>>(xv.size());
  std::size_t o = 0;
  for (std::size_t a = 0; a < od[0]; ++a)
    for (std::size_t b = 0; b < od[1]; ++b)
      for (std::size_t c = 0; c < od[2]; ++c)
        for (std::size_t d = 0; d < od[3]; ++d) {
          const std::array<std::size_t, 4> idx{a, b, c, d};
          std::size_t src = 0;
          for (int i = 0; i < 4; ++i) src += idx[i] * in_stride[perm[i]];
          (*map)[o++] = src;
        }
  VideoCube out(od);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*map)[i]];
  return x.tape().record(
      std::move(out), {x},
      [x, map](Tape& tape, const VideoCube& g) {
        VideoCube dx(tape.value(x.id()).dims());
        for (std::size_t i = 0; i < g.size(); ++i) dx[(*map)[i]] = g[i];
        tape.accumulate(x, dx);
      },
      0, "permute");
}

Var reshape(Var x, Dims dims) {
  VideoCube out = x.value().reshaped(std::move(dims));
  return x.tape().record(
      std::move(out), {x},
      [x](Tape& tape, const VideoCube& g) {
        tape.accumulate(x, g.reshaped(tape.value(x.id()).dims()));
      },
      0, "reshape");
}

Var selective_scan(Var x, const ScanVars& p, ScanDirection dir) {
  const VideoCube& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("selective_scan expects (L, channels)");
  SsmParams params{xv.dim(1),          p.a_log.value().dims().back(), p.a_log.value(),
                   p.w_delta.value(),  p.b_delta.value(),             p.w_b.value(),
                   p.w_c.value()};
  auto trace = std::make_shared<ScanTrace>();
  const bool keep = x.tape().grad_enabled();
  VideoCube out = quadsci::selective_scan(xv, params, dir, keep ? trace.get() : nullptr);
  const auto cost = flops::selective_scan(xv.dim(0), params.channels, params.state_size);
  return x.tape().record(
      std::move(out), {x, p.a_log, p.w_delta, p.b_delta, p.w_b, p.w_c},
      [x, p, trace](Tape& tape, const VideoCube& g) {
        SsmParams params{trace->channels,           trace->state_size,
                         tape.value(p.a_log.id()),  tape.value(p.w_delta.id()),
                         tape.value(p.b_delta.id()), tape.value(p.w_b.id()),
                         tape.value(p.w_c.id())};
        ScanGrads sg = selective_scan_backward(*trace, params, g);
        tape.accumulate(x, sg.d_seq);
        tape.accumulate(p.a_log, sg.d_a_log);
        tape.accumulate(p.w_delta, sg.d_w_delta);
        tape.accumulate(p.b_delta, sg.d_b_delta);
        tape.accumulate(p.w_b, sg.d_w_b);
        tape.accumulate(p.w_c, sg.d_w_c);
      },
      cost, "selective_scan");
}

Var mse(Var a, Var b) {
  same_dims(a, b, "mse");
  const VideoCube& av = a.value();
  const VideoCube& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  return a.tape().record(
      VideoCube({1}, s / n), {a, b},
      [a, b, n](Tape& tape, const VideoCube& g) {
        const VideoCube& av = tape.value(a.id());
        const VideoCube& bv = tape.value(b.id());
        VideoCube da(av.dims()), db(av.dims());
        for (std::size_t i = 0; i < av.size(); ++i) {
          da[i] = g[0] * 2.0 * (av[i] - bv[i]) / n;
          db[i] = -da[i];
        }
        tape.accumulate(a, da);
        tape.accumulate(b, db);
      },
      3 * av.size(), "mse");
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(
      VideoCube({1}, s), {x},
      [x](Tape& tape, const VideoCube& g) {
        tape.accumulate(x, VideoCube(tape.value(x.id()).dims(), g[0]));
      },
      flops::reduction(x.value().size()), "sum");
}

Var weighted_sum(Var x, const VideoCube& weights) {
  if (weights.size() != x.value().size()) throw ShapeError("weighted_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x.value()[i];
  return x.tape().record(
      VideoCube({1}, s), {x},
      [x, weights](Tape& tape, const VideoCube& g) {
        VideoCube dx = weights.reshaped(tape.value(x.id()).dims());
        for (auto& v : dx.values()) v *= g[0];
        tape.accumulate(x, dx);
      },
      2 * weights.size(), "weighted_sum");
}

}  // namespace quadsci::ad
