#include "quadsci/ssm.hpp"

#include <algorithm>
#include <cmath>

#include "quadsci/error.hpp"
#include "quadsci/parallel.hpp"

namespace quadsci {
namespace {

void require_seq(const VideoCube& seq, std::size_t channels, const char* what) {
  if (seq.rank() != 2 || seq.dim(1) != channels) {
    throw ShapeError(std::string(what) + ": sequence " + dims_to_string(seq.dims()) +
                     " does not match " + std::to_string(channels) + " scan channels");
  }
}

// Scan-order position k maps to sequence row src_row(k).
std::size_t src_row(std::size_t k, std::size_t length, ScanDirection dir) {
  return dir == ScanDirection::kForward ? k : length - 1 - k;
}

// (exp(delta a) - 1) / a and the matching a_bar.
inline void zoh_gain(double a, double delta, double& a_bar, double& gain) {
  const double da = delta * a;
  a_bar = std::exp(da);
  gain = std::abs(a) < kZohLimitThreshold ? delta : std::expm1(da) / a;
}

}  // namespace

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Discretized discretize(double a, double b, double delta) {
  const double a_bar = std::exp(delta * a);
  if (std::abs(a) < kZohLimitThreshold) return {a_bar, delta * b};
  return {a_bar, std::expm1(delta * a) / a * b};
}

void SsmParams::validate() const {
  if (channels == 0 || state_size == 0) throw ShapeError("SSM needs channels >= 1 and N >= 1");
  const auto want = [](const VideoCube& v, VideoCube::Dims d, const char* name) {
    if (v.dims() != d) {
      throw ShapeError(std::string("SSM parameter ") + name + " has shape " +
                       dims_to_string(v.dims()) + ", expected " + dims_to_string(d));
    }
  };
  want(a_log, {channels, state_size}, "a_log");
  want(w_delta, {channels, channels}, "w_delta");
  want(b_delta, {channels}, "b_delta");
  want(w_b, {state_size, channels}, "w_b");
  want(w_c, {state_size, channels}, "w_c");
}

std::vector<double> SsmParams::a_matrix() const {
  std::vector<double> a(a_log.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);
  return a;
}

SsmParams SsmParams::zeros(std::size_t channels, std::size_t state_size) {
  return {channels,
          state_size,
          VideoCube({channels, state_size}),
          VideoCube({channels, channels}),
          VideoCube({channels}),
          VideoCube({state_size, channels}),
          VideoCube({state_size, channels})};
}

SsmParams SsmParams::init(std::size_t channels, std::size_t state_size, rng::Stream& stream) {
  SsmParams p = zeros(channels, state_size);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state_size; ++n)
      p.a_log[c * state_size + n] = std::log(static_cast<double>(n + 1));
  for (auto& v : p.w_delta.values()) v = stream.truncated_normal(0.02);
  for (auto& v : p.w_b.values()) v = stream.truncated_normal(0.02);
  for (auto& v : p.w_c.values()) v = stream.truncated_normal(0.02);
  for (auto& v : p.b_delta.values()) {
    const double dt = std::exp(stream.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));  // inverse softplus
  }
  return p;
}

VideoCube selective_scan(const VideoCube& seq, const SsmParams& params, ScanDirection dir,
                         ScanTrace* trace) {
  params.validate();
  require_seq(seq, params.channels, "selective_scan");
  const std::size_t len = seq.dim(0), ch = params.channels, ns = params.state_size;

  ScanTrace local;
  ScanTrace& tr = trace != nullptr ? *trace : local;
  tr.length = len;
  tr.channels = ch;
  tr.state_size = ns;
  tr.direction = dir;
  tr.u.resize(len * ch);
  tr.pre.resize(len * ch);
  tr.delta.resize(len * ch);
  tr.b.resize(len * ns);
  tr.c.resize(len * ns);
  const bool keep_states = trace != nullptr;
  if (keep_states) {
    tr.h.assign(ch * len * ns, 0.0);
    tr.a_bar.assign(ch * len * ns, 0.0);
    tr.gain.assign(ch * len * ns, 0.0);
  }

  const auto& x = seq.values();
  const auto& wd = params.w_delta.values();
  const auto& bd = params.b_delta.values();
  const auto& wb = params.w_b.values();
  const auto& wc = params.w_c.values();

  parallel_for(len, [&](std::size_t k) {
    const double* u = &x[src_row(k, len, dir) * ch];
    std::copy(u, u + ch, &tr.u[k * ch]);
    for (std::size_t c = 0; c < ch; ++c) {
      double s = bd[c];
      for (std::size_t j = 0; j < ch; ++j) s += wd[c * ch + j] * u[j];
      tr.pre[k * ch + c] = s;
      tr.delta[k * ch + c] = softplus(s);
    }
    for (std::size_t n = 0; n < ns; ++n) {
      double sb = 0.0, sc = 0.0;
      for (std::size_t j = 0; j < ch; ++j) {
        sb += wb[n * ch + j] * u[j];
        sc += wc[n * ch + j] * u[j];
      }
      tr.b[k * ns + n] = sb;
      tr.c[k * ns + n] = sc;
    }
  });

  const auto a = params.a_matrix();
  VideoCube out({len, ch});
  parallel_for(ch, [&](std::size_t c) {
    std::vector<double> h(ns, 0.0);
    for (std::size_t k = 0; k < len; ++k) {
      const double dt = tr.delta[k * ch + c];
      const double uk = tr.u[k * ch + c];
      double y = 0.0;
      for (std::size_t n = 0; n < ns; ++n) {
        double a_bar, gain;
        zoh_gain(a[c * ns + n], dt, a_bar, gain);
        if (keep_states) {
          tr.a_bar[(c * len + k) * ns + n] = a_bar;
          tr.gain[(c * len + k) * ns + n] = gain;
        }
        h[n] = a_bar * h[n] + gain * tr.b[k * ns + n] * uk;
        y += tr.c[k * ns + n] * h[n];
      }
      if (keep_states) std::copy(h.begin(), h.end(), &tr.h[(c * len + k) * ns]);
      out[src_row(k, len, dir) * ch + c] = y;
    }
  });
  return out;
}

ScanGrads selective_scan_backward(const ScanTrace& tr, const SsmParams& params,
                                  const VideoCube& d_out) {
  const std::size_t len = tr.length, ch = tr.channels, ns = tr.state_size;
  if (tr.h.size() != ch * len * ns || tr.a_bar.size() != tr.h.size() ||
      tr.gain.size() != tr.h.size())
    throw ContractError("scan trace is missing saved states");
  require_seq(d_out, ch, "selective_scan_backward");
  if (d_out.dim(0) != len) throw ShapeError("selective_scan_backward: gradient length mismatch");

  const auto a = params.a_matrix();
  const auto& wd = params.w_delta.values();
  const auto& wb = params.w_b.values();
  const auto& wc = params.w_c.values();

  // Per-channel partials, reduced over channels in a fixed order below.
  std::vector<double> db_part(ch * len * ns), dc_part(ch * len * ns);
  std::vector<double> du_self(len * ch), dpre(len * ch), da(ch * ns, 0.0);

  parallel_for(ch, [&](std::size_t c) {
    std::vector<double> dh(ns, 0.0);
    for (std::size_t kk = len; kk-- > 0;) {
      const double g = d_out[src_row(kk, len, tr.direction) * ch + c];
      const double dt = tr.delta[kk * ch + c];
      const double uk = tr.u[kk * ch + c];
      double d_delta = 0.0, d_u = 0.0;
      for (std::size_t n = 0; n < ns; ++n) {
        const double an = a[c * ns + n];
        const double bk = tr.b[kk * ns + n];
        const double hk = tr.h[(c * len + kk) * ns + n];
        const double hprev = kk > 0 ? tr.h[(c * len + kk - 1) * ns + n] : 0.0;
        const double a_bar = tr.a_bar[(c * len + kk) * ns + n];
        const double gain = tr.gain[(c * len + kk) * ns + n];

        dh[n] += g * tr.c[kk * ns + n];
        dc_part[(c * len + kk) * ns + n] = g * hk;

        const double d_abar = dh[n] * hprev;
        const double d_gain = dh[n] * bk * uk;
        db_part[(c * len + kk) * ns + n] = dh[n] * gain * uk;
        d_u += dh[n] * gain * bk;

        d_delta += d_abar * an * a_bar;
        double d_a = d_abar * dt * a_bar;
        if (std::abs(an) < kZohLimitThreshold) {
          d_delta += d_gain;
          d_a += d_gain * dt * dt * 0.5;
        } else {
          d_delta += d_gain * a_bar;
          d_a += d_gain * (dt * a_bar - gain) / an;
        }
        da[c * ns + n] += d_a;
        dh[n] *= a_bar;
      }
      du_self[kk * ch + c] = d_u;
      dpre[kk * ch + c] = d_delta * sigmoid(tr.pre[kk * ch + c]);
    }
  });

  ScanGrads g{VideoCube({len, ch}),     VideoCube({ch, ns}), VideoCube({ch, ch}),
              VideoCube({ch}),          VideoCube({ns, ch}), VideoCube({ns, ch})};
  for (std::size_t i = 0; i < ch * ns; ++i) g.d_a_log[i] = da[i] * a[i];

  std::vector<double> db(len * ns, 0.0), dcv(len * ns, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < len * ns; ++i) {
      db[i] += db_part[c * len * ns + i];
      dcv[i] += dc_part[c * len * ns + i];
    }
  }

  // Projection weight gradients: sums over steps.
  parallel_for(ns, [&](std::size_t n) {
    for (std::size_t j = 0; j < ch; ++j) {
      double sb = 0.0, sc = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        sb += db[k * ns + n] * tr.u[k * ch + j];
        sc += dcv[k * ns + n] * tr.u[k * ch + j];
      }
      g.d_w_b[n * ch + j] = sb;
      g.d_w_c[n * ch + j] = sc;
    }
  });
  parallel_for(ch, [&](std::size_t c) {
    double sbias = 0.0;
    for (std::size_t k = 0; k < len; ++k) sbias += dpre[k * ch + c];
    g.d_b_delta[c] = sbias;
    for (std::size_t j = 0; j < ch; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < len; ++k) s += dpre[k * ch + c] * tr.u[k * ch + j];
      g.d_w_delta[c * ch + j] = s;
    }
  });
  // Input gradient in scan order, then mapped back to sequence rows.
  parallel_for(len, [&](std::size_t k) {
    double* out = &g.d_seq[src_row(k, len, tr.direction) * ch];
    for (std::size_t j = 0; j < ch; ++j) {
      double s = du_self[k * ch + j];
      for (std::size_t c = 0; c < ch; ++c) s += wd[c * ch + j] * dpre[k * ch + c];
      for (std::size_t n = 0; n < ns; ++n) {
        s += wb[n * ch + j] * db[k * ns + n] + wc[n * ch + j] * dcv[k * ns + n];
      }
      out[j] = s;
    }
  });
  return g;
}

VideoCube dense_oracle(const VideoCube& seq, const SsmParams& params, ScanDirection dir) {
  params.validate();
  require_seq(seq, params.channels, "dense_oracle");
  const std::size_t len = seq.dim(0), ch = params.channels, ns = params.state_size;
  if (len * ch * ns > kOracleMaxStateSteps) {
    throw ResourceError("dense_oracle: " + std::to_string(len * ch * ns) +
                        " state-steps exceeds the 1e6 limit");
  }
  // Backward scan = reverse, forward scan, reverse.
  std::vector<std::vector<double>> xs(len, std::vector<double>(ch));
  for (std::size_t k = 0; k < len; ++k)
    for (std::size_t j = 0; j < ch; ++j) xs[k][j] = seq[k * ch + j];
  if (dir == ScanDirection::kBackward) std::reverse(xs.begin(), xs.end());

  std::vector<std::vector<double>> ys(len, std::vector<double>(ch, 0.0));
  std::vector<std::vector<double>> h(ch, std::vector<double>(ns, 0.0));
  for (std::size_t k = 0; k < len; ++k) {
    const auto& xk = xs[k];
    std::vector<double> bk(ns), ck(ns);
    for (std::size_t n = 0; n < ns; ++n) {
      bk[n] = 0.0;
      ck[n] = 0.0;
      for (std::size_t j = 0; j < ch; ++j) {
        bk[n] += params.w_b[n * ch + j] * xk[j];
        ck[n] += params.w_c[n * ch + j] * xk[j];
      }
    }
    for (std::size_t c = 0; c < ch; ++c) {
      double pre = params.b_delta[c];
      for (std::size_t j = 0; j < ch; ++j) pre += params.w_delta[c * ch + j] * xk[j];
      const double delta = softplus(pre);
      double y = 0.0;
      for (std::size_t n = 0; n < ns; ++n) {
        const double a = -std::exp(params.a_log[c * ns + n]);
        const Discretized z = discretize(a, bk[n], delta);
        h[c][n] = z.a_bar * h[c][n] + z.b_bar * xk[c];
        y += ck[n] * h[c][n];
      }
      ys[k][c] = y;
    }
  }
  if (dir == ScanDirection::kBackward) std::reverse(ys.begin(), ys.end());
  VideoCube out({len, ch});
  for (std::size_t k = 0; k < len; ++k)
    for (std::size_t c = 0; c < ch; ++c) out[k * ch + c] = ys[k][c];
  return out;
}

RecurrenceResult scan_recurrence(const VideoCube& x, const VideoCube& delta, const VideoCube& b,
                                 const VideoCube& c, const VideoCube& a, const VideoCube* h0) {
  if (x.rank() != 2 || a.rank() != 2) throw ShapeError("scan_recurrence: x and a must be 2-D");
  const std::size_t len = x.dim(0), ch = x.dim(1), ns = a.dim(1);
  if (delta.dims() != x.dims() || a.dim(0) != ch || b.dims() != VideoCube::Dims{len, ns} ||
      c.dims() != VideoCube::Dims{len, ns}) {
    throw ShapeError("scan_recurrence: inconsistent sequence shapes");
  }
  if (h0 != nullptr && h0->dims() != VideoCube::Dims{ch, ns}) {
    throw ShapeError("scan_recurrence: initial state must be channels x N");
  }
  RecurrenceResult r{VideoCube({len, ch}), VideoCube({ch, ns})};
  if (h0 != nullptr) r.h_end = *h0;
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t ci = 0; ci < ch; ++ci) {
      double y = 0.0;
      for (std::size_t n = 0; n < ns; ++n) {
        const Discretized z = discretize(a[ci * ns + n], b[k * ns + n], delta[k * ch + ci]);
        double& h = r.h_end[ci * ns + n];
        h = z.a_bar * h + z.b_bar * x[k * ch + ci];
        y += c[k * ns + n] * h;
      }
      r.y[k * ch + ci] = y;
    }
  }
  return r;
}

std::uint64_t scan_multiply_adds(std::size_t length, std::size_t channels, std::size_t state_size) {
  const std::uint64_t per_step =
      channels * channels + 2 * state_size * channels + 3 * state_size * channels;
  return static_cast<std::uint64_t>(length) * per_step;
}

}  // namespace quadsci
