#include "quadsci/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "quadsci/error.hpp"
#include "quadsci/metrics.hpp"
#include "quadsci/ops.hpp"
#include "quadsci/rng.hpp"

namespace quadsci {
namespace {

double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError("non-finite objective value " + what);
  return v;
}

// Up to `count` distinct indices of [0, n) in draw order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count == 0 || count >= n) return idx;
  rng::Stream s(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(s.next_u64() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

VideoCube clamp01(VideoCube v) {
  for (auto& x : v.values()) x = std::clamp(x, 0.0, 1.0);
  return v;
}

VideoCube replicate_rgb(const VideoCube& raw) {
  const std::size_t h = raw.dim(0), w = raw.dim(1), t = raw.dim(3);
  VideoCube out({h, w, 3, t});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < t; ++k) out.at(i, j, c, k) = raw.at(i, j, 0, k);
  return out;
}

ToySample make_sample(const ToyDataSpec& spec, std::uint64_t clip_seed, std::uint64_t mask_seed,
                      std::uint64_t noise_seed) {
  ToySample s;
  s.rgb = moving_squares(spec.height, spec.width, spec.frames, spec.squares, clip_seed);
  const VideoCube raw = mosaic(s.rgb, spec.pattern);
  const MaskSet masks = gen_masks(spec.height, spec.width, spec.frames, mask_seed);
  const Measurement meas = encode(raw, masks, spec.noise_sigma, noise_seed);
  s.x_in = initialize(meas, masks);
  return s;
}

}  // namespace

ScalarFn tape_objective(std::function<ad::Var(ParamBinder&)> build) {
  return [build = std::move(build)](const WeightMap& weights, ad::Gradients* grads) {
    ad::Tape tape;
    tape.set_grad_enabled(grads != nullptr);
    ParamBinder p(tape, weights);
    ad::Var loss = build(p);
    if (loss.value().size() != 1) throw ContractError("objective must be scalar");
    if (grads != nullptr) *grads = tape.backward(loss);
    return loss.value()[0];
  };
}

GradCheckReport grad_check(const ScalarFn& fn, const WeightMap& point,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("finite-difference step must be positive");
  ad::Gradients analytic;
  finite_or_throw(fn(point, &analytic), "at the base point");

  // Coordinates of each group in key order, then index order.
  std::map<std::string, std::vector<std::pair<const std::string*, std::size_t>>> groups;
  for (const auto& [key, value] : point) {
    auto git = analytic.find(key);
    if (git == analytic.end() || git->second.dims() != value.dims()) {
      throw ContractError("no analytic gradient for '" + key + "'");
    }
    auto& coords = groups[options.group_of ? options.group_of(key) : key];
    for (std::size_t i = 0; i < value.size(); ++i) coords.emplace_back(&key, i);
  }

  GradCheckReport report;
  WeightMap probe = point;
  for (const auto& [group, coords] : groups) {
    GradCheckEntry group_worst{group};
    for (std::size_t c :
         sample_indices(coords.size(), options.coords_per_group, rng::derive(options.seed, group))) {
      const std::string& key = *coords[c].first;
      const std::size_t i = coords[c].second;
      double& w = probe[key][i];
      const double w0 = w;
      w = w0 + options.step;
      const double fp = finite_or_throw(fn(probe, nullptr), "at " + key);
      w = w0 - options.step;
      const double fm = finite_or_throw(fn(probe, nullptr), "at " + key);
      w = w0;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double a = analytic.at(key)[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel >= group_worst.rel_error) group_worst = {key, i, a, numeric, rel};
    }
    if (group_worst.rel_error >= report.max_rel_error) {
      report.max_rel_error = group_worst.rel_error;
      report.worst = group_worst;
    }
    report.worst_per_group.push_back(group_worst);
  }
  return report;
}

void adam_step(WeightMap& weights, const ad::Gradients& grads, OptimState& state) {
  if (grads.size() != weights.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(weights.size()) + " weights");
  }
  for (const auto& [key, w] : weights) {
    auto it = grads.find(key);
    if (it == grads.end()) throw ContractError("adam_step: no gradient for '" + key + "'");
    if (it->second.dims() != w.dims()) {
      throw ContractError("adam_step: gradient shape mismatch for '" + key + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& [key, w] : weights) {
      state.m[key] = VideoCube(w.dims(), 0.0);
      state.v[key] = VideoCube(w.dims(), 0.0);
    }
  } else if (state.m.size() != weights.size()) {
    throw ContractError("adam_step: optimizer state does not match the weights");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [key, w] : weights) {
    const VideoCube& g = grads.at(key);
    auto mit = state.m.find(key);
    auto vit = state.v.find(key);
    if (mit == state.m.end() || vit == state.v.end()) {
      throw ContractError("adam_step: no moments for '" + key + "'");
    }
    VideoCube& m = mit->second;
    VideoCube& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

VideoCube moving_squares(std::size_t height, std::size_t width, std::size_t frames,
                         std::size_t squares, std::uint64_t seed) {
  rng::Stream s(seed);
  VideoCube out({height, width, 3, frames});
  const double hd = static_cast<double>(height), wd = static_cast<double>(width);
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = s.uniform(0.1, 0.5);
    const double gx = s.uniform(-0.2, 0.2), gy = s.uniform(-0.2, 0.2);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double v = base + gx * static_cast<double>(j) / wd + gy * static_cast<double>(i) / hd;
        for (std::size_t t = 0; t < frames; ++t) out.at(i, j, c, t) = v;
      }
  }
  const int lo = std::max(2, static_cast<int>(std::min(height, width) / 5));
  const int hi = std::max(lo, static_cast<int>(std::min(height, width) * 3 / 8));
  for (std::size_t q = 0; q < squares; ++q) {
    const int size = s.integer(lo, hi);
    const double color[3] = {s.uniform(), s.uniform(), s.uniform()};
    double y = s.uniform(0.0, hd - size), x = s.uniform(0.0, wd - size);
    const double vy = s.uniform(-2.0, 2.0), vx = s.uniform(-2.0, 2.0);
    for (std::size_t t = 0; t < frames; ++t) {
      const double ft = static_cast<double>(t);
      const long top = std::lround(y + vy * ft), left = std::lround(x + vx * ft);
      for (long i = std::max(top, 0L); i < std::min(top + size, static_cast<long>(height)); ++i)
        for (long j = std::max(left, 0L); j < std::min(left + size, static_cast<long>(width)); ++j)
          for (std::size_t c = 0; c < 3; ++c)
            out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c, t) = color[c];
    }
  }
  return out;
}

ToySample toy_sample(const ToyDataSpec& spec, std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t i = spec.pool_size > 0 ? index % spec.pool_size : index;
  return make_sample(spec, rng::derive(rng::derive(seed, "clip"), i),
                     rng::derive(rng::derive(seed, "mask"), i),
                     rng::derive(rng::derive(seed, "noise"), i));
}

ToySample toy_holdout(const ToyDataSpec& spec, std::uint64_t seed) {
  return make_sample(spec, rng::derive(seed, "holdout-clip"), rng::derive(seed, "holdout-mask"),
                     rng::derive(seed, "holdout-noise"));
}

HoldoutEval evaluate_holdout(const Model& model, const ToySample& sample) {
  HoldoutEval e;
  e.model_psnr = psnr(sample.rgb, clamp01(forward(model, sample.x_in)));
  e.baseline_psnr = psnr(sample.rgb, clamp01(replicate_rgb(sample.x_in)));
  return e;
}

std::vector<double> smooth_curve(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ConfigError("smoothing window must be >= 1");
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

TrainResult train_toy(const NetworkConfig& config, const ToyDataSpec& data, std::uint64_t seed,
                      const TrainSchedule& schedule) {
  NetworkConfig cfg = config;
  cfg.height = data.height;
  cfg.width = data.width;
  cfg.frames = data.frames;
  cfg.validate();

  TrainResult r;
  r.model = build(cfg, rng::derive(seed, "model"));
  OptimState opt;
  std::size_t step = 0;
  for (std::size_t stage = 0; stage < 3; ++stage) {
    opt.lr = schedule.lr[stage];
    for (std::size_t it = 0; it < schedule.iterations[stage]; ++it, ++step) {
      const ToySample sample = toy_sample(data, seed, step);
      ad::Gradients grads;
      double loss = 0.0;
      VideoCube out;
      try {
        ad::Tape tape;
        ParamBinder p(tape, r.model.weights);
        ad::Var y = forward(p, cfg, tape.constant(sample.x_in));
        ad::Var l = ad::mse(y, tape.constant(sample.rgb));
        loss = l.value()[0];
        if (!std::isfinite(loss)) throw NumericError("loss is not finite");
        out = y.value();
        grads = tape.backward(l);
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what());
      }
      adam_step(r.model.weights, grads, opt);
      r.loss.push_back(loss);
      r.psnr.push_back(psnr(sample.rgb, clamp01(std::move(out))));
    }
  }
  r.smoothed = smooth_curve(r.loss, schedule.smoothing_window);
  if (!r.smoothed.empty()) {
    r.initial_smoothed = r.smoothed[std::min(schedule.smoothing_window, r.smoothed.size()) - 1];
    r.final_smoothed = r.smoothed.back();
  }
  r.holdout = evaluate_holdout(r.model, toy_holdout(data, seed));
  return r;
}

void write_loss_csv(const std::filesystem::path& path, const TrainResult& result) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "step,loss,psnr\n";
  f.precision(17);
  for (std::size_t i = 0; i < result.loss.size(); ++i) {
    f << i << ',' << result.loss[i] << ',' << result.psnr[i] << '\n';
  }
  if (!f) throw DataError("write failed for " + path.string());
}

}  // namespace quadsci
