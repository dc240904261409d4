#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "quadsci/network.hpp"
#include "quadsci/sci_forward.hpp"

namespace quadsci {

// ---- finite-difference checking ----

/// Scalar objective over a weight set. When `grads` is non-null the function
/// also fills the analytic gradient.
using ScalarFn = std::function<double(const WeightMap& weights, ad::Gradients* grads)>;

/// Wraps a tape builder: the returned function records `build` on a fresh
/// tape and backpropagates when gradients are requested.
ScalarFn tape_objective(std::function<ad::Var(ParamBinder&)> build);

struct GradCheckOptions {
  double step = 1e-5;
  double floor = 1e-8;  // relative-error denominator floor
  /// Coordinates sampled per group; 0 checks all of them.
  std::size_t coords_per_group = 0;
  std::uint64_t seed = 0;
  /// Maps a weight key to its group; unset means one group per key.
  /// Sampling is uniform over the union of a group's coordinates.
  std::function<std::string(const std::string&)> group_of;
};

struct GradCheckEntry {
  std::string key;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::size_t coordinates = 0;
  std::vector<GradCheckEntry> worst_per_group;  // in group-name order
};

/// Central differences (f(w + s) - f(w - s)) / 2s per coordinate against the
/// analytic gradient, relative error |a - n| / max(|a|, |n|, floor). Max-pool
/// ties make the objective non-differentiable; callers dither their inputs so
/// no window holds two equal values. Throws NumericError on non-finite values.
GradCheckReport grad_check(const ScalarFn& fn, const WeightMap& point,
                           const GradCheckOptions& options = {});

// ---- Adam ----

struct OptimState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  WeightMap m, v;  // created as zeros on the first step
};

/// Bias-corrected Adam update in place. Keys and shapes of `grads` must
/// equal those of `weights` (ContractError otherwise).
void adam_step(WeightMap& weights, const ad::Gradients& grads, OptimState& state);

// ---- toy training ----

/// Synthetic moving colored squares over a smooth background, H x W x 3 x T
/// in [0, 1].
VideoCube moving_squares(std::size_t height, std::size_t width, std::size_t frames,
                         std::size_t squares, std::uint64_t seed);

struct ToyDataSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t frames = 4;
  std::size_t squares = 2;
  CfaPattern pattern = CfaPattern::quad();
  double noise_sigma = 0.0;
  /// 0 draws a fresh clip and mask for every step; N > 0 cycles through N
  /// fixed (clip, mask) samples.
  std::size_t pool_size = 0;
};

struct TrainSchedule {
  std::array<std::size_t, 3> iterations{200, 50, 50};
  std::array<double, 3> lr{5e-4, 1e-4, 1e-5};
  std::size_t smoothing_window = 20;
};

struct ToySample {
  VideoCube rgb;   // ground truth, H x W x 3 x T
  VideoCube x_in;  // initialization, H x W x 1 x T
};

/// Sample `index` of the training stream (after pool folding).
ToySample toy_sample(const ToyDataSpec& spec, std::uint64_t seed, std::uint64_t index);
/// The held-out clip, encoded with a fixed evaluation mask.
ToySample toy_holdout(const ToyDataSpec& spec, std::uint64_t seed);

struct HoldoutEval {
  double model_psnr = 0.0;     // clamped network output vs ground truth
  double baseline_psnr = 0.0;  // initialization replicated to RGB
};
HoldoutEval evaluate_holdout(const Model& model, const ToySample& sample);

struct TrainResult {
  Model model;
  std::vector<double> loss;      // per step
  std::vector<double> psnr;      // per step, clamped output of the training sample
  std::vector<double> smoothed;  // trailing mean over the smoothing window
  double initial_smoothed = 0.0;  // mean of the first full window
  double final_smoothed = 0.0;    // mean of the last window
  HoldoutEval holdout;
};

/// Adam on MSE(forward(init), rgb) through the three-stage schedule. Same
/// seed gives the same curve bitwise. A non-finite loss or activation throws
/// TrainingError naming the step.
TrainResult train_toy(const NetworkConfig& config, const ToyDataSpec& data, std::uint64_t seed,
                      const TrainSchedule& schedule = {});

/// Trailing mean, window shrinking at the start.
std::vector<double> smooth_curve(const std::vector<double>& values, std::size_t window);

/// CSV with header "step,loss,psnr".
void write_loss_csv(const std::filesystem::path& path, const TrainResult& result);

}  // namespace quadsci
