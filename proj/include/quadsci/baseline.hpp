#pragma once

#include <vector>

#include "quadsci/sci_forward.hpp"

namespace quadsci {

struct GapConfig {
  std::size_t iterations = 50;
  double tv_weight = 0.0;  // lambda
  std::size_t tv_inner_steps = 20;
  double tv_step = 0.05;

  void validate() const;  // ConfigError unless iterations >= 1, lambda >= 0
};

/// ||y - Phi x||^2 for an H x W x 1 x T raw cube.
double measurement_residual(const Measurement& meas, const MaskSet& masks, const VideoCube& raw);

/// Anisotropic spatial TV denoising of each frame by fixed-step subgradient
/// descent on 0.5 ||x - v||^2 + weight * TV(x). weight 0 returns v unchanged.
VideoCube tv_denoise(const VideoCube& raw, double weight, std::size_t steps, double step);

/// GAP-TV-like reconstruction:
///   x <- D_TV(x + Phi^T ((y - Phi x) / (diag(Phi Phi^T) + eps)))
/// starting from `start` or, when null, from initialize(meas, masks).
/// `residuals` receives ||y - Phi x||^2 for the start point followed by one
/// value per iteration. Throws DegenerateSensingError when no pixel is ever
/// exposed.
VideoCube gap_tv(const Measurement& meas, const MaskSet& masks, const GapConfig& cfg,
                 std::vector<double>* residuals = nullptr, const VideoCube* start = nullptr);

/// H x W x 1 x T raw -> H x W x 3 x T where channel c keeps raw only at the
/// pattern's c-sites and is zero elsewhere.
VideoCube expand_cfa(const VideoCube& raw, CfaPattern pattern);

/// Fills every channel's missing sites by linear interpolation from its own
/// samples; sampled sites are copied unchanged. Channels whose sites form a
/// row x column grid (R and B) use separable bilinear interpolation; the
/// green lattice averages the nearest-sample linear fits along the row and
/// along the column. Borders extend the outermost sample.
VideoCube demosaic_bilinear(const VideoCube& sparse, CfaPattern pattern);

}  // namespace quadsci
