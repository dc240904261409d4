#pragma once

#include <vector>

#include "quadsci/video_cube.hpp"

namespace quadsci {

/// PSNR reported when a frame's MSE drops below kPsnrMseFloor.
inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kPsnrMseFloor = 1e-10;

// SSIM constants: 11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, range 1.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

struct QualityReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;
};

/// Per-frame PSNR (peak 1.0, MSE over all pixels and channels of the frame),
/// averaged over frames. Cubes are read as H x W x C x T.
double psnr(const VideoCube& reference, const VideoCube& test);
std::vector<double> psnr_per_frame(const VideoCube& reference, const VideoCube& test);

/// Mean SSIM over frames and channels using valid 11x11 Gaussian windows.
double ssim(const VideoCube& reference, const VideoCube& test);
std::vector<double> ssim_per_frame(const VideoCube& reference, const VideoCube& test);

QualityReport quality_report(const VideoCube& reference, const VideoCube& test);

/// Normalized 11x11 Gaussian weights, row-major.
std::vector<double> ssim_window();

}  // namespace quadsci
