#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "quadsci/video_cube.hpp"

namespace quadsci {

enum class CfaKind { kBayer, kQuadBayer };

struct CfaPattern {
  CfaKind kind = CfaKind::kQuadBayer;

  /// Spatial period in pixels: 2 for Bayer (RGGB), 4 for quad-Bayer.
  std::size_t period() const { return kind == CfaKind::kBayer ? 2 : 4; }
  /// Channel (0 = R, 1 = G, 2 = B) sampled at pixel (h, w).
  int channel_at(std::size_t h, std::size_t w) const;

  static CfaPattern bayer() { return {CfaKind::kBayer}; }
  static CfaPattern quad() { return {CfaKind::kQuadBayer}; }
  static CfaPattern parse(const std::string& name);  // "bayer" | "quad"
};

/// Binary H x W maps, one per color; they partition the plane.
struct CfaMasks {
  VideoCube r, g, b;
  const VideoCube& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

CfaMasks cfa_masks(CfaPattern pattern, std::size_t height, std::size_t width);

/// H x W x 3 x T RGB video -> H x W x 1 x T raw mosaic.
VideoCube mosaic(const VideoCube& rgb, CfaPattern pattern);

/// The four color-site sub-planes (r, g1, g2, b), each H/2 x W/2. For
/// quad-Bayer every 2x2 same-color block becomes a 2x2 tile of its sub-plane.
struct SubMeasurements {
  VideoCube r, g1, g2, b;
};
SubMeasurements split_sub_measurements(const VideoCube& plane, CfaPattern pattern);
VideoCube assemble_sub_measurements(const SubMeasurements& parts, CfaPattern pattern);

struct MaskSet {
  VideoCube masks;     // H x W x 1 x T, entries in {0, 1}
  VideoCube sum_t;     // H x W
  VideoCube sum_sq_t;  // H x W
  std::uint64_t seed = 0;

  std::size_t height() const { return masks.dim(0); }
  std::size_t width() const { return masks.dim(1); }
  std::size_t frames() const { return masks.dim(3); }

  /// Wraps an existing H x W x 1 x T binary cube and derives the sums.
  static MaskSet from_cube(VideoCube masks, std::uint64_t seed = 0);
};

/// i.i.d. Bernoulli(0.5) masks; entry i (row-major over H x W x 1 x T) is the
/// top bit of counter-based SplitMix64 draw i of `seed`.
MaskSet gen_masks(std::size_t height, std::size_t width, std::size_t frames, std::uint64_t seed);

struct Measurement {
  VideoCube y;  // H x W x 1 x 1
  std::size_t compression_ratio = 1;
  double noise_sigma = 0.0;
};

/// Y = sum_t M_t * raw_t + n, n ~ N(0, sigma^2) drawn from `seed`.
Measurement encode(const VideoCube& raw, const MaskSet& masks, double noise_sigma,
                   std::uint64_t seed);

// Frame-stacked vectorization x = [vec(X_1); ...; vec(X_T)] of an H x W x 1 x T
// cube, and its inverse.
std::vector<double> vectorize(const VideoCube& raw);
VideoCube unvectorize(const std::vector<double>& x, std::size_t height, std::size_t width,
                      std::size_t frames);

/// Phi x with Phi = [D_1, ..., D_T], D_t = Diag(vec(M_t)); length HWT -> HW.
std::vector<double> apply_phi(const MaskSet& masks, const std::vector<double>& x);
/// Phi^T y; length HW -> HWT.
std::vector<double> apply_phi_transpose(const MaskSet& masks, const std::vector<double>& y);

inline constexpr double kInitEpsilon = 1e-6;

/// X_in(h, w, t) = M(h, w, t) * Y(h, w) / max(sum_t M(h, w, t), 1e-6).
VideoCube initialize(const Measurement& meas, const MaskSet& masks);

/// Measurement loaded from a VCUBE file (H x W, or H x W x 1 x 1).
Measurement measurement_from_cube(const VideoCube& y, std::size_t compression_ratio);

}  // namespace quadsci
