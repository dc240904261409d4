#include "quadsci/sci_forward.hpp"

#include <cmath>

#include "quadsci/error.hpp"
#include "quadsci/rng.hpp"

namespace quadsci {
namespace {

void require_divisible(std::size_t h, std::size_t w, CfaPattern pattern, const char* what) {
  const std::size_t p = pattern.period();
  if (h % p != 0 || w % p != 0) {
    throw ShapeError(std::string(what) + ": " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by the CFA period " + std::to_string(p));
  }
}

std::pair<std::size_t, std::size_t> plane_dims(const VideoCube& plane) {
  const auto d = as_rank4(plane.dims());
  if (d[2] != 1 || d[3] != 1) {
    throw ShapeError("expected an H x W plane, got " + dims_to_string(plane.dims()));
  }
  return {d[0], d[1]};
}

// Source pixel of sub-plane `part` (0 r, 1 g1, 2 g2, 3 b) at (i, j).
std::pair<std::size_t, std::size_t> site_of(CfaPattern pattern, int part, std::size_t i,
                                            std::size_t j) {
  const std::size_t dr = (part == 2 || part == 3) ? 1 : 0;
  const std::size_t dc = (part == 1 || part == 3) ? 1 : 0;
  if (pattern.kind == CfaKind::kBayer) return {2 * i + dr, 2 * j + dc};
  // Quad: 2x2 tile (i, j) of the sub-plane comes from 4x4 cell (i/2, j/2).
  const std::size_t ci = i / 2, cj = j / 2;
  return {4 * ci + 2 * dr + i % 2, 4 * cj + 2 * dc + j % 2};
}

}  // namespace

int CfaPattern::channel_at(std::size_t h, std::size_t w) const {
  std::size_t r, c;
  if (kind == CfaKind::kBayer) {
    r = h % 2;
    c = w % 2;
  } else {
    r = (h % 4) / 2;
    c = (w % 4) / 2;
  }
  if (r == 0 && c == 0) return 0;
  if (r == 1 && c == 1) return 2;
  return 1;
}

CfaPattern CfaPattern::parse(const std::string& name) {
  if (name == "bayer") return bayer();
  if (name == "quad") return quad();
  throw ConfigError("unknown CFA pattern '" + name + "' (expected bayer or quad)");
}

CfaMasks cfa_masks(CfaPattern pattern, std::size_t height, std::size_t width) {
  require_divisible(height, width, pattern, "cfa_masks");
  CfaMasks m{VideoCube({height, width}), VideoCube({height, width}), VideoCube({height, width})};
  for (std::size_t h = 0; h < height; ++h) {
    for (std::size_t w = 0; w < width; ++w) {
      switch (pattern.channel_at(h, w)) {
        case 0: m.r.at(h, w) = 1.0; break;
        case 1: m.g.at(h, w) = 1.0; break;
        default: m.b.at(h, w) = 1.0; break;
      }
    }
  }
  return m;
}

VideoCube mosaic(const VideoCube& rgb, CfaPattern pattern) {
  if (rgb.rank() != 4 || rgb.dim(2) != 3) {
    throw ShapeError("mosaic expects H x W x 3 x T, got " + dims_to_string(rgb.dims()));
  }
  const std::size_t h = rgb.dim(0), w = rgb.dim(1), t = rgb.dim(3);
  require_divisible(h, w, pattern, "mosaic");
  VideoCube raw({h, w, 1, t});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto c = static_cast<std::size_t>(pattern.channel_at(y, x));
      for (std::size_t f = 0; f < t; ++f) raw.at(y, x, 0, f) = rgb.at(y, x, c, f);
    }
  }
  return raw;
}

SubMeasurements split_sub_measurements(const VideoCube& plane, CfaPattern pattern) {
  const auto [h, w] = plane_dims(plane);
  require_divisible(h, w, pattern, "split_sub_measurements");
  const std::size_t sh = h / 2, sw = w / 2;
  std::array<VideoCube, 4> parts{VideoCube({sh, sw}), VideoCube({sh, sw}), VideoCube({sh, sw}),
                                 VideoCube({sh, sw})};
  for (int p = 0; p < 4; ++p) {
    for (std::size_t i = 0; i < sh; ++i) {
      for (std::size_t j = 0; j < sw; ++j) {
        const auto [r, c] = site_of(pattern, p, i, j);
        parts[p].at(i, j) = plane[r * w + c];
      }
    }
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), std::move(parts[3])};
}

VideoCube assemble_sub_measurements(const SubMeasurements& parts, CfaPattern pattern) {
  const auto [sh, sw] = plane_dims(parts.r);
  const std::array<const VideoCube*, 4> src{&parts.r, &parts.g1, &parts.g2, &parts.b};
  for (const auto* s : src) {
    if (plane_dims(*s) != std::pair{sh, sw}) throw ShapeError("sub-measurements differ in shape");
  }
  const std::size_t h = 2 * sh, w = 2 * sw;
  require_divisible(h, w, pattern, "assemble_sub_measurements");
  VideoCube plane({h, w});
  for (int p = 0; p < 4; ++p) {
    for (std::size_t i = 0; i < sh; ++i) {
      for (std::size_t j = 0; j < sw; ++j) {
        const auto [r, c] = site_of(pattern, p, i, j);
        plane.at(r, c) = (*src[p])[i * sw + j];
      }
    }
  }
  return plane;
}

MaskSet MaskSet::from_cube(VideoCube masks, std::uint64_t seed) {
  if (masks.rank() != 4 || masks.dim(2) != 1) {
    throw ShapeError("mask cube must be H x W x 1 x T, got " + dims_to_string(masks.dims()));
  }
  const std::size_t h = masks.dim(0), w = masks.dim(1), t = masks.dim(3);
  MaskSet set{std::move(masks), VideoCube({h, w}), VideoCube({h, w}), seed};
  for (std::size_t p = 0; p < h * w; ++p) {
    double s = 0.0, sq = 0.0;
    for (std::size_t f = 0; f < t; ++f) {
      const double m = set.masks[p * t + f];
      if (m != 0.0 && m != 1.0) throw DataError("mask entries must be 0 or 1");
      s += m;
      sq += m * m;
    }
    set.sum_t[p] = s;
    set.sum_sq_t[p] = sq;
  }
  return set;
}

MaskSet gen_masks(std::size_t height, std::size_t width, std::size_t frames, std::uint64_t seed) {
  if (height == 0 || width == 0 || frames == 0) throw ConfigError("mask dims must be >= 1");
  VideoCube m({height, width, 1, frames});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng::bit(seed, i);
  return MaskSet::from_cube(std::move(m), seed);
}

Measurement encode(const VideoCube& raw, const MaskSet& masks, double noise_sigma,
                   std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (raw.dims() != masks.masks.dims()) {
    throw ShapeError("encode: raw video " + dims_to_string(raw.dims()) + " does not match masks " +
                     dims_to_string(masks.masks.dims()));
  }
  const std::size_t h = masks.height(), w = masks.width(), t = masks.frames();
  Measurement meas{VideoCube({h, w, 1, 1}), t, noise_sigma};
  for (std::size_t p = 0; p < h * w; ++p) {
    double s = 0.0;
    for (std::size_t f = 0; f < t; ++f) s += masks.masks[p * t + f] * raw[p * t + f];
    if (noise_sigma > 0.0) s += noise_sigma * rng::normal(seed, p);
    meas.y[p] = s;
  }
  return meas;
}

std::vector<double> vectorize(const VideoCube& raw) {
  if (raw.rank() != 4 || raw.dim(2) != 1) {
    throw ShapeError("vectorize expects H x W x 1 x T, got " + dims_to_string(raw.dims()));
  }
  const std::size_t hw = raw.dim(0) * raw.dim(1), t = raw.dim(3);
  std::vector<double> x(hw * t);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t p = 0; p < hw; ++p) x[f * hw + p] = raw[p * t + f];
  return x;
}

VideoCube unvectorize(const std::vector<double>& x, std::size_t height, std::size_t width,
                      std::size_t frames) {
  const std::size_t hw = height * width;
  if (x.size() != hw * frames) throw ShapeError("unvectorize: length mismatch");
  VideoCube raw({height, width, 1, frames});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t p = 0; p < hw; ++p) raw[p * frames + f] = x[f * hw + p];
  return raw;
}

std::vector<double> apply_phi(const MaskSet& masks, const std::vector<double>& x) {
  const std::size_t hw = masks.height() * masks.width(), t = masks.frames();
  if (x.size() != hw * t) {
    throw ShapeError("apply_phi: expected length " + std::to_string(hw * t) + ", got " +
                     std::to_string(x.size()));
  }
  std::vector<double> y(hw, 0.0);
  for (std::size_t p = 0; p < hw; ++p) {
    double s = 0.0;
    for (std::size_t f = 0; f < t; ++f) s += masks.masks[p * t + f] * x[f * hw + p];
    y[p] = s;
  }
  return y;
}

std::vector<double> apply_phi_transpose(const MaskSet& masks, const std::vector<double>& y) {
  const std::size_t hw = masks.height() * masks.width(), t = masks.frames();
  if (y.size() != hw) {
    throw ShapeError("apply_phi_transpose: expected length " + std::to_string(hw) + ", got " +
                     std::to_string(y.size()));
  }
  std::vector<double> x(hw * t);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t p = 0; p < hw; ++p) x[f * hw + p] = masks.masks[p * t + f] * y[p];
  return x;
}

VideoCube initialize(const Measurement& meas, const MaskSet& masks) {
  const std::size_t h = masks.height(), w = masks.width(), t = masks.frames();
  const auto yd = as_rank4(meas.y.dims());
  if (yd[0] != h || yd[1] != w || yd[2] != 1 || yd[3] != 1) {
    throw ShapeError("initialize: measurement " + dims_to_string(meas.y.dims()) +
                     " does not match masks " + dims_to_string(masks.masks.dims()));
  }
  VideoCube x({h, w, 1, t});
  for (std::size_t p = 0; p < h * w; ++p) {
    const double norm = meas.y[p] / std::max(masks.sum_t[p], kInitEpsilon);
    for (std::size_t f = 0; f < t; ++f) x[p * t + f] = masks.masks[p * t + f] * norm;
  }
  return x;
}

Measurement measurement_from_cube(const VideoCube& y, std::size_t compression_ratio) {
  const auto d = as_rank4(y.dims());
  if (d[2] != 1 || d[3] != 1) {
    throw ShapeError("measurement must be H x W (x 1 x 1), got " + dims_to_string(y.dims()));
  }
  return {y.reshaped({d[0], d[1], 1, 1}), compression_ratio, 0.0};
}

}  // namespace quadsci
