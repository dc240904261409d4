#include <gtest/gtest.h>

#include <cmath>

#include "quadsci/baseline.hpp"
#include "quadsci/error.hpp"
#include "quadsci/metrics.hpp"
#include "quadsci/train.hpp"
#include "test_util.hpp"

namespace quadsci {
namespace {

using testing::random_cube;

struct Instance {
  VideoCube raw;
  MaskSet masks;
  Measurement meas;
};

Instance random_instance(std::size_t h, std::size_t w, std::size_t t, std::uint64_t seed) {
  Instance in;
  in.raw = random_cube({h, w, 1, t}, seed);
  in.masks = gen_masks(h, w, t, seed + 1000);
  in.meas = encode(in.raw, in.masks, 0.0, 0);
  return in;
}

double total_variation(const VideoCube& x) {
  double tv = 0.0;
  for (std::size_t k = 0; k < x.dim(3); ++k)
    for (std::size_t i = 0; i < x.dim(0); ++i)
      for (std::size_t j = 0; j < x.dim(1); ++j) {
        if (i + 1 < x.dim(0)) tv += std::abs(x.at(i + 1, j, 0, k) - x.at(i, j, 0, k));
        if (j + 1 < x.dim(1)) tv += std::abs(x.at(i, j + 1, 0, k) - x.at(i, j, 0, k));
      }
  return tv;
}

TEST(GapConfig, Validation) {
  GapConfig c;
  EXPECT_NO_THROW(c.validate());
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.iterations = 1;
  c.tv_weight = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Gap, FullMaskSingleFrameRecoversInOneStep) {
  const VideoCube raw = random_cube({8, 8, 1, 1}, 1);
  const MaskSet masks = MaskSet::from_cube(VideoCube({8, 8, 1, 1}, 1.0));
  const Measurement meas = encode(raw, masks, 0.0, 0);
  GapConfig cfg;
  cfg.iterations = 1;
  std::vector<double> res;
  const VideoCube x = gap_tv(meas, masks, cfg, &res);
  EXPECT_EQ(x, raw);
  ASSERT_EQ(res.size(), 2u);
  EXPECT_EQ(res[1], 0.0);
}

TEST(Gap, ResidualNeverIncreasesWithoutTv) {
  GapConfig cfg;
  cfg.iterations = 10;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Instance in = random_instance(8, 8, 2, seed);
    // From the measurement-consistent initialization and from an arbitrary
    // start far from the constraint set.
    const VideoCube wild = random_cube({8, 8, 1, 2}, seed + 7, -3, 3);
    for (const VideoCube* start : {static_cast<const VideoCube*>(nullptr), &wild}) {
      std::vector<double> res;
      gap_tv(in.meas, in.masks, cfg, &res, start);
      ASSERT_EQ(res.size(), 11u);
      for (std::size_t k = 1; k < res.size(); ++k) EXPECT_LE(res[k], res[k - 1]) << seed << " " << k;
    }
  }
}

TEST(Gap, ProjectionStepFromArbitraryStartCollapsesResidual) {
  const Instance in = random_instance(8, 8, 2, 3);
  const VideoCube wild = random_cube({8, 8, 1, 2}, 9, -3, 3);
  GapConfig cfg;
  cfg.iterations = 1;
  std::vector<double> res;
  gap_tv(in.meas, in.masks, cfg, &res, &wild);
  EXPECT_GT(res[0], 1.0);
  EXPECT_LT(res[1], 1e-9 * res[0]);
}

TEST(Gap, ConsistentStartIsFixedPoint) {
  const Instance in = random_instance(8, 8, 2, 4);
  const VideoCube start = in.raw;
  GapConfig cfg;
  cfg.iterations = 5;
  const VideoCube x = gap_tv(in.meas, in.masks, cfg, nullptr, &start);
  EXPECT_LE(testing::max_abs_diff(x, in.raw), 1e-15);
}

TEST(Gap, DegenerateSensing) {
  const MaskSet masks = MaskSet::from_cube(VideoCube({8, 8, 1, 2}, 0.0));
  const Measurement meas = encode(random_cube({8, 8, 1, 2}, 1), masks, 0.0, 0);
  EXPECT_THROW(gap_tv(meas, masks, GapConfig{}), DegenerateSensingError);
}

TEST(Gap, TvImprovesNoisyPiecewiseSmoothReconstruction) {
  const VideoCube rgb = moving_squares(32, 32, 4, 2, 5);
  VideoCube gray({32, 32, 1, 4});
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j)
      for (std::size_t t = 0; t < 4; ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += rgb.at(i, j, c, t);
        gray.at(i, j, 0, t) = s / 3.0;
      }
  const MaskSet masks = gen_masks(32, 32, 4, 11);
  const Measurement meas = encode(gray, masks, 0.0, 0);
  GapConfig plain, tv;
  plain.iterations = tv.iterations = 30;
  tv.tv_weight = 0.02;
  const double p_init = psnr(gray, initialize(meas, masks));
  const double p_tv = psnr(gray, gap_tv(meas, masks, tv));
  EXPECT_GT(p_tv, p_init + 1.0);
  EXPECT_GT(p_tv, psnr(gray, gap_tv(meas, masks, plain)));
}

TEST(Tv, ZeroWeightIsIdentityAndConstantIsFixed) {
  const VideoCube x = random_cube({6, 7, 1, 2}, 1);
  EXPECT_EQ(tv_denoise(x, 0.0, 20, 0.05), x);
  const VideoCube flat({6, 7, 1, 2}, 0.4);
  EXPECT_EQ(tv_denoise(flat, 0.3, 20, 0.05), flat);
}

TEST(Tv, ReducesTotalVariation) {
  const VideoCube x = random_cube({16, 16, 1, 2}, 2);
  const VideoCube d = tv_denoise(x, 0.1, 20, 0.05);
  EXPECT_LT(total_variation(d), 0.8 * total_variation(x));
}

TEST(ExpandCfa, QuadSitesOnFourByFour) {
  const VideoCube ones({4, 4, 1, 1}, 1.0);
  const VideoCube s = expand_cfa(ones, CfaPattern::quad());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const bool red = i < 2 && j < 2, blue = i >= 2 && j >= 2;
      EXPECT_EQ(s.at(i, j, 0, 0), red ? 1.0 : 0.0) << i << "," << j;
      EXPECT_EQ(s.at(i, j, 2, 0), blue ? 1.0 : 0.0) << i << "," << j;
      EXPECT_EQ(s.at(i, j, 1, 0), red || blue ? 0.0 : 1.0) << i << "," << j;
    }
}

TEST(ExpandCfa, ChannelSumIsRawForBothPatterns) {
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube raw = random_cube({8, 12, 1, 3}, 4);
    const VideoCube s = expand_cfa(raw, p);
    ASSERT_EQ(s.dims(), (VideoCube::Dims{8, 12, 3, 3}));
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 12; ++j)
        for (std::size_t t = 0; t < 3; ++t) {
          EXPECT_EQ(s.at(i, j, 0, t) + s.at(i, j, 1, t) + s.at(i, j, 2, t), raw.at(i, j, 0, t));
          EXPECT_EQ(s.at(i, j, p.channel_at(i, j), t), raw.at(i, j, 0, t));
        }
  }
  EXPECT_THROW(expand_cfa(VideoCube({6, 8, 1, 1}), CfaPattern::quad()), ShapeError);
  EXPECT_THROW(expand_cfa(VideoCube({5, 8, 1, 1}), CfaPattern::bayer()), ShapeError);
}

TEST(Demosaic, ConstantStaysConstant) {
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    VideoCube rgb({16, 16, 3, 2});
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j)
        for (std::size_t t = 0; t < 2; ++t) {
          rgb.at(i, j, 0, t) = 0.2;
          rgb.at(i, j, 1, t) = 0.5;
          rgb.at(i, j, 2, t) = 0.9;
        }
    const VideoCube out = demosaic_bilinear(expand_cfa(mosaic(rgb, p), p), p);
    EXPECT_LE(testing::max_abs_diff(out, rgb), 1e-15);
  }
}

TEST(Demosaic, SampledSitesAreBitIdentical) {
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube raw = random_cube({16, 16, 1, 2}, 6);
    const VideoCube out = demosaic_bilinear(expand_cfa(raw, p), p);
    EXPECT_EQ(mosaic(out, p), raw);
  }
}

TEST(Demosaic, AffineRampExactAwayFromBorders) {
  const std::size_t n = 24;
  VideoCube rgb({n, n, 3, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        rgb.at(i, j, c, 0) = 0.1 + 0.02 * i + 0.015 * j + 0.1 * c - 0.004 * (i + j) * c;
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube out = demosaic_bilinear(expand_cfa(mosaic(rgb, p), p), p);
    for (std::size_t i = 2; i + 2 < n; ++i)
      for (std::size_t j = 2; j + 2 < n; ++j)
        for (std::size_t c = 0; c < 3; ++c)
          EXPECT_NEAR(out.at(i, j, c, 0), rgb.at(i, j, c, 0), 1e-12) << i << "," << j << "," << c;
  }
}

TEST(Demosaic, StaysWithinSampleRange) {
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube raw = random_cube({16, 16, 1, 1}, 8);
    const VideoCube sparse = expand_cfa(raw, p);
    const VideoCube out = demosaic_bilinear(sparse, p);
    for (int c = 0; c < 3; ++c) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j)
          if (p.channel_at(i, j) == c) {
            lo = std::min(lo, raw.at(i, j, 0, 0));
            hi = std::max(hi, raw.at(i, j, 0, 0));
          }
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
          EXPECT_GE(out.at(i, j, static_cast<std::size_t>(c), 0), lo);
          EXPECT_LE(out.at(i, j, static_cast<std::size_t>(c), 0), hi);
        }
    }
  }
}

TEST(Demosaic, BeatsZeroFilledBySixDb) {
  VideoCube rgb({32, 32, 3, 2});
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 2; ++t)
          rgb.at(i, j, c, t) = 0.5 + 0.3 * std::sin(0.2 * i + 0.1 * c + 0.3 * t) *
                                         std::cos(0.15 * j - 0.2 * c);
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube sparse = expand_cfa(mosaic(rgb, p), p);
    EXPECT_GE(psnr(rgb, demosaic_bilinear(sparse, p)), psnr(rgb, sparse) + 6.0);
  }
}

}  // namespace
}  // namespace quadsci
