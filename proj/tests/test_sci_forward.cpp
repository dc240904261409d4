#include <gtest/gtest.h>

#include "quadsci/error.hpp"
#include "quadsci/sci_forward.hpp"
#include "test_util.hpp"

namespace quadsci {
namespace {

using testing::plane;
using testing::random_cube;

MaskSet hand_masks() {
  VideoCube m({2, 2, 1, 2});
  const double f0[2][2] = {{1, 0}, {1, 1}}, f1[2][2] = {{0, 1}, {1, 0}};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      m.at(i, j, 0, 0) = f0[i][j];
      m.at(i, j, 0, 1) = f1[i][j];
    }
  return MaskSet::from_cube(m);
}

VideoCube hand_raw() {
  VideoCube r({2, 2, 1, 2});
  double v = 1.0;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) r.at(i, j, 0, t) = v++;
  return r;
}

TEST(Cfa, QuadBayerSiteClasses) {
  const CfaMasks m = cfa_masks(CfaPattern::quad(), 4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const bool r = i < 2 && j < 2, b = i >= 2 && j >= 2;
      EXPECT_EQ(m.r.at(i, j), r ? 1.0 : 0.0) << i << "," << j;
      EXPECT_EQ(m.b.at(i, j), b ? 1.0 : 0.0) << i << "," << j;
      EXPECT_EQ(m.g.at(i, j), (!r && !b) ? 1.0 : 0.0) << i << "," << j;
    }
}

TEST(Cfa, BayerUnitCell) {
  const CfaMasks m = cfa_masks(CfaPattern::bayer(), 2, 2);
  EXPECT_EQ(m.r.values(), (std::vector<double>{1, 0, 0, 0}));
  EXPECT_EQ(m.g.values(), (std::vector<double>{0, 1, 1, 0}));
  EXPECT_EQ(m.b.values(), (std::vector<double>{0, 0, 0, 1}));
}

TEST(Cfa, MasksPartitionThePlane) {
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    for (std::size_t n : {4, 8, 12}) {
      const CfaMasks m = cfa_masks(p, n, n + 4);
      for (std::size_t i = 0; i < m.r.size(); ++i) EXPECT_EQ(m.r[i] + m.g[i] + m.b[i], 1.0);
    }
  }
  EXPECT_THROW(cfa_masks(CfaPattern::quad(), 6, 8), ShapeError);
  EXPECT_THROW(CfaPattern::parse("xtrans"), ConfigError);
}

TEST(Mosaic, SelectsPatternChannel) {
  const VideoCube white({8, 8, 3, 2}, 1.0);
  const VideoCube white_mosaic = mosaic(white, CfaPattern::quad());
  for (double v : white_mosaic.values()) EXPECT_EQ(v, 1.0);

  VideoCube red({8, 8, 3, 1}, 0.0);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) red.at(i, j, 0, 0) = 1.0;
  const CfaMasks m = cfa_masks(CfaPattern::quad(), 8, 8);
  const VideoCube raw = mosaic(red, CfaPattern::quad());
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(raw[i], m.r[i]);
}

TEST(Mosaic, EqualsMaskWeightedSum) {
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube rgb = random_cube({8, 12, 3, 3}, 5);
    const VideoCube raw = mosaic(rgb, p);
    const CfaMasks m = cfa_masks(p, 8, 12);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 12; ++j)
        for (std::size_t t = 0; t < 3; ++t) {
          const double want = m.r.at(i, j) * rgb.at(i, j, 0, t) + m.g.at(i, j) * rgb.at(i, j, 1, t) +
                              m.b.at(i, j) * rgb.at(i, j, 2, t);
          EXPECT_EQ(raw.at(i, j, 0, t), want);
        }
  }
  EXPECT_THROW(mosaic(VideoCube({8, 8, 2, 1}), CfaPattern::quad()), ShapeError);
}

TEST(SubMeasurements, QuadIndexBookkeeping) {
  VideoCube p({4, 4});
  for (std::size_t i = 0; i < 16; ++i) p[i] = static_cast<double>(i);
  const SubMeasurements s = split_sub_measurements(p, CfaPattern::quad());
  EXPECT_EQ(s.r.values(), (std::vector<double>{0, 1, 4, 5}));
  EXPECT_EQ(s.g1.values(), (std::vector<double>{2, 3, 6, 7}));
  EXPECT_EQ(s.g2.values(), (std::vector<double>{8, 9, 12, 13}));
  EXPECT_EQ(s.b.values(), (std::vector<double>{10, 11, 14, 15}));
}

TEST(SubMeasurements, ConstantPlaneAndRoundTrip) {
  const SubMeasurements c = split_sub_measurements(VideoCube({8, 8}, 0.3), CfaPattern::quad());
  for (const VideoCube* part : {&c.r, &c.g1, &c.g2, &c.b}) {
    EXPECT_EQ(part->dims(), (VideoCube::Dims{4, 4}));
    for (double v : part->values()) EXPECT_EQ(v, 0.3);
  }
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const VideoCube plane = random_cube({8, 16}, 9);
    EXPECT_EQ(assemble_sub_measurements(split_sub_measurements(plane, p), p), plane);
  }
  EXPECT_THROW(split_sub_measurements(VideoCube({6, 8}), CfaPattern::quad()), ShapeError);
}

TEST(Masks, DeterministicBinaryAndBalanced) {
  const MaskSet a = gen_masks(64, 64, 8, 1234), b = gen_masks(64, 64, 8, 1234);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_EQ(a.sum_t, b.sum_t);
  double mean = 0.0;
  for (double v : a.masks.values()) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    mean += v;
  }
  mean /= static_cast<double>(a.masks.size());
  EXPECT_NEAR(mean, 0.5, 0.02);
  EXPECT_EQ(a.sum_t, a.sum_sq_t);
  EXPECT_NE(gen_masks(64, 64, 8, 1235).masks, a.masks);
}

TEST(Masks, BitIsTopBitOfDraw) {
  const MaskSet m = gen_masks(3, 5, 2, 77);
  for (std::size_t i = 0; i < m.masks.size(); ++i) {
    EXPECT_EQ(m.masks[i], static_cast<double>(rng::draw_u64(77, i) >> 63));
  }
}

TEST(Encode, HandSummation) {
  const Measurement y = encode(hand_raw(), hand_masks(), 0.0, 0);
  EXPECT_EQ(y.y.values(), (std::vector<double>{1, 6, 10, 4}));
  EXPECT_EQ(y.compression_ratio, 2u);
}

TEST(Encode, IdentitySensingAndErrors) {
  const VideoCube raw = random_cube({4, 4, 1, 1}, 3);
  const MaskSet ones = MaskSet::from_cube(VideoCube({4, 4, 1, 1}, 1.0));
  EXPECT_EQ(encode(raw, ones, 0.0, 0).y.values(), raw.values());
  EXPECT_THROW(encode(raw, ones, -0.1, 0), ConfigError);
  try {
    encode(random_cube({4, 4, 1, 2}, 1), ones, 0.0, 0);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(4x4x1x2)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4x4x1x1)"), std::string::npos) << msg;
  }
}

TEST(Encode, NoiseIsSeeded) {
  const VideoCube raw = random_cube({8, 8, 1, 2}, 3);
  const MaskSet m = gen_masks(8, 8, 2, 4);
  EXPECT_EQ(encode(raw, m, 0.1, 5).y, encode(raw, m, 0.1, 5).y);
  EXPECT_NE(encode(raw, m, 0.1, 5).y, encode(raw, m, 0.1, 6).y);
  EXPECT_EQ(encode(raw, m, 0.0, 5).y, encode(raw, m, 0.0, 6).y);
}

TEST(Encode, Linearity) {
  const MaskSet m = gen_masks(8, 8, 3, 8);
  const VideoCube r1 = random_cube({8, 8, 1, 3}, 1), r2 = random_cube({8, 8, 1, 3}, 2);
  VideoCube mix(r1.dims());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.5 * r1[i] + 0.25 * r2[i];
  const auto y = encode(mix, m, 0.0, 0).y, y1 = encode(r1, m, 0.0, 0).y, y2 = encode(r2, m, 0.0, 0).y;
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.5 * y1[i] + 0.25 * y2[i], 1e-15);
}

TEST(Phi, MatchesDenseMatrixOracle) {
  const std::size_t h = 4, w = 4, t = 3, hw = h * w;
  const MaskSet m = gen_masks(h, w, t, 17);
  const VideoCube raw = random_cube({h, w, 1, t}, 18);
  // Dense Phi = [D_1 ... D_T], HW x HWT.
  std::vector<double> phi(hw * hw * t, 0.0);
  for (std::size_t k = 0; k < t; ++k)
    for (std::size_t p = 0; p < hw; ++p) phi[p * hw * t + k * hw + p] = m.masks.at(p / w, p % w, 0, k);
  const auto x = vectorize(raw);
  const auto fast = apply_phi(m, x);
  const auto y = encode(raw, m, 0.0, 0).y;
  for (std::size_t p = 0; p < hw; ++p) {
    double s = 0.0;
    for (std::size_t q = 0; q < hw * t; ++q) s += phi[p * hw * t + q] * x[q];
    EXPECT_EQ(fast[p], s);
    EXPECT_EQ(fast[p], y[p]);
  }
  std::vector<double> yv(hw);
  for (std::size_t p = 0; p < hw; ++p) yv[p] = 0.1 * static_cast<double>(p) - 0.7;
  const auto back = apply_phi_transpose(m, yv);
  for (std::size_t q = 0; q < hw * t; ++q) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += phi[p * hw * t + q] * yv[p];
    EXPECT_EQ(back[q], s);
  }
}

TEST(Phi, GramIsDiagonalSumT) {
  const std::size_t h = 4, w = 4, t = 4, hw = h * w;
  const MaskSet m = gen_masks(h, w, t, 23);
  for (std::size_t p = 0; p < hw; ++p) {
    std::vector<double> e(hw, 0.0);
    e[p] = 1.0;
    const auto col = apply_phi(m, apply_phi_transpose(m, e));
    for (std::size_t q = 0; q < hw; ++q) EXPECT_EQ(col[q], q == p ? m.sum_t[p] : 0.0);
  }
}

TEST(Phi, ZeroMasksAnnihilateAndLengthsChecked) {
  const MaskSet z = MaskSet::from_cube(VideoCube({4, 4, 1, 2}, 0.0));
  for (double v : apply_phi(z, vectorize(random_cube({4, 4, 1, 2}, 1)))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(apply_phi(z, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(apply_phi_transpose(z, std::vector<double>(5)), ShapeError);
}

TEST(Phi, VectorizeIsFrameStacked) {
  const VideoCube raw = hand_raw();
  EXPECT_EQ(vectorize(raw), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(unvectorize(vectorize(raw), 2, 2, 2), raw);
}

TEST(Initialize, HandCase) {
  const MaskSet m = hand_masks();
  const VideoCube x = initialize(encode(hand_raw(), m, 0.0, 0), m);
  EXPECT_EQ(x.at(0, 0, 0, 0), 1.0);
  EXPECT_EQ(x.at(0, 1, 0, 0), 0.0);
  EXPECT_EQ(x.at(1, 0, 0, 0), 5.0);
  EXPECT_EQ(x.at(1, 1, 0, 0), 4.0);
  EXPECT_EQ(x.at(0, 0, 0, 1), 0.0);
  EXPECT_EQ(x.at(0, 1, 0, 1), 6.0);
  EXPECT_EQ(x.at(1, 0, 0, 1), 5.0);
  EXPECT_EQ(x.at(1, 1, 0, 1), 0.0);
}

TEST(Initialize, UniformMasksDivideByT) {
  const MaskSet ones = MaskSet::from_cube(VideoCube({4, 4, 1, 4}, 1.0));
  const VideoCube raw = random_cube({4, 4, 1, 4}, 2);
  const Measurement y = encode(raw, ones, 0.0, 0);
  const VideoCube x = initialize(y, ones);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(x.at(i, j, 0, t), y.y[i * 4 + j] / 4.0);

  const MaskSet one = MaskSet::from_cube(VideoCube({4, 4, 1, 1}, 1.0));
  const VideoCube r1 = random_cube({4, 4, 1, 1}, 3);
  EXPECT_EQ(initialize(encode(r1, one, 0.0, 0), one), r1);
}

TEST(Initialize, ZeroWhereMaskIsZero) {
  const MaskSet m = gen_masks(8, 8, 3, 31);
  const VideoCube x = initialize(encode(random_cube({8, 8, 1, 3}, 4), m, 0.05, 1), m);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_TRUE(std::isfinite(x[i]));
    if (m.masks[i] == 0.0) EXPECT_EQ(x[i], 0.0);
  }
}

}  // namespace
}  // namespace quadsci
