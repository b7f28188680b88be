#include "dbp/sampling.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dbp;

namespace {

std::size_t ones(const Tensor &m)
{
  std::size_t n = 0;
  for (double v : m.data()) {
    n += v != 0.0;
  }
  return n;
}

} // namespace

TEST(Sampling, AccelOneIsFullySampled)
{
  MaskSpec spec;
  spec.accel = 1.0;
  Tensor const m = poisson_disc_mask(spec);
  EXPECT_EQ(ones(m), m.size());
}

TEST(Sampling, AchievedAccelExamples)
{
  EXPECT_DOUBLE_EQ(achieved_accel(Tensor::full({4, 4}, 1.0)), 1.0);
  Tensor half({4, 4});
  for (std::size_t i = 0; i < 8; ++i) {
    half.mutable_data()[2 * i] = 1.0;
  }
  EXPECT_DOUBLE_EQ(achieved_accel(half), 2.0);
  EXPECT_THROW(achieved_accel(Tensor({4, 4})), std::invalid_argument);
}

TEST(Sampling, CalibrationBlockFullySampled)
{
  for (std::size_t calib : {8u, 16u}) {
    MaskSpec spec;
    spec.height = 64;
    spec.width = 64;
    spec.calib = calib;
    spec.accel = 6.0;
    spec.seed = 3;
    Tensor const m = poisson_disc_mask(spec);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      for (std::size_t j = 0; j < 64; ++j) {
        if (in_calibration(spec, i, j)) {
          ++inside;
          EXPECT_EQ(m[i * 64 + j], 1.0);
        }
      }
    }
    EXPECT_EQ(inside, calib * calib);
    // centered on (H/2, W/2)
    EXPECT_TRUE(in_calibration(spec, 32, 32));
    EXPECT_TRUE(in_calibration(spec, 32 - calib / 2, 32 - calib / 2));
    EXPECT_FALSE(in_calibration(spec, 32 + calib / 2, 32));
  }
}

TEST(Sampling, Deterministic)
{
  MaskSpec spec;
  spec.seed = 11;
  Tensor const a = poisson_disc_mask(spec);
  Tensor const b = poisson_disc_mask(spec);
  EXPECT_TRUE(bitwise_equal(a, b));
  spec.seed = 12;
  EXPECT_FALSE(bitwise_equal(a, poisson_disc_mask(spec)));
}

TEST(Sampling, AccelWithinTolerance)
{
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    MaskSpec spec;
    spec.seed = seed;
    double const r = achieved_accel(poisson_disc_mask(spec));
    EXPECT_GE(r, 3.4);
    EXPECT_LE(r, 4.6);
  }
  MaskSpec big;
  big.height = 64;
  big.width = 32;
  big.calib = 16;
  big.accel = 8.0;
  double const r = achieved_accel(poisson_disc_mask(big));
  EXPECT_NEAR(r, 8.0, 0.15 * 8.0);
}

TEST(Sampling, MinimumDistanceBruteForce)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MaskSpec spec;
    spec.height = seed % 2 ? 64 : 32;
    spec.width = 32;
    spec.accel = 3.0 + seed;
    spec.seed = seed;
    auto const pd = poisson_disc(spec);
    double const ci = static_cast<double>(spec.height / 2);
    double const cj = static_cast<double>(spec.width / 2);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < spec.height; ++i) {
      for (std::size_t j = 0; j < spec.width; ++j) {
        if (pd.mask[i * spec.width + j] != 0.0 && !in_calibration(spec, i, j)) {
          pts.emplace_back(double(i), double(j));
        }
      }
    }
    ASSERT_GT(pts.size(), 2u);
    for (std::size_t a = 0; a < pts.size(); ++a) {
      for (std::size_t b = a + 1; b < pts.size(); ++b) {
        double const ra = pd.profile.at(std::hypot(pts[a].first - ci, pts[a].second - cj));
        double const rb = pd.profile.at(std::hypot(pts[b].first - ci, pts[b].second - cj));
        double const d = std::hypot(pts[a].first - pts[b].first, pts[a].second - pts[b].second);
        EXPECT_GE(d, 0.5 * (ra + rb) - 1e-12);
      }
    }
  }
}

TEST(Sampling, DensityDecreasesOutward)
{
  MaskSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.accel = 5.0;
  spec.seed = 2;
  Tensor const m = poisson_disc_mask(spec);
  double inner = 0, inner_n = 0, outer = 0, outer_n = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      if (in_calibration(spec, i, j)) {
        continue;
      }
      double const k = std::hypot(double(i) - 32, double(j) - 32);
      if (k < 16) {
        inner += m[i * 64 + j];
        ++inner_n;
      } else if (k > 24) {
        outer += m[i * 64 + j];
        ++outer_n;
      }
    }
  }
  EXPECT_GT(inner / inner_n, outer / outer_n);
}

TEST(Sampling, InvalidSpecs)
{
  MaskSpec spec;
  spec.calib = 40;
  EXPECT_THROW(poisson_disc_mask(spec), std::invalid_argument);
  spec = {};
  spec.accel = 0.5;
  EXPECT_THROW(poisson_disc_mask(spec), std::invalid_argument);
  spec = {};
  spec.accel = 200.0; // calibration block alone caps R at 16
  EXPECT_THROW(poisson_disc_mask(spec), std::invalid_argument);
}
