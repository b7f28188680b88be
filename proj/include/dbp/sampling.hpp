#pragma once

#include "dbp/tensor.hpp"

#include <cstdint>

namespace dbp {

struct MaskSpec
{
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t calib = 8;  // side of the fully sampled central square
  double accel = 4.0;     // target acceleration R
  std::uint64_t seed = 0;
};

/// Minimum-distance profile r(k) = r0 (1 + alpha k / kmax), k measured in
/// pixels from the k-space center (H/2, W/2).
struct RadiusProfile
{
  static constexpr double kAlpha = 2.0;
  double r0 = 0.0;
  double kmax = 1.0;

  double at(double k) const { return r0 * (1.0 + kAlpha * k / kmax); }
};

struct PoissonDiscMask
{
  Tensor mask;           // (H, W) of {0, 1}
  RadiusProfile profile; // profile that produced the mask
};

/// Variable-density Poisson-disc mask: dart throwing in a seeded random order,
/// accepting a candidate c when every accepted point q outside the
/// calibration block satisfies |c - q| >= (r(c) + r(q)) / 2. r0 is bisected
/// until the achieved acceleration is within 15% of the target.
/// Throws std::invalid_argument for invalid specs or unreachable targets.
PoissonDiscMask poisson_disc(const MaskSpec &spec);
Tensor poisson_disc_mask(const MaskSpec &spec);

/// H*W / number of ones. Throws on an all-zero mask.
double achieved_accel(const Tensor &mask);

bool in_calibration(const MaskSpec &spec, std::size_t i, std::size_t j);

} // namespace dbp
