#include "dbp/sampling.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dbp {

bool in_calibration(const MaskSpec &spec, std::size_t i, std::size_t j)
{
  auto inside = [&](std::size_t p, std::size_t n) {
    std::size_t const lo = n / 2 - spec.calib / 2;
    return p >= lo && p < lo + spec.calib;
  };
  return inside(i, spec.height) && inside(j, spec.width);
}

double achieved_accel(const Tensor &mask)
{
  std::size_t ones = 0;
  for (double m : mask.data()) {
    ones += m != 0.0;
  }
  if (ones == 0) {
    throw std::invalid_argument("achieved_accel: mask has no samples");
  }
  return static_cast<double>(mask.size()) / static_cast<double>(ones);
}

namespace {

struct Point
{
  std::size_t i, j;
  double radius;
};

class DartThrower
{
public:
  DartThrower(const MaskSpec &spec)
    : spec_(spec)
  {
    ci_ = static_cast<double>(spec.height / 2);
    cj_ = static_cast<double>(spec.width / 2);
    kmax_ = std::hypot(ci_, cj_);
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = 0; i < spec.height; ++i) {
      for (std::size_t j = 0; j < spec.width; ++j) {
        if (!in_calibration(spec, i, j)) {
          order_.push_back(i * spec.width + j);
        }
      }
    }
    // Fisher-Yates with an explicit mapping so the order only depends on mt19937_64.
    for (std::size_t n = order_.size(); n > 1; --n) {
      std::size_t const k = static_cast<std::size_t>(rng() % n);
      std::swap(order_[n - 1], order_[k]);
    }
  }

  double kmax() const { return kmax_; }

  Tensor throw_darts(double r0) const
  {
    RadiusProfile const prof{r0, kmax_};
    std::size_t const H = spec_.height;
    std::size_t const W = spec_.width;
    Tensor mask(Shape{H, W});
    auto m = mask.mutable_data();
    // Radius of each accepted non-calibration point, negative when empty.
    std::vector<double> occupied(H * W, -1.0);
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        if (in_calibration(spec_, i, j)) {
          m[i * W + j] = 1.0;
        }
      }
    }
    double const rmax = prof.at(kmax_);
    for (std::size_t idx : order_) {
      std::size_t const i = idx / W;
      std::size_t const j = idx % W;
      double const rc = prof.at(std::hypot(static_cast<double>(i) - ci_, static_cast<double>(j) - cj_));
      long const reach = static_cast<long>(std::ceil(0.5 * (rc + rmax)));
      bool ok = true;
      long const i0 = std::max(0L, static_cast<long>(i) - reach);
      long const i1 = std::min(static_cast<long>(H) - 1, static_cast<long>(i) + reach);
      long const j0 = std::max(0L, static_cast<long>(j) - reach);
      long const j1 = std::min(static_cast<long>(W) - 1, static_cast<long>(j) + reach);
      for (long a = i0; a <= i1 && ok; ++a) {
        for (long b = j0; b <= j1; ++b) {
          double const rq = occupied[a * W + b];
          if (rq < 0.0) {
            continue;
          }
          double const d = std::hypot(static_cast<double>(a) - static_cast<double>(i),
                                      static_cast<double>(b) - static_cast<double>(j));
          if (d < 0.5 * (rc + rq)) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        occupied[idx] = rc;
        m[idx] = 1.0;
      }
    }
    return mask;
  }

private:
  MaskSpec spec_;
  double ci_ = 0, cj_ = 0, kmax_ = 1;
  std::vector<std::size_t> order_;
};

} // namespace

PoissonDiscMask poisson_disc(const MaskSpec &spec)
{
  if (spec.height == 0 || spec.width == 0) {
    throw std::invalid_argument("poisson_disc: empty grid");
  }
  if (spec.calib > std::min(spec.height, spec.width)) {
    throw std::invalid_argument("poisson_disc: calibration region larger than the grid");
  }
  if (!(spec.accel >= 1.0) || !std::isfinite(spec.accel)) {
    throw std::invalid_argument("poisson_disc: acceleration must be >= 1");
  }
  DartThrower const darts(spec);
  if (spec.accel == 1.0) {
    return {Tensor::full(Shape{spec.height, spec.width}, 1.0), RadiusProfile{0.0, darts.kmax()}};
  }

  double lo = 0.0;
  double hi = static_cast<double>(std::max(spec.height, spec.width));
  Tensor best;
  double best_r0 = 0.0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    double const r0 = 0.5 * (lo + hi);
    Tensor mask = darts.throw_darts(r0);
    double const r = achieved_accel(mask);
    double const err = std::abs(r - spec.accel) / spec.accel;
    if (err < best_err) {
      best_err = err;
      best = mask;
      best_r0 = r0;
    }
    if (err < 1e-3) {
      break;
    }
    (r < spec.accel ? lo : hi) = r0;
  }
  if (best_err > 0.15) {
    throw std::invalid_argument("poisson_disc: cannot reach acceleration " + std::to_string(spec.accel) +
                                " within 15% (closest " + std::to_string(best_err * 100.0) + "% off)");
  }
  return {best, RadiusProfile{best_r0, darts.kmax()}};
}

Tensor poisson_disc_mask(const MaskSpec &spec)
{
  return poisson_disc(spec).mask;
}

} // namespace dbp
