#pragma once

#include "dbp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace dbp::test {

inline Tensor random_tensor(const Shape &shape, std::mt19937_64 &rng, double scale = 1.0)
{
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(shape);
  for (auto &v : t.mutable_data()) {
    v = n(rng);
  }
  return t;
}

inline Tensor random_parameter(const Shape &shape, std::mt19937_64 &rng, double scale = 1.0)
{
  Tensor t = random_tensor(shape, rng, scale);
  t.set_trainable(true);
  return t;
}

/// Central finite difference of loss() w.r.t. entry i of `leaf`, editing it in place.
inline double central_difference(Tensor leaf, std::size_t i, const std::function<double()> &loss, double h)
{
  auto d = leaf.mutable_data();
  double const keep = d[i];
  d[i] = keep + h;
  double const up = loss();
  d[i] = keep - h;
  double const down = loss();
  d[i] = keep;
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor)
inline double rel_err(double a, double b, double floor = 1e-8)
{
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_abs_diff(const Tensor &a, const Tensor &b)
{
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

} // namespace dbp::test
