#include "dbp/linops.hpp"

#include "dbp/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace dbp {

SenseOp::SenseOp(Tensor sens, Tensor mask)
  : sens_(std::move(sens))
  , mask_(std::move(mask))
{
  if (sens_.rank() != 4 || sens_.dim(3) != 2) {
    throw std::invalid_argument("SenseOp: sensitivities must be (C,H,W,2), got " + shape_string(sens_.shape()));
  }
  if (mask_.rank() != 2 || mask_.dim(0) != sens_.dim(1) || mask_.dim(1) != sens_.dim(2)) {
    throw std::invalid_argument("SenseOp: mask " + shape_string(mask_.shape()) + " does not match sensitivities " +
                                shape_string(sens_.shape()));
  }
  for (double m : mask_.data()) {
    if (m != 0.0 && m != 1.0) {
      throw std::invalid_argument("SenseOp: mask entries must be exactly 0 or 1");
    }
  }
}

Shape SenseOp::input_shape() const
{
  return {sens_.dim(1), sens_.dim(2), 2};
}

Shape SenseOp::output_shape() const
{
  return sens_.shape();
}

Tensor SenseOp::forward(const Tensor &x) const
{
  if (x.shape() != input_shape()) {
    throw std::invalid_argument("SenseOp::forward: expected image " + shape_string(input_shape()) + ", got " +
                                shape_string(x.shape()));
  }
  return sense_forward(sens_, mask_, x);
}

Tensor SenseOp::adjoint(const Tensor &y) const
{
  if (y.shape() != output_shape()) {
    throw std::invalid_argument("SenseOp::adjoint: expected k-space " + shape_string(output_shape()) + ", got " +
                                shape_string(y.shape()));
  }
  return sense_adjoint(sens_, mask_, y);
}

Tensor SenseOp::normal(const Tensor &x) const
{
  return adjoint(forward(x));
}

Tensor SenseOp::gram_plus_identity(const Tensor &x, double rho) const
{
  if (!(rho > 0.0)) {
    throw std::invalid_argument("gram_plus_identity: rho must be positive");
  }
  return sense_gram(sens_, mask_, x, Tensor::scalar(rho));
}

Tensor SenseOp::gram_plus_identity(const Tensor &x, const Tensor &rho) const
{
  if (!(rho.item() > 0.0)) {
    throw std::invalid_argument("gram_plus_identity: rho must be positive");
  }
  return sense_gram(sens_, mask_, x, rho);
}

std::size_t SenseOp::measurement_count() const
{
  std::size_t ones = 0;
  for (double m : mask_.data()) {
    ones += m != 0.0;
  }
  return coils() * ones;
}

GramPlusIdentity::GramPlusIdentity(const SenseOp &op, double rho)
  : op_(op)
  , rho_(rho)
{
  if (!(rho > 0.0)) {
    throw std::invalid_argument("GramPlusIdentity: rho must be positive");
  }
}

std::complex<double> complex_inner(const Tensor &a, const Tensor &b)
{
  if (a.shape() != b.shape() || a.size() % 2 != 0) {
    throw std::invalid_argument("complex_inner: shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  auto x = a.data();
  auto y = b.data();
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t i = 0; i < x.size(); i += 2) {
    acc += std::conj(std::complex<double>(x[i], x[i + 1])) * std::complex<double>(y[i], y[i + 1]);
  }
  return acc;
}

DotTestResult dot_test(const LinearOperator &op, std::mt19937_64 &rng)
{
  std::normal_distribution<double> n01(0.0, 1.0);
  auto random = [&](const Shape &s) {
    Tensor t(s);
    for (auto &v : t.mutable_data()) {
      v = n01(rng);
    }
    return t;
  };
  Tensor const x = random(op.input_shape());
  Tensor const y = random(op.output_shape());
  Tensor const ax = op.forward(x);
  auto const lhs = complex_inner(ax, y);
  auto const rhs = complex_inner(x, op.adjoint(y));
  return {std::abs(lhs - rhs), norm2(ax) * norm2(y)};
}

} // namespace dbp
