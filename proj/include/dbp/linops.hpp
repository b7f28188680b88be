#pragma once

#include "dbp/tensor.hpp"

#include <complex>
#include <random>

namespace dbp {

/// Matrix-free linear operator. Complex data uses trailing (re, im) pairs.
class LinearOperator
{
public:
  virtual ~LinearOperator() = default;
  virtual Shape input_shape() const = 0;
  virtual Shape output_shape() const = 0;
  virtual Tensor forward(const Tensor &x) const = 0;
  virtual Tensor adjoint(const Tensor &y) const = 0;
};

/// Multi-coil Cartesian Fourier operator: per coil c, y_c = P F S_c x.
class SenseOp final : public LinearOperator
{
public:
  /// sens (C, H, W, 2), mask (H, W) with entries exactly 0 or 1.
  SenseOp(Tensor sens, Tensor mask);

  Shape input_shape() const override;
  Shape output_shape() const override;
  Tensor forward(const Tensor &x) const override;
  Tensor adjoint(const Tensor &y) const override;

  /// A* A x
  Tensor normal(const Tensor &x) const;
  /// rho A* A x + x; rho must be positive.
  Tensor gram_plus_identity(const Tensor &x, double rho) const;
  /// Same, with a differentiable single-valued rho.
  Tensor gram_plus_identity(const Tensor &x, const Tensor &rho) const;

  /// Number of complex measurements: coils times sampled locations.
  std::size_t measurement_count() const;
  std::size_t coils() const { return sens_.dim(0); }
  const Tensor &sensitivities() const { return sens_; }
  const Tensor &mask() const { return mask_; }

private:
  Tensor sens_;
  Tensor mask_;
};

/// rho A* A + I for a fixed SenseOp. Self-adjoint.
class GramPlusIdentity final : public LinearOperator
{
public:
  GramPlusIdentity(const SenseOp &op, double rho);
  Shape input_shape() const override { return op_.input_shape(); }
  Shape output_shape() const override { return op_.input_shape(); }
  Tensor forward(const Tensor &x) const override { return op_.gram_plus_identity(x, rho_); }
  Tensor adjoint(const Tensor &y) const override { return forward(y); }

private:
  const SenseOp &op_;
  double rho_;
};

/// sum conj(a) b over complex pairs.
std::complex<double> complex_inner(const Tensor &a, const Tensor &b);

struct DotTestResult
{
  double mismatch;  // |<Ax, y> - <x, A*y>|
  double scale;     // |Ax| |y|
  double relative() const { return scale > 0 ? mismatch / scale : mismatch; }
};

/// Adjoint identity on random complex Gaussian probes.
DotTestResult dot_test(const LinearOperator &op, std::mt19937_64 &rng);

} // namespace dbp
