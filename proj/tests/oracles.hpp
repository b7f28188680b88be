#pragma once

#include "dbp/data.hpp"
#include "dbp/linops.hpp"
#include "dbp/ops.hpp"

#include <Eigen/Dense>

#include <functional>

namespace dbp::test {

inline double rel_norm(const Tensor &a, const Tensor &b)
{
  return norm2(sub(a, b)) / norm2(b);
}

// Dense real matrix of a linear image map (H,W,2) -> any shape.
inline Eigen::MatrixXd dense(const std::function<Tensor(const Tensor &)> &f, const Shape &in)
{
  std::size_t const n = shape_size(in);
  Tensor e(in);
  Tensor const probe = f(e);
  Eigen::MatrixXd A(probe.size(), n);
  for (std::size_t j = 0; j < n; ++j) {
    Tensor ej(in);
    ej.mutable_data()[j] = 1.0;
    Tensor const col = f(ej);
    for (std::size_t i = 0; i < col.size(); ++i) {
      A(i, j) = col[i];
    }
  }
  return A;
}

inline Eigen::VectorXd vec(const Tensor &t)
{
  return Eigen::Map<const Eigen::VectorXd>(t.data().data(), static_cast<long>(t.size()));
}

inline Tensor tensor(const Eigen::VectorXd &v, const Shape &s)
{
  return Tensor(s, std::vector<double>(v.data(), v.data() + v.size()));
}

// Independent oracle for argmin 1/2|x - r|^2 s.t. |Ax - y| <= eps via the
// KKT conditions: x(mu) = (I + mu A'A)^-1 (r + mu A'y), with mu >= 0 found by
// bisection on |A x(mu) - y| = eps using dense eigendecomposition.
inline Tensor ball_oracle(const Measurements &meas, const Tensor &r)
{
  SenseOp const op = meas.op();
  Shape const img = op.input_shape();
  Eigen::MatrixXd const A = dense([&](const Tensor &x) { return op.forward(x); }, img);
  Eigen::VectorXd const y = vec(meas.y);
  Eigen::VectorXd const rv = vec(r);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A.transpose() * A);
  Eigen::MatrixXd const &V = eig.eigenvectors();
  Eigen::VectorXd const lam = eig.eigenvalues().cwiseMax(0.0);
  Eigen::VectorXd const vr = V.transpose() * rv;
  Eigen::VectorXd const vaty = V.transpose() * (A.transpose() * y);
  auto solve = [&](double mu) {
    Eigen::VectorXd c(lam.size());
    for (long i = 0; i < lam.size(); ++i) {
      c(i) = (vr(i) + mu * vaty(i)) / (1.0 + mu * lam(i));
    }
    return Eigen::VectorXd(V * c);
  };
  auto resid = [&](double mu) { return (A * solve(mu) - y).norm(); };
  if (resid(0.0) <= meas.epsilon) {
    return r;
  }
  double lo = 0.0;
  double hi = 1.0;
  while (resid(hi) > meas.epsilon) {
    hi *= 2.0;
  }
  for (int it = 0; it < 200; ++it) {
    double const mid = 0.5 * (lo + hi);
    (resid(mid) > meas.epsilon ? lo : hi) = mid;
  }
  return tensor(solve(hi), img);
}

} // namespace dbp::test
