#pragma once

#include "dbp/cnn.hpp"
#include "dbp/data.hpp"
#include "dbp/linops.hpp"
#include "dbp/tensor.hpp"

#include <functional>
#include <optional>

namespace dbp {

/// sigma sqrt(M): the expected norm of M complex noise samples with E|v|^2 = sigma^2.
double epsilon_from_sigma(double sigma, std::size_t measurements);

// Conjugate gradient

enum class CgMode
{
  Fixed,     // exactly `iters` iterations; the recorded graph has a static shape
  EarlyExit, // also stops once |r| < 1e-9 |b|
};

using SpdAction = std::function<Tensor(const Tensor &)>;

/// Solves op(x) = b for a symmetric positive definite op. Built from
/// differentiable ops, so gradients flow through the unrolled iterations.
/// Stops early on breakdown (p'Ap <= 0 or a zero residual).
Tensor conjugate_gradient(const SpdAction &op, const Tensor &b, const Tensor &x0, int iters,
                          CgMode mode = CgMode::Fixed);

// Unrolled networks

enum class ModelKind
{
  Dbp,  // hard l2-ball data consistency via ADMM
  Modl, // soft quadratic data consistency
};

enum class DualUpdate
{
  Standard, // u + Ax - z
  Printed,  // u + Ax + z, kept for comparison only
};

struct UnrollCounts
{
  int n1 = 5; // denoiser / data-consistency alternations
  int n2 = 4; // ADMM iterations per data-consistency layer
  int n3 = 6; // CG iterations per x-update
};

struct UnrolledModel
{
  ModelKind kind = ModelKind::Dbp;
  DenoiserWeights weights;
  /// log rho (DBP) or log lambda (MoDL); trainable rank-0 tensor.
  Tensor log_penalty;
  UnrollCounts counts;
  /// Carry (z, u) across outer alternations instead of resetting them.
  bool warm_start = true;
  DualUpdate dual = DualUpdate::Standard;

  static UnrolledModel create(ModelKind kind, const UNetArch &arch, std::uint64_t seed, UnrollCounts counts = {},
                              double penalty = 1.0);

  double penalty() const;
  std::vector<Tensor> parameters() const;
};

struct DCState
{
  Tensor x; // image estimate
  Tensor z; // slack, z = Ax at convergence
  Tensor u; // scaled dual
};

struct DcSettings
{
  int n2 = 4;
  int n3 = 6;
  CgMode cg = CgMode::Fixed;
  DualUpdate dual = DualUpdate::Standard;
};

/// N2 ADMM iterations for argmin 1/2 |x - r|^2 s.t. |y - Ax| <= eps:
///   x <- (rho A*A + I)^-1 (rho A*(z - u) + r)   (CG, warm-started at state.x)
///   z <- y + L2Proj(Ax + u - y, eps)
///   u <- u + Ax - z
DCState dc_layer(const Tensor &r, const Measurements &meas, const SenseOp &op, const Tensor &rho, DCState state,
                 const DcSettings &settings);

/// Initial state: x = A*y, z = A x, u = 0.
DCState initial_state(const Measurements &meas, const SenseOp &op);

struct ForwardOptions
{
  std::optional<int> n1; // inference-time override of model.counts.n1
  CgMode cg = CgMode::Fixed;
};

Tensor dbp_forward(const Measurements &meas, const UnrolledModel &model, const ForwardOptions &opts = {});
/// x_k = argmin 1/2 |y - Ax|^2 + lambda/2 |x - r_k|^2 by CG on (A*A + lambda I).
Tensor modl_forward(const Measurements &meas, const UnrolledModel &model, const ForwardOptions &opts = {});
/// Dispatches on model.kind.
Tensor reconstruct(const Measurements &meas, const UnrolledModel &model, const ForwardOptions &opts = {});

/// A* y
Tensor zero_filled(const Measurements &meas);

// l1-Haar basis pursuit baseline

/// Orthonormal multi-level 2-D Haar transform of (H, W, 2), Mallat layout.
Tensor haar_forward(const Tensor &x, int levels);
Tensor haar_inverse(const Tensor &c, int levels);
double soft_threshold(double v, double tau);
/// Complex magnitude shrinkage of every coefficient outside the coarsest
/// approximation block.
Tensor soft_threshold_wavelet(const Tensor &c, int levels, double tau);

struct L1WaveletSettings
{
  int levels = 3;
  int iters = 30;
  double tau = 0.01;
  double rho = 1.0;
  int n2 = 10;
  int n3 = 10;
};

/// Alternates Haar soft-thresholding with the same ADMM data-consistency layer.
Tensor l1_wavelet_bp(const Measurements &meas, const L1WaveletSettings &settings);

} // namespace dbp
