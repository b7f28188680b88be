#pragma once

#include "dbp/tensor.hpp"

namespace dbp {

// Elementwise. Shapes must match exactly.
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor div(const Tensor &a, const Tensor &b);
Tensor neg(const Tensor &a);
Tensor scale(const Tensor &a, double s);
/// a * s where s holds a single value; differentiable in both arguments.
Tensor scale(const Tensor &a, const Tensor &s);
/// Subgradient at 0 is 0.
Tensor relu(const Tensor &a);
Tensor exp(const Tensor &a);

// Reductions to a rank-0 tensor.
Tensor sum(const Tensor &a);
Tensor dot(const Tensor &a, const Tensor &b);
Tensor sum_squares(const Tensor &a);

// Complex helpers on trailing (re, im) pairs.
Tensor complex_mul(const Tensor &a, const Tensor &b);

/// Orthonormal 2-D DFT over axes (..., H, W, 2) with DC at (H/2, W/2) in both
/// domains. H and W must be powers of two.
Tensor fft2_centered(const Tensor &x, bool inverse = false);
inline Tensor ifft2_centered(const Tensor &x) { return fft2_centered(x, true); }

/// Zero out entries of (..., H, W, 2) where mask (H, W) is 0.
Tensor apply_mask(const Tensor &mask, const Tensor &y);
/// (C, H, W, 2) sensitivities times image (H, W, 2) -> (C, H, W, 2).
Tensor coil_expand(const Tensor &sens, const Tensor &x);
/// sum_c conj(S_c) * y_c -> (H, W, 2).
Tensor coil_combine(const Tensor &sens, const Tensor &y);

// Fused SENSE kernels, one tape node each. Same values as the compositions
// apply_mask(fft2(coil_expand)) and coil_combine(ifft2(apply_mask)).
Tensor sense_forward(const Tensor &sens, const Tensor &mask, const Tensor &x);
Tensor sense_adjoint(const Tensor &sens, const Tensor &mask, const Tensor &y);
/// rho A*A x + x, differentiable in x and in the single-valued rho.
Tensor sense_gram(const Tensor &sens, const Tensor &mask, const Tensor &x, const Tensor &rho);

// Convolutional network building blocks on (C, H, W) feature maps.

/// 3x3 cross-correlation, zero padding 1. kernel (Cout, Cin, 3, 3), bias (Cout).
Tensor conv2d(const Tensor &x, const Tensor &kernel, const Tensor &bias);
Tensor avg_pool2(const Tensor &x);
Tensor upsample2(const Tensor &x);
Tensor concat_channels(const Tensor &a, const Tensor &b);
/// (H, W, 2) -> (2, H, W)
Tensor image_to_channels(const Tensor &x);
/// (2, H, W) -> (H, W, 2)
Tensor channels_to_image(const Tensor &x);

/// Projection onto the l2 ball of radius eps (eps treated as a constant).
Tensor l2proj(const Tensor &v, double eps);

// Non-differentiable helpers.
double norm2(const Tensor &a);
double inner(const Tensor &a, const Tensor &b);

} // namespace dbp
