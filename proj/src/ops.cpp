#include "dbp/ops.hpp"

#include "dbp/fft.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <string>

namespace dbp {

namespace {

void require_same_shape(const char *op, const Tensor &a, const Tensor &b)
{
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_complex(const char *op, const Tensor &a)
{
  if (a.rank() == 0 || a.shape().back() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected trailing axis of length 2, got " +
                                shape_string(a.shape()));
  }
}

std::complex<double> const *as_complex(std::span<const double> d)
{
  return reinterpret_cast<std::complex<double> const *>(d.data());
}

std::complex<double> *as_complex(std::vector<double> &d)
{
  return reinterpret_cast<std::complex<double> *>(d.data());
}

std::complex<double> *as_complex(std::span<double> d)
{
  return reinterpret_cast<std::complex<double> *>(d.data());
}

} // namespace

// Elementwise

Tensor add(const Tensor &a, const Tensor &b)
{
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = x[i] + y[i];
  }
  if (should_record({&a, &b})) {
    record_op(out, {a, b}, [](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      for (auto *t : gi) {
        if (t) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*t)[i] += g[i];
          }
        }
      }
    });
  }
  return out;
}

Tensor sub(const Tensor &a, const Tensor &b)
{
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = x[i] - y[i];
  }
  if (should_record({&a, &b})) {
    record_op(out, {a, b}, [](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      if (gi[0]) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gi[0])[i] += g[i];
        }
      }
      if (gi[1]) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gi[1])[i] -= g[i];
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor &a, const Tensor &b)
{
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = x[i] * y[i];
  }
  if (should_record({&a, &b})) {
    record_op(out, {a, b}, [a, b](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto x = a.data();
      auto y = b.data();
      if (gi[0]) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gi[0])[i] += g[i] * y[i];
        }
      }
      if (gi[1]) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gi[1])[i] += g[i] * x[i];
        }
      }
    });
  }
  return out;
}

Tensor div(const Tensor &a, const Tensor &b)
{
  require_same_shape("div", a, b);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = x[i] / y[i];
  }
  if (should_record({&a, &b})) {
    record_op(out, {a, b}, [b, out](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto y = b.data();
      auto q = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (gi[0]) {
          (*gi[0])[i] += g[i] / y[i];
        }
        if (gi[1]) {
          (*gi[1])[i] -= g[i] * q[i] / y[i];
        }
      }
    });
  }
  return out;
}

Tensor neg(const Tensor &a)
{
  return scale(a, -1.0);
}

Tensor scale(const Tensor &a, double s)
{
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = s * x[i];
  }
  if (should_record({&a})) {
    record_op(out, {a}, [s](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gi[0])[i] += s * g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor &a, const Tensor &s)
{
  if (s.size() != 1) {
    throw std::invalid_argument("scale: factor must hold one value, got shape " + shape_string(s.shape()));
  }
  double const f = s[0];
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = f * x[i];
  }
  if (should_record({&a, &s})) {
    record_op(out, {a, s}, [a, f](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      if (gi[0]) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gi[0])[i] += f * g[i];
        }
      }
      if (gi[1]) {
        auto x = a.data();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          acc += g[i] * x[i];
        }
        (*gi[1])[0] += acc;
      }
    });
  }
  return out;
}

Tensor relu(const Tensor &a)
{
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  if (should_record({&a})) {
    record_op(out, {a}, [a](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto x = a.data();
      auto &t = *gi[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) {
          t[i] += g[i];
        }
      }
    });
  }
  return out;
}

Tensor exp(const Tensor &a)
{
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = std::exp(x[i]);
  }
  if (should_record({&a})) {
    record_op(out, {a}, [out](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto e = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gi[0])[i] += g[i] * e[i];
      }
    });
  }
  return out;
}

// Reductions

Tensor sum(const Tensor &a)
{
  double acc = 0.0;
  for (double v : a.data()) {
    acc += v;
  }
  Tensor out = Tensor::scalar(acc);
  if (should_record({&a})) {
    record_op(out, {a}, [](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      for (auto &v : *gi[0]) {
        v += g[0];
      }
    });
  }
  return out;
}

Tensor dot(const Tensor &a, const Tensor &b)
{
  require_same_shape("dot", a, b);
  Tensor out = Tensor::scalar(inner(a, b));
  if (should_record({&a, &b})) {
    record_op(out, {a, b}, [a, b](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      double const s = g[0];
      auto x = a.data();
      auto y = b.data();
      if (gi[0]) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          (*gi[0])[i] += s * y[i];
        }
      }
      if (gi[1]) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          (*gi[1])[i] += s * x[i];
        }
      }
    });
  }
  return out;
}

Tensor sum_squares(const Tensor &a)
{
  Tensor out = Tensor::scalar(inner(a, a));
  if (should_record({&a})) {
    record_op(out, {a}, [a](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      double const s = 2.0 * g[0];
      auto x = a.data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        (*gi[0])[i] += s * x[i];
      }
    });
  }
  return out;
}

double inner(const Tensor &a, const Tensor &b)
{
  require_same_shape("inner", a, b);
  auto x = a.data();
  auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i] * y[i];
  }
  return acc;
}

double norm2(const Tensor &a)
{
  return std::sqrt(inner(a, a));
}

// Complex

Tensor complex_mul(const Tensor &a, const Tensor &b)
{
  require_complex("complex_mul", a);
  require_complex("complex_mul", b);
  require_same_shape("complex_mul", a, b);
  Tensor out(a.shape());
  std::size_t const n = a.size() / 2;
  auto x = as_complex(a.data());
  auto y = as_complex(b.data());
  auto o = as_complex(out.mutable_data());
  for (std::size_t i = 0; i < n; ++i) {
    o[i] = x[i] * y[i];
  }
  if (should_record({&a, &b})) {
    record_op(out, {a, b}, [a, b, n](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      // For f = x*y, the real-pair vector-Jacobian product w.r.t. x is conj(y)*g.
      auto gc = as_complex(g);
      auto x = as_complex(a.data());
      auto y = as_complex(b.data());
      if (gi[0]) {
        auto t = as_complex(*gi[0]);
        for (std::size_t i = 0; i < n; ++i) {
          t[i] += std::conj(y[i]) * gc[i];
        }
      }
      if (gi[1]) {
        auto t = as_complex(*gi[1]);
        for (std::size_t i = 0; i < n; ++i) {
          t[i] += std::conj(x[i]) * gc[i];
        }
      }
    });
  }
  return out;
}

// FFT

namespace {

void check_fft_shape(const Tensor &x)
{
  if (x.rank() < 3 || x.shape().back() != 2) {
    throw std::invalid_argument("fft2: expected (..., H, W, 2), got " + shape_string(x.shape()));
  }
  std::size_t const H = x.shape()[x.rank() - 3];
  std::size_t const W = x.shape()[x.rank() - 2];
  if (!is_power_of_two(H) || !is_power_of_two(W)) {
    throw std::invalid_argument("fft2: extents must be powers of two, got " + shape_string(x.shape()));
  }
}

void fft_batched(std::span<double> data, const Shape &shape, bool inverse)
{
  std::size_t const H = shape[shape.size() - 3];
  std::size_t const W = shape[shape.size() - 2];
  std::size_t const batch = data.size() / (2 * H * W);
  auto c = as_complex(data);
  for (std::size_t b = 0; b < batch; ++b) {
    fft2_centered_inplace(c + b * H * W, H, W, inverse);
  }
}

} // namespace

Tensor fft2_centered(const Tensor &x, bool inverse)
{
  check_fft_shape(x);
  Tensor out = x.clone();
  out.set_trainable(false);
  fft_batched(out.mutable_data(), out.shape(), inverse);
  if (should_record({&x})) {
    Shape shape = x.shape();
    record_op(out, {x}, [shape, inverse](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      // Unitary: the adjoint is the opposite-direction transform.
      std::vector<double> tmp(g.begin(), g.end());
      fft_batched(tmp, shape, !inverse);
      auto &t = *gi[0];
      for (std::size_t i = 0; i < tmp.size(); ++i) {
        t[i] += tmp[i];
      }
    });
  }
  return out;
}

// Coil and mask operators

namespace {

void check_mask(const char *op, const Tensor &mask, const Tensor &y)
{
  if (mask.rank() != 2 || y.rank() < 3 || y.shape().back() != 2 || y.shape()[y.rank() - 3] != mask.dim(0) ||
      y.shape()[y.rank() - 2] != mask.dim(1)) {
    throw std::invalid_argument(std::string(op) + ": mask " + shape_string(mask.shape()) +
                                " incompatible with " + shape_string(y.shape()));
  }
}

void masked_copy(const Tensor &mask, std::span<const double> in, std::span<double> out, bool accumulate)
{
  std::size_t const px = mask.size();
  auto m = mask.data();
  std::size_t const batch = in.size() / (2 * px);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < px; ++p) {
      std::size_t const i = 2 * (b * px + p);
      double const w = m[p];
      if (accumulate) {
        out[i] += w * in[i];
        out[i + 1] += w * in[i + 1];
      } else {
        out[i] = w * in[i];
        out[i + 1] = w * in[i + 1];
      }
    }
  }
}

void check_coils(const char *op, const Tensor &sens, const Shape &image)
{
  if (sens.rank() != 4 || sens.dim(3) != 2 || image.size() != 3 || image[0] != sens.dim(1) ||
      image[1] != sens.dim(2) || image[2] != 2) {
    throw std::invalid_argument(std::string(op) + ": sensitivities " + shape_string(sens.shape()) +
                                " incompatible with image " + shape_string(image));
  }
}

void expand_into(const Tensor &sens, std::span<const double> x, std::span<double> out, bool accumulate)
{
  std::size_t const C = sens.dim(0);
  std::size_t const px = sens.dim(1) * sens.dim(2);
  auto s = as_complex(sens.data());
  auto xi = as_complex(x);
  auto o = as_complex(out);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < px; ++p) {
      auto v = s[c * px + p] * xi[p];
      o[c * px + p] = accumulate ? o[c * px + p] + v : v;
    }
  }
}

void combine_into(const Tensor &sens, std::span<const double> y, std::span<double> out)
{
  std::size_t const C = sens.dim(0);
  std::size_t const px = sens.dim(1) * sens.dim(2);
  auto s = as_complex(sens.data());
  auto yi = as_complex(y);
  auto o = as_complex(out);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < px; ++p) {
      o[p] += std::conj(s[c * px + p]) * yi[c * px + p];
    }
  }
}

} // namespace

Tensor apply_mask(const Tensor &mask, const Tensor &y)
{
  check_mask("apply_mask", mask, y);
  Tensor out(y.shape());
  masked_copy(mask, y.data(), out.mutable_data(), false);
  if (should_record({&y})) {
    record_op(out, {y}, [mask](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      masked_copy(mask, g, *gi[0], true);
    });
  }
  return out;
}

Tensor coil_expand(const Tensor &sens, const Tensor &x)
{
  check_coils("coil_expand", sens, x.shape());
  Tensor out(sens.shape());
  expand_into(sens, x.data(), out.mutable_data(), false);
  if (should_record({&x})) {
    record_op(out, {x}, [sens](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      combine_into(sens, g, *gi[0]);
    });
  }
  return out;
}

Tensor coil_combine(const Tensor &sens, const Tensor &y)
{
  if (y.shape() != sens.shape()) {
    throw std::invalid_argument("coil_combine: data " + shape_string(y.shape()) + " does not match sensitivities " +
                                shape_string(sens.shape()));
  }
  Tensor out(Shape{sens.dim(1), sens.dim(2), 2});
  combine_into(sens, y.data(), out.mutable_data());
  if (should_record({&y})) {
    record_op(out, {y}, [sens](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      expand_into(sens, g, *gi[0], true);
    });
  }
  return out;
}

// Fused SENSE

namespace {

void sense_forward_raw(const Tensor &sens, const Tensor &mask, std::span<const double> x, std::span<double> out)
{
  std::size_t const H = sens.dim(1);
  std::size_t const W = sens.dim(2);
  expand_into(sens, x, out, false);
  auto c = as_complex(out);
  for (std::size_t k = 0; k < sens.dim(0); ++k) {
    fft2_centered_inplace(c + k * H * W, H, W, false);
  }
  masked_copy(mask, out, out, false);
}

// out += A* y
void sense_adjoint_raw(const Tensor &sens, const Tensor &mask, std::span<const double> y, std::span<double> out,
                       std::vector<double> &tmp)
{
  std::size_t const H = sens.dim(1);
  std::size_t const W = sens.dim(2);
  tmp.resize(y.size());
  masked_copy(mask, y, tmp, false);
  auto c = as_complex(tmp);
  for (std::size_t k = 0; k < sens.dim(0); ++k) {
    fft2_centered_inplace(c + k * H * W, H, W, true);
  }
  combine_into(sens, tmp, out);
}

void sense_normal_raw(const Tensor &sens, const Tensor &mask, std::span<const double> x, std::span<double> out)
{
  thread_local std::vector<double> k, tmp;
  k.resize(sens.size());
  sense_forward_raw(sens, mask, x, k);
  std::fill(out.begin(), out.end(), 0.0);
  sense_adjoint_raw(sens, mask, k, out, tmp);
}

} // namespace

Tensor sense_forward(const Tensor &sens, const Tensor &mask, const Tensor &x)
{
  check_coils("sense_forward", sens, x.shape());
  check_mask("sense_forward", mask, sens);
  Tensor out(sens.shape());
  sense_forward_raw(sens, mask, x.data(), out.mutable_data());
  if (should_record({&x})) {
    record_op(out, {x}, [sens, mask](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      std::vector<double> tmp;
      sense_adjoint_raw(sens, mask, g, *gi[0], tmp);
    });
  }
  return out;
}

Tensor sense_adjoint(const Tensor &sens, const Tensor &mask, const Tensor &y)
{
  if (y.shape() != sens.shape()) {
    throw std::invalid_argument("sense_adjoint: data " + shape_string(y.shape()) +
                                " does not match sensitivities " + shape_string(sens.shape()));
  }
  check_mask("sense_adjoint", mask, sens);
  Tensor out(Shape{sens.dim(1), sens.dim(2), 2});
  std::vector<double> tmp;
  sense_adjoint_raw(sens, mask, y.data(), out.mutable_data(), tmp);
  if (should_record({&y})) {
    record_op(out, {y}, [sens, mask](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      std::vector<double> k(sens.size());
      sense_forward_raw(sens, mask, g, k);
      auto &t = *gi[0];
      for (std::size_t i = 0; i < k.size(); ++i) {
        t[i] += k[i];
      }
    });
  }
  return out;
}

Tensor sense_gram(const Tensor &sens, const Tensor &mask, const Tensor &x, const Tensor &rho)
{
  check_coils("sense_gram", sens, x.shape());
  check_mask("sense_gram", mask, sens);
  if (rho.size() != 1) {
    throw std::invalid_argument("sense_gram: rho must hold one value, got shape " + shape_string(rho.shape()));
  }
  double const r = rho[0];
  Tensor normal(x.shape());
  sense_normal_raw(sens, mask, x.data(), normal.mutable_data());
  Tensor out(x.shape());
  {
    auto o = out.mutable_data();
    auto n = normal.data();
    auto v = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] = r * n[i] + v[i];
    }
  }
  if (should_record({&x, &rho})) {
    record_op(out, {x, rho}, [sens, mask, normal, r](std::span<const double> g,
                                                     std::span<std::vector<double> *const> gi) {
      if (gi[0]) {
        std::vector<double> ng(g.size());
        sense_normal_raw(sens, mask, g, ng);
        auto &t = *gi[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
          t[i] += r * ng[i] + g[i];
        }
      }
      if (gi[1]) {
        auto n = normal.data();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          acc += n[i] * g[i];
        }
        (*gi[1])[0] += acc;
      }
    });
  }
  return out;
}

// Convolution

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// (Cin*9, H*W) patch matrix for a 3x3 window with zero padding 1.
RowMat im2col(double const *in, std::size_t cin, std::size_t H, std::size_t W)
{
  RowMat cols = RowMat::Zero(static_cast<long>(cin * 9), static_cast<long>(H * W));
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        int const dy = ky - 1;
        int const dx = kx - 1;
        double *row = cols.row(static_cast<long>(ci * 9 + ky * 3 + kx)).data();
        std::size_t const y0 = dy < 0 ? 1 : 0;
        std::size_t const y1 = dy > 0 ? H - 1 : H;
        std::size_t const x0 = dx < 0 ? 1 : 0;
        std::size_t const x1 = dx > 0 ? W - 1 : W;
        for (std::size_t y = y0; y < y1; ++y) {
          double const *s = in + ci * H * W + (y + dy) * W + dx;
          for (std::size_t x = x0; x < x1; ++x) {
            row[y * W + x] = s[x];
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMat &cols, double *out, std::size_t cin, std::size_t H, std::size_t W)
{
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        int const dy = ky - 1;
        int const dx = kx - 1;
        double const *row = cols.row(static_cast<long>(ci * 9 + ky * 3 + kx)).data();
        std::size_t const y0 = dy < 0 ? 1 : 0;
        std::size_t const y1 = dy > 0 ? H - 1 : H;
        std::size_t const x0 = dx < 0 ? 1 : 0;
        std::size_t const x1 = dx > 0 ? W - 1 : W;
        for (std::size_t y = y0; y < y1; ++y) {
          double *s = out + ci * H * W + (y + dy) * W + dx;
          for (std::size_t x = x0; x < x1; ++x) {
            s[x] += row[y * W + x];
          }
        }
      }
    }
  }
}

} // namespace

Tensor conv2d(const Tensor &x, const Tensor &kernel, const Tensor &bias)
{
  if (x.rank() != 3 || kernel.rank() != 4 || kernel.dim(2) != 3 || kernel.dim(3) != 3) {
    throw std::invalid_argument("conv2d: expected x (Cin,H,W) and kernel (Cout,Cin,3,3), got " +
                                shape_string(x.shape()) + " and " + shape_string(kernel.shape()));
  }
  if (kernel.dim(1) != x.dim(0)) {
    throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(x.dim(0)) +
                                " channels, kernel expects " + std::to_string(kernel.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
    throw std::invalid_argument("conv2d: bias " + shape_string(bias.shape()) + " does not match kernel " +
                                shape_string(kernel.shape()));
  }
  std::size_t const cin = x.dim(0);
  std::size_t const H = x.dim(1);
  std::size_t const W = x.dim(2);
  std::size_t const cout = kernel.dim(0);
  long const plane = static_cast<long>(H * W);
  long const taps = static_cast<long>(cin * 9);

  auto cols = std::make_shared<RowMat>(im2col(x.data().data(), cin, H, W));
  Eigen::Map<const RowMat> K(kernel.data().data(), static_cast<long>(cout), taps);
  Eigen::Map<const Eigen::VectorXd> b(bias.data().data(), static_cast<long>(cout));
  Tensor out(Shape{cout, H, W});
  Eigen::Map<RowMat> O(out.mutable_data().data(), static_cast<long>(cout), plane);
  O.noalias() = K * *cols;
  O.colwise() += b;

  if (should_record({&x, &kernel, &bias})) {
    record_op(out, {x, kernel, bias},
              [cols, kernel, cin, cout, H, W, plane, taps](std::span<const double> g,
                                                         std::span<std::vector<double> *const> gi) {
                Eigen::Map<const RowMat> G(g.data(), static_cast<long>(cout), plane);
                if (gi[0]) {
                  Eigen::Map<const RowMat> K(kernel.data().data(), static_cast<long>(cout), taps);
                  RowMat const gcols = K.transpose() * G;
                  col2im_add(gcols, gi[0]->data(), cin, H, W);
                }
                if (gi[1]) {
                  Eigen::Map<RowMat> GK(gi[1]->data(), static_cast<long>(cout), taps);
                  GK.noalias() += G * cols->transpose();
                }
                if (gi[2]) {
                  auto &gb = *gi[2];
                  for (std::size_t o = 0; o < cout; ++o) {
                    double acc = 0.0;
                    for (long p = 0; p < plane; ++p) {
                      acc += g[o * plane + p];
                    }
                    gb[o] += acc;
                  }
                }
              });
  }
  return out;
}

Tensor avg_pool2(const Tensor &x)
{
  if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw std::invalid_argument("avg_pool2: expected (C,H,W) with even H, W, got " + shape_string(x.shape()));
  }
  std::size_t const C = x.dim(0);
  std::size_t const H = x.dim(1);
  std::size_t const W = x.dim(2);
  std::size_t const h = H / 2;
  std::size_t const w = W / 2;
  Tensor out(Shape{C, h, w});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t const base = c * H * W + 2 * i * W + 2 * j;
        o[(c * h + i) * w + j] = 0.25 * (in[base] + in[base + 1] + in[base + W] + in[base + W + 1]);
      }
    }
  }
  if (should_record({&x})) {
    record_op(out, {x}, [C, H, W, h, w](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto &t = *gi[0];
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            double const v = 0.25 * g[(c * h + i) * w + j];
            std::size_t const base = c * H * W + 2 * i * W + 2 * j;
            t[base] += v;
            t[base + 1] += v;
            t[base + W] += v;
            t[base + W + 1] += v;
          }
        }
      }
    });
  }
  return out;
}

Tensor upsample2(const Tensor &x)
{
  if (x.rank() != 3) {
    throw std::invalid_argument("upsample2: expected (C,H,W), got " + shape_string(x.shape()));
  }
  std::size_t const C = x.dim(0);
  std::size_t const h = x.dim(1);
  std::size_t const w = x.dim(2);
  std::size_t const H = 2 * h;
  std::size_t const W = 2 * w;
  Tensor out(Shape{C, H, W});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        o[(c * H + i) * W + j] = in[(c * h + i / 2) * w + j / 2];
      }
    }
  }
  if (should_record({&x})) {
    record_op(out, {x}, [C, H, W, h, w](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto &t = *gi[0];
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < H; ++i) {
          for (std::size_t j = 0; j < W; ++j) {
            t[(c * h + i / 2) * w + j / 2] += g[(c * H + i) * W + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor &a, const Tensor &b)
{
  if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw std::invalid_argument("concat_channels: incompatible " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()));
  }
  Tensor out(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  auto o = out.mutable_data();
  std::copy(a.data().begin(), a.data().end(), o.begin());
  std::copy(b.data().begin(), b.data().end(), o.begin() + static_cast<long>(a.size()));
  if (should_record({&a, &b})) {
    std::size_t const na = a.size();
    record_op(out, {a, b}, [na](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      if (gi[0]) {
        for (std::size_t i = 0; i < na; ++i) {
          (*gi[0])[i] += g[i];
        }
      }
      if (gi[1]) {
        for (std::size_t i = na; i < g.size(); ++i) {
          (*gi[1])[i - na] += g[i];
        }
      }
    });
  }
  return out;
}

Tensor image_to_channels(const Tensor &x)
{
  if (x.rank() != 3 || x.dim(2) != 2) {
    throw std::invalid_argument("image_to_channels: expected (H,W,2), got " + shape_string(x.shape()));
  }
  std::size_t const px = x.dim(0) * x.dim(1);
  Tensor out(Shape{2, x.dim(0), x.dim(1)});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t p = 0; p < px; ++p) {
    o[p] = in[2 * p];
    o[px + p] = in[2 * p + 1];
  }
  if (should_record({&x})) {
    record_op(out, {x}, [px](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto &t = *gi[0];
      for (std::size_t p = 0; p < px; ++p) {
        t[2 * p] += g[p];
        t[2 * p + 1] += g[px + p];
      }
    });
  }
  return out;
}

Tensor channels_to_image(const Tensor &x)
{
  if (x.rank() != 3 || x.dim(0) != 2) {
    throw std::invalid_argument("channels_to_image: expected (2,H,W), got " + shape_string(x.shape()));
  }
  std::size_t const px = x.dim(1) * x.dim(2);
  Tensor out(Shape{x.dim(1), x.dim(2), 2});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t p = 0; p < px; ++p) {
    o[2 * p] = in[p];
    o[2 * p + 1] = in[px + p];
  }
  if (should_record({&x})) {
    record_op(out, {x}, [px](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      auto &t = *gi[0];
      for (std::size_t p = 0; p < px; ++p) {
        t[p] += g[2 * p];
        t[px + p] += g[2 * p + 1];
      }
    });
  }
  return out;
}

// Projection

Tensor l2proj(const Tensor &v, double eps)
{
  if (eps < 0.0) {
    throw std::invalid_argument("l2proj: negative radius");
  }
  double const n = norm2(v);
  if (n <= eps) {
    Tensor out = v.clone();
    out.set_trainable(false);
    if (should_record({&v})) {
      record_op(out, {v}, [](std::span<const double> g, std::span<std::vector<double> *const> gi) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gi[0])[i] += g[i];
        }
      });
    }
    return out;
  }
  double const f = eps / n;
  Tensor out(v.shape());
  auto o = out.mutable_data();
  auto x = v.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = f * x[i];
  }
  if (should_record({&v})) {
    record_op(out, {v}, [v, n, f](std::span<const double> g, std::span<std::vector<double> *const> gi) {
      // d/dv (eps v / |v|) = (eps/|v|) (I - v v^T / |v|^2)
      auto x = v.data();
      double vg = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        vg += x[i] * g[i];
      }
      double const c = vg / (n * n);
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*gi[0])[i] += f * (g[i] - c * x[i]);
      }
    });
  }
  return out;
}

} // namespace dbp
