#include "dbp/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dbp {

bool is_power_of_two(std::size_t n)
{
  return n > 0 && (n & (n - 1)) == 0;
}

namespace {

struct Plan
{
  std::size_t n = 1;
  std::vector<std::size_t> bitrev;
  std::vector<double> cos_, sin_; // exp(-2 pi i k / n) for k < n/2
};

Plan const &plan_for(std::size_t n)
{
  thread_local std::unordered_map<std::size_t, Plan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) {
    return it->second;
  }
  Plan p;
  p.n = n;
  p.bitrev.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) {
    ++bits;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) {
      r |= ((i >> b) & 1u) << (bits - 1 - b);
    }
    p.bitrev[i] = r;
  }
  for (std::size_t k = 0; k < n / 2; ++k) {
    double const a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    p.cos_.push_back(std::cos(a));
    p.sin_.push_back(std::sin(a));
  }
  return cache.emplace(n, std::move(p)).first->second;
}

// Radix-2 transform of `n` elements, each a run of `width` complex values
// (interleaved doubles) spaced `width` apart. width == 1 is a plain 1-D FFT;
// width == W transforms all columns of a row-major H x W array at once.
void fft_runs(double *a, Plan const &p, std::size_t width, bool inverse)
{
  std::size_t const n = p.n;
  std::size_t const run = 2 * width;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t const j = p.bitrev[i];
    if (i < j) {
      double *x = a + i * run;
      double *y = a + j * run;
      for (std::size_t k = 0; k < run; ++k) {
        std::swap(x[k], y[k]);
      }
    }
  }
  double const sgn = inverse ? -1.0 : 1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    std::size_t const half = len / 2;
    std::size_t const step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        double const wr = p.cos_[j * step];
        double const wi = sgn * p.sin_[j * step];
        double *u = a + (i + j) * run;
        double *v = a + (i + j + half) * run;
        for (std::size_t k = 0; k < run; k += 2) {
          double const tr = wr * v[k] - wi * v[k + 1];
          double const ti = wr * v[k + 1] + wi * v[k];
          v[k] = u[k] - tr;
          v[k + 1] = u[k + 1] - ti;
          u[k] += tr;
          u[k + 1] += ti;
        }
      }
    }
  }
}

} // namespace

void fft2_centered_inplace(std::complex<double> *data, std::size_t H, std::size_t W, bool inverse)
{
  if (!is_power_of_two(H) || !is_power_of_two(W)) {
    throw std::invalid_argument("fft2: extents must be powers of two, got " + std::to_string(H) + "x" +
                                std::to_string(W));
  }
  double *d = reinterpret_cast<double *>(data);
  // With DC at n/2, shift-FFT-shift equals modulating the input by (-1)^(i+j)
  // and the output by (-1)^(k+l+H/2+W/2).
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = (i & 1) ? 0 : 1; j < W; j += 2) {
      d[2 * (i * W + j)] = -d[2 * (i * W + j)];
      d[2 * (i * W + j) + 1] = -d[2 * (i * W + j) + 1];
    }
  }
  Plan const &rows = plan_for(W);
  for (std::size_t i = 0; i < H; ++i) {
    fft_runs(d + 2 * i * W, rows, 1, inverse);
  }
  fft_runs(d, plan_for(H), W, inverse);

  double const norm = 1.0 / std::sqrt(static_cast<double>(H * W));
  std::size_t const parity = (H / 2 + W / 2) & 1;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      double const s = ((i + j + parity) & 1) ? -norm : norm;
      d[2 * (i * W + j)] *= s;
      d[2 * (i * W + j) + 1] *= s;
    }
  }
}

} // namespace dbp
