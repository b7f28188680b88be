#pragma once

#include <complex>
#include <cstddef>

namespace dbp {

bool is_power_of_two(std::size_t n);

/// In-place orthonormal centered 2-D DFT of an H x W row-major complex array.
/// Throws std::invalid_argument unless H and W are powers of two.
void fft2_centered_inplace(std::complex<double> *data, std::size_t H, std::size_t W, bool inverse);

} // namespace dbp
