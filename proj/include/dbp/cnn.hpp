#pragma once

#include "dbp/tensor.hpp"

#include <cstdint>
#include <vector>

namespace dbp {

/// Encoder-decoder layout. Level l runs at resolution 2^-l with widths[l]
/// channels; a bottleneck conv sits one pooling below the last level and each
/// decoder level concatenates the matching encoder features.
struct UNetArch
{
  std::size_t channels = 2;
  std::vector<std::size_t> widths = {16, 32};

  std::size_t levels() const { return widths.size(); }
  std::size_t divisor() const { return std::size_t{1} << levels(); }
  std::size_t layer_count() const { return 2 * levels() + 2; }

  static UNetArch desk() { return {}; }
  static UNetArch paper_scale() { return {2, {64, 128, 256}}; }
  bool operator==(const UNetArch &) const = default;
};

struct ConvLayer
{
  Tensor kernel; // (Cout, Cin, 3, 3)
  Tensor bias;   // (Cout)
};

struct DenoiserWeights
{
  UNetArch arch;
  /// enc_0 .. enc_{L-1}, bottleneck, dec_{L-1} .. dec_0, output
  std::vector<ConvLayer> layers;

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
};

/// Trainable kernels ~ N(0, 2 / (Cin * 9)), zero biases. The output layer is
/// scaled by output_scale so early unrolls start close to the identity.
DenoiserWeights init_weights(const UNetArch &arch, std::uint64_t seed, double output_scale = 0.1);
/// Same layout, all zeros (the denoiser is then exactly the identity).
DenoiserWeights zero_weights(const UNetArch &arch);

/// The network output f_w(x): estimated noise and aliasing of an (H, W, 2) image.
Tensor estimate_noise(const Tensor &x, const DenoiserWeights &w);
/// R_w(x) = x - f_w(x). H and W must be divisible by 2^levels.
Tensor denoise(const Tensor &x, const DenoiserWeights &w);

} // namespace dbp
