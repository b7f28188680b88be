#include "dbp/cnn.hpp"

#include "dbp/ops.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dbp {

namespace {

struct LayerShape
{
  std::size_t in, out;
};

std::vector<LayerShape> layer_shapes(const UNetArch &arch)
{
  if (arch.widths.empty() || arch.channels == 0) {
    throw std::invalid_argument("UNetArch: need at least one level and one channel");
  }
  std::size_t const L = arch.levels();
  std::vector<LayerShape> s;
  s.push_back({arch.channels, arch.widths[0]});
  for (std::size_t l = 1; l < L; ++l) {
    s.push_back({arch.widths[l - 1], arch.widths[l]});
  }
  s.push_back({arch.widths[L - 1], arch.widths[L - 1]});
  std::size_t below = arch.widths[L - 1];
  for (std::size_t l = L; l-- > 0;) {
    s.push_back({below + arch.widths[l], arch.widths[l]});
    below = arch.widths[l];
  }
  s.push_back({arch.widths[0], arch.channels});
  return s;
}

DenoiserWeights allocate(const UNetArch &arch)
{
  DenoiserWeights w;
  w.arch = arch;
  for (auto const &ls : layer_shapes(arch)) {
    ConvLayer layer;
    layer.kernel = Tensor::parameter({ls.out, ls.in, 3, 3}, std::vector<double>(ls.out * ls.in * 9, 0.0));
    layer.bias = Tensor::parameter({ls.out}, std::vector<double>(ls.out, 0.0));
    w.layers.push_back(std::move(layer));
  }
  return w;
}

} // namespace

std::vector<Tensor> DenoiserWeights::parameters() const
{
  std::vector<Tensor> p;
  for (auto const &l : layers) {
    p.push_back(l.kernel);
    p.push_back(l.bias);
  }
  return p;
}

std::size_t DenoiserWeights::parameter_count() const
{
  std::size_t n = 0;
  for (auto const &l : layers) {
    n += l.kernel.size() + l.bias.size();
  }
  return n;
}

DenoiserWeights init_weights(const UNetArch &arch, std::uint64_t seed, double output_scale)
{
  DenoiserWeights w = allocate(arch);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto &k = w.layers[i].kernel;
    double const fan_in = static_cast<double>(k.dim(1) * 9);
    double std = std::sqrt(2.0 / fan_in);
    if (i + 1 == w.layers.size()) {
      std *= output_scale;
    }
    std::normal_distribution<double> n(0.0, std);
    for (auto &v : k.mutable_data()) {
      v = n(rng);
    }
  }
  return w;
}

DenoiserWeights zero_weights(const UNetArch &arch)
{
  return allocate(arch);
}

Tensor estimate_noise(const Tensor &x, const DenoiserWeights &w)
{
  auto const &arch = w.arch;
  if (x.rank() != 3 || x.dim(2) != 2 || arch.channels != 2) {
    throw std::invalid_argument("denoise: expected a complex (H,W,2) image, got " + shape_string(x.shape()));
  }
  if (x.dim(0) % arch.divisor() != 0 || x.dim(1) % arch.divisor() != 0) {
    throw std::invalid_argument("denoise: image " + shape_string(x.shape()) + " not divisible by " +
                                std::to_string(arch.divisor()));
  }
  if (w.layers.size() != arch.layer_count()) {
    throw std::invalid_argument("denoise: weights do not match the architecture");
  }
  std::size_t const L = arch.levels();
  auto conv = [&](const Tensor &t, std::size_t i) { return conv2d(t, w.layers[i].kernel, w.layers[i].bias); };

  std::vector<Tensor> skips;
  Tensor h = image_to_channels(x);
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) {
      h = avg_pool2(h);
    }
    h = relu(conv(h, l));
    skips.push_back(h);
  }
  h = relu(conv(avg_pool2(h), L));
  for (std::size_t d = 0; d < L; ++d) {
    std::size_t const l = L - 1 - d;
    h = relu(conv(concat_channels(upsample2(h), skips[l]), L + 1 + d));
  }
  return channels_to_image(conv(h, 2 * L + 1));
}

Tensor denoise(const Tensor &x, const DenoiserWeights &w)
{
  return sub(x, estimate_noise(x, w));
}

} // namespace dbp
