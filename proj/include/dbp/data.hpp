#pragma once

#include "dbp/linops.hpp"
#include "dbp/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dbp {

/// What a reconstruction is allowed to see: measurements, the operator that
/// produced them, and the noise level. Ground truth lives only in Problem.
struct Measurements
{
  Tensor y;     // (C, H, W, 2), zero where mask is zero
  Tensor sens;  // (C, H, W, 2)
  Tensor mask;  // (H, W)
  double sigma = 0.0;
  double epsilon = 0.0;

  SenseOp op() const { return SenseOp(sens, mask); }
  std::size_t height() const { return mask.dim(0); }
  std::size_t width() const { return mask.dim(1); }
};

struct Problem
{
  Measurements meas;
  std::optional<Tensor> truth; // (H, W, 2)
};

/// Sum of 3-8 random complex ellipses, one 3x3 box blur, max magnitude 1.
Tensor make_phantom(std::size_t H, std::size_t W, std::uint64_t seed);

/// Gaussian-bump coil profiles with linear phase, normalized so that
/// sum_c |S_c|^2 = 1 at every pixel.
Tensor make_sensitivities(std::size_t C, std::size_t H, std::size_t W, std::uint64_t seed);

/// y = mask (A truth + v), v complex Gaussian with E|v_j|^2 = sigma^2
/// (each real component has std sigma / sqrt 2). epsilon = sigma sqrt(M).
Problem simulate_measurements(const Tensor &truth, const Tensor &sens, const Tensor &mask, double sigma,
                              std::uint64_t seed);

/// splitmix64 step, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct SplitSizes
{
  std::size_t train = 200;
  std::size_t val = 25;
  std::size_t test = 25;
  std::size_t total() const { return train + val + test; }
};

struct DatasetConfig
{
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t coils = 4;
  double sigma = 0.02;
  double accel = 4.0;
  std::size_t calib = 8;
  std::uint64_t seed = 0;
  SplitSizes split;
  bool with_truth = true;

  static DatasetConfig desk();
  /// Closest power-of-two analogue of the clinical setup (8 coils, R 12,
  /// 16x16 calibration, sigma 0.01). Not exercised by tests.
  static DatasetConfig paper_scale();
};

struct Manifest
{
  int version = 1;
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t coils = 0;
  double sigma = 0.0;
  double accel = 0.0;
  std::size_t calib = 0;
  std::vector<std::uint64_t> seeds;
  SplitSizes split;
};

/// Problems ordered train, then validation, then test.
struct Dataset
{
  Manifest manifest;
  std::vector<Problem> problems;

  std::span<const Problem> train() const;
  std::span<const Problem> val() const;
  std::span<const Problem> test() const;
  bool has_truth() const;
  void strip_truth();
};

Dataset generate_dataset(const DatasetConfig &cfg);

/// dir/manifest.json and dir/problems/NNNNN/{y,sens,mask[,truth]}.dbpt
void write_dataset(const std::filesystem::path &dir, const Dataset &ds);
/// Throws DataError on missing/corrupt files or inconsistent manifests.
Dataset read_dataset(const std::filesystem::path &dir);

} // namespace dbp
