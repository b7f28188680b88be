#pragma once

#include "dbp/data.hpp"
#include "dbp/recon.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dbp {

/// |x_hat - truth| / |truth| over real/imag components, or over magnitudes
/// when `magnitude` is set. Throws on a zero truth.
double nrmse(const Tensor &x_hat, const Tensor &truth, bool magnitude = false);

double mean(const std::vector<double> &v);

struct SweepRow
{
  int n1 = 0;
  double mean_nrmse = 0.0;
};

struct SweepResult
{
  std::vector<SweepRow> rows;
  int best_n1 = 0;
};

/// Mean NRMSE over `problems` for each inference-time unroll count.
SweepResult sweep_unrolls(const UnrolledModel &model, std::span<const Problem> problems, const std::vector<int> &n1_list);

/// Per-problem NRMSE of a model at a given unroll count.
std::vector<double> evaluate_model(const UnrolledModel &model, std::span<const Problem> problems, int n1);

struct ResultRow
{
  std::size_t problem_id = 0;
  std::string method;
  int n1 = 0; // 0 for non-unrolled baselines
  double nrmse = 0.0;
};

void write_results_csv(const std::filesystem::path &path, const std::vector<ResultRow> &rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path &path);

/// Picks tau from `candidates` by mean validation NRMSE.
double tune_l1_tau(std::span<const Problem> val, const std::vector<double> &candidates, L1WaveletSettings settings);
std::vector<double> default_tau_grid();

struct CompareInputs
{
  std::map<std::string, UnrolledModel> models; // method name -> trained model
  std::vector<int> n1_sweep = {3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  L1WaveletSettings l1;
  bool tune_tau = true;
};

struct CompareOutput
{
  std::vector<ResultRow> rows;
  std::map<std::string, SweepResult> sweeps; // validation sweeps per model
  double tau = 0.0;
};

/// Per-test-problem NRMSE for zero-filled, l1-Haar and every model at both its
/// training unroll count and its validation-optimal one. Problem ids index
/// the full dataset.
CompareOutput compare_methods(const Dataset &ds, const CompareInputs &in);

/// Mean NRMSE per (method, n1) in first-seen order.
std::vector<ResultRow> summarize(const std::vector<ResultRow> &rows);

// 16-bit binary PGM (P5, big-endian samples), [0, max] -> [0, 65535].

void export_image(const Tensor &x, const std::filesystem::path &path);
void export_error_map(const Tensor &x, const Tensor &truth, const std::filesystem::path &path);

struct PgmImage
{
  std::size_t width = 0;
  std::size_t height = 0;
  int maxval = 0;
  std::vector<std::uint16_t> pixels;
};

PgmImage read_pgm(const std::filesystem::path &path);
void write_pgm(const std::filesystem::path &path, std::size_t width, std::size_t height,
               const std::vector<double> &values);

} // namespace dbp
