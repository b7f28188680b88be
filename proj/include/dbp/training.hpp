#pragma once

#include "dbp/data.hpp"
#include "dbp/recon.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dbp {

enum class TrainMode
{
  Supervised,   // DBP, image-domain loss
  Unsupervised, // DBP, measurement-domain loss, never reads truth
  Modl,         // MoDL, image-domain loss
};

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string &s);

struct TrainConfig
{
  TrainMode mode = TrainMode::Supervised;
  int epochs = 20;
  std::size_t batch_size = 1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  UnrollCounts counts;
  UNetArch arch;
  int checkpoint_every = 1; // epochs; the final epoch is always written
  bool deterministic = true;
  bool warm_start = true;
  bool cosine_decay = false; // lr * (1 + cos(pi t / T)) / 2 over all T steps
  double init_output_scale = 0.1;
};

/// |x_hat - truth|^2 / N over all real components.
Tensor supervised_loss(const Tensor &x_hat, const Tensor &truth);
/// |A x_hat - y|^2 / M over the M sampled complex measurements.
Tensor unsupervised_loss(const Tensor &x_hat, const Measurements &meas);

class Adam
{
public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  /// One update of every parameter in place; grads[i] matches params[i].
  void update(std::vector<Tensor> &params, const std::vector<Tensor> &grads);
};

struct EpochMetrics
{
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_nrmse = 0.0; // NaN when truth is unavailable
  double wall_time_s = 0.0;
};

struct Checkpoint
{
  UnrolledModel model;
  TrainConfig config;
  Adam optimizer;
  int epoch = 0; // completed epochs
};

void save_checkpoint(const std::filesystem::path &dir, const Checkpoint &ckpt);
/// Accepts the checkpoint.json path or its directory.
Checkpoint load_checkpoint(const std::filesystem::path &path);

ModelKind model_kind_for(TrainMode mode);

/// Runs epochs [start.epoch + 1, config.epochs]. Returns one entry per epoch run.
class Trainer
{
public:
  Trainer(TrainConfig config, std::span<const Problem> train_set);
  explicit Trainer(Checkpoint resume, std::span<const Problem> train_set);

  EpochMetrics run_epoch();
  /// Single optimizer step on one batch; returns the mean batch loss.
  double step(std::span<const Problem *const> batch, double *nrmse_sum = nullptr);

  const Checkpoint &state() const { return state_; }
  Checkpoint &state() { return state_; }

private:
  void validate() const;

  Checkpoint state_;
  std::span<const Problem> train_;
};

struct TrainOutput
{
  Checkpoint final;
  std::vector<EpochMetrics> metrics;
};

/// Full loop with checkpoints under out_dir/epoch_NNNN/, out_dir/final/ and
/// out_dir/metrics.csv. With `resume`, continues after its last epoch.
TrainOutput train(const Dataset &ds, const TrainConfig &config, const std::filesystem::path &out_dir,
                  std::optional<Checkpoint> resume = std::nullopt);

/// In-memory variant used by tests; no files written.
TrainOutput train(std::span<const Problem> train_set, const TrainConfig &config);

void write_metrics_csv(const std::filesystem::path &path, const std::vector<EpochMetrics> &rows, TrainMode mode,
                       bool deterministic);

} // namespace dbp
