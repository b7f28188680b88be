#include "dbp/errors.hpp"
#include "dbp/ops.hpp"
#include "dbp/sampling.hpp"
#include "dbp/training.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace dbp;
namespace fs = std::filesystem;

namespace {

DatasetConfig tiny_config(std::size_t train)
{
  DatasetConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.calib = 4;
  cfg.coils = 2;
  cfg.accel = 3.0;
  cfg.split = {train, 1, 1};
  cfg.seed = 21;
  return cfg;
}

TrainConfig fast_config(TrainMode mode, int epochs)
{
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.seed = 5;
  c.counts = {2, 2, 3};
  c.arch = UNetArch{2, {8, 16}};
  return c;
}

std::string slurp(const fs::path &p)
{
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace

TEST(Loss, SupervisedExamples)
{
  std::mt19937_64 rng(1);
  Tensor const t = test::random_tensor({4, 4, 2}, rng);
  EXPECT_EQ(supervised_loss(t, t).item(), 0.0);
  Tensor const shifted = add(t, Tensor::full(t.shape(), 0.3));
  EXPECT_NEAR(supervised_loss(shifted, t).item(), 0.09, 1e-15);
  Tensor const r = test::random_tensor({4, 4, 2}, rng);
  EXPECT_DOUBLE_EQ(supervised_loss(add(t, r), t).item(), supervised_loss(sub(t, r), t).item());
  EXPECT_THROW(supervised_loss(t, Tensor({4, 4})), std::invalid_argument);
}

TEST(Loss, UnsupervisedNoiseless)
{
  Tensor const truth = make_phantom(16, 16, 2);
  Tensor const sens = make_sensitivities(3, 16, 16, 3);
  MaskSpec spec{16, 16, 4, 3.0, 4};
  Problem const p = simulate_measurements(truth, sens, poisson_disc_mask(spec), 0.0, 5);
  EXPECT_EQ(unsupervised_loss(truth, p.meas).item(), 0.0);
}

TEST(Loss, UnsupervisedNoiseExpectation)
{
  Tensor const truth = make_phantom(32, 32, 6);
  Tensor const sens = make_sensitivities(4, 32, 32, 7);
  Tensor const mask = Tensor::full({32, 32}, 1.0);
  double const sigma = 0.03;
  double acc = 0.0;
  int const trials = 8;
  for (int s = 0; s < trials; ++s) {
    Problem const p = simulate_measurements(truth, sens, mask, sigma, 100 + s);
    acc += unsupervised_loss(truth, p.meas).item();
  }
  EXPECT_NEAR(acc / trials, sigma * sigma, 0.05 * sigma * sigma);
}

TEST(Loss, UnsupervisedIgnoresNullSpace)
{
  Tensor const truth = make_phantom(16, 16, 8);
  Tensor const sens = make_sensitivities(1, 16, 16, 9);
  MaskSpec spec{16, 16, 4, 3.0, 10};
  Tensor const mask = poisson_disc_mask(spec);
  Problem const p = simulate_measurements(truth, sens, mask, 0.02, 11);
  // Single coil: a k-space component at an unsampled frequency, divided by S, is invisible.
  std::size_t hole = 0;
  while (mask[hole] != 0.0) {
    ++hole;
  }
  Tensor k({1, 16, 16, 2});
  k.mutable_data()[2 * hole] = 1.0;
  Tensor const w = ifft2_centered(k).reshaped({16, 16, 2});
  Tensor null({16, 16, 2});
  for (std::size_t q = 0; q < 256; ++q) {
    std::complex<double> const s(sens[2 * q], sens[2 * q + 1]);
    std::complex<double> const v = std::complex<double>(w[2 * q], w[2 * q + 1]) / s;
    null.mutable_data()[2 * q] = v.real();
    null.mutable_data()[2 * q + 1] = v.imag();
  }
  double const base = unsupervised_loss(truth, p.meas).item();
  EXPECT_NEAR(unsupervised_loss(add(truth, scale(null, 5.0)), p.meas).item(), base, 1e-12);
}

TEST(Adam, SingleStepClosedForm)
{
  // loss = (w - 3)^2 at w = 1: g = -4.
  Tensor w = Tensor::parameter({1}, {1.0});
  Adam opt;
  opt.lr = 0.1;
  std::vector<Tensor> params{w};
  opt.update(params, {Tensor({1}, {-4.0})});
  double const m = 0.1 * -4.0;
  double const v = 0.001 * 16.0;
  double const mhat = m / (1 - 0.9);
  double const vhat = v / (1 - 0.999);
  double const expected = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  EXPECT_NEAR(w[0], expected, 1e-12);

  // Second step on the same quadratic.
  double const g2 = 2.0 * (w[0] - 3.0);
  opt.update(params, {Tensor({1}, {g2})});
  double const m2 = 0.9 * m + 0.1 * g2;
  double const v2 = 0.999 * v + 0.001 * g2 * g2;
  double const w2 = expected - 0.1 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(w[0], w2, 1e-12);
}

TEST(TrainConfigValidation, RejectsBadValues)
{
  Dataset const ds = generate_dataset(tiny_config(2));
  TrainConfig c = fast_config(TrainMode::Supervised, 1);
  c.learning_rate = 0.0;
  EXPECT_THROW(Trainer(c, ds.train()), std::invalid_argument);
  c = fast_config(TrainMode::Supervised, 1);
  c.batch_size = 0;
  EXPECT_THROW(Trainer(c, ds.train()), std::invalid_argument);
  c = fast_config(TrainMode::Supervised, 1);
  c.init_output_scale = -1.0;
  EXPECT_THROW(Trainer(c, ds.train()), std::invalid_argument);
  EXPECT_THROW(parse_train_mode("semi"), std::invalid_argument);
  EXPECT_EQ(parse_train_mode("modl"), TrainMode::Modl);
  EXPECT_EQ(to_string(TrainMode::Unsupervised), "unsupervised");
}

TEST(Train, SupervisedWithoutTruthFails)
{
  Dataset ds = generate_dataset(tiny_config(2));
  ds.strip_truth();
  EXPECT_THROW(Trainer(fast_config(TrainMode::Supervised, 1), ds.train()), DataError);
  EXPECT_THROW(Trainer(fast_config(TrainMode::Modl, 1), ds.train()), DataError);
}

TEST(Train, SmokeLossDecreases)
{
  Dataset const ds = generate_dataset(tiny_config(16));
  for (TrainMode mode : {TrainMode::Supervised, TrainMode::Modl}) {
    TrainConfig c = fast_config(mode, 2);
    c.learning_rate = 3e-3;
    TrainOutput const out = train(ds.train(), c);
    ASSERT_EQ(out.metrics.size(), 2u);
    EXPECT_LT(out.metrics[1].mean_loss, out.metrics[0].mean_loss) << to_string(mode);
    EXPECT_EQ(out.final.optimizer.step, 32);
  }
}

TEST(Train, CosineDecaySchedule)
{
  Dataset const ds = generate_dataset(tiny_config(4));
  TrainConfig c = fast_config(TrainMode::Supervised, 2);
  c.learning_rate = 2e-3;
  c.cosine_decay = true;
  Trainer t(c, ds.train());
  std::vector<double> lrs;
  for (int e = 0; e < 2; ++e) {
    for (auto const &p : ds.train()) {
      Problem const *one[] = {&p};
      t.step(one);
      lrs.push_back(t.state().optimizer.lr);
    }
  }
  ASSERT_EQ(lrs.size(), 8u);
  for (std::size_t k = 0; k < lrs.size(); ++k) {
    EXPECT_NEAR(lrs[k], 1e-3 * (1.0 + std::cos(std::numbers::pi * double(k) / 8.0)), 1e-15) << k;
  }
  c.cosine_decay = false;
  Trainer flat(c, ds.train());
  Problem const *one[] = {&ds.train()[0]};
  flat.step(one);
  EXPECT_EQ(flat.state().optimizer.lr, 2e-3);
}

TEST(Train, InitOutputScaleZeroStartsAtIdentity)
{
  Dataset const ds = generate_dataset(tiny_config(2));
  TrainConfig c = fast_config(TrainMode::Unsupervised, 1);
  c.init_output_scale = 0.0;
  Trainer t(c, ds.train());
  for (double v : t.state().model.weights.layers.back().kernel.data()) {
    EXPECT_EQ(v, 0.0);
  }
  Trainer d(fast_config(TrainMode::Unsupervised, 1), ds.train());
  EXPECT_TRUE(bitwise_equal(d.state().model.weights.layers[0].kernel, t.state().model.weights.layers[0].kernel));
}

TEST(Train, UnsupervisedOnStrippedData)
{
  Dataset ds = generate_dataset(tiny_config(4));
  ds.strip_truth();
  TrainOutput const out = train(ds.train(), fast_config(TrainMode::Unsupervised, 1));
  ASSERT_EQ(out.metrics.size(), 1u);
  EXPECT_TRUE(std::isfinite(out.metrics[0].mean_loss));
  EXPECT_TRUE(std::isnan(out.metrics[0].mean_nrmse));
}

TEST(Train, UnsupervisedDoesNotDependOnTruth)
{
  Dataset with = generate_dataset(tiny_config(4));
  Dataset without = with;
  without.strip_truth();
  TrainConfig const c = fast_config(TrainMode::Unsupervised, 1);
  TrainOutput const a = train(with.train(), c);
  TrainOutput const b = train(without.train(), c);
  EXPECT_EQ(a.metrics[0].mean_loss, b.metrics[0].mean_loss);
  auto pa = a.final.model.parameters();
  auto pb = b.final.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(pa[i], pb[i]));
  }
}

TEST(Train, BatchedStepIsDeterministic)
{
  Dataset const ds = generate_dataset(tiny_config(4));
  TrainConfig c = fast_config(TrainMode::Supervised, 1);
  c.batch_size = 3;
  TrainOutput const a = train(ds.train(), c);
  TrainOutput const b = train(ds.train(), c);
  EXPECT_EQ(a.final.optimizer.step, 2);
  EXPECT_EQ(a.metrics[0].mean_loss, b.metrics[0].mean_loss);
}

TEST(Checkpoint, SaveLoadRoundTrip)
{
  auto const dir = fs::temp_directory_path() / "dbp_ckpt_roundtrip";
  fs::remove_all(dir);
  Dataset const ds = generate_dataset(tiny_config(2));
  TrainConfig cfg = fast_config(TrainMode::Modl, 1);
  cfg.cosine_decay = true;
  cfg.init_output_scale = 0.25;
  TrainOutput const out = train(ds.train(), cfg);
  save_checkpoint(dir, out.final);
  Checkpoint const back = load_checkpoint(dir / "checkpoint.json");
  EXPECT_EQ(back.model.kind, ModelKind::Modl);
  EXPECT_EQ(back.epoch, 1);
  EXPECT_EQ(back.model.counts.n1, 2);
  EXPECT_EQ(back.optimizer.step, out.final.optimizer.step);
  EXPECT_TRUE(back.config.cosine_decay);
  EXPECT_EQ(back.config.init_output_scale, 0.25);
  auto pa = out.final.model.parameters();
  auto pb = back.model.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(pa[i], pb[i]));
    EXPECT_TRUE(pb[i].trainable());
  }
  EXPECT_EQ(back.optimizer.m, out.final.optimizer.m);
  EXPECT_EQ(back.optimizer.v, out.final.optimizer.v);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), DataError);
  fs::remove(dir / "param_000.dbpt");
  EXPECT_THROW(load_checkpoint(dir), DataError);
  fs::remove_all(dir);
}

TEST(Train, ResumeIsBitIdentical)
{
  auto const base = fs::temp_directory_path() / "dbp_resume";
  fs::remove_all(base);
  Dataset const ds = generate_dataset(tiny_config(3));
  TrainConfig const c = fast_config(TrainMode::Supervised, 2);

  TrainOutput const straight = train(ds, c, base / "straight");

  TrainConfig first = c;
  first.epochs = 1;
  train(ds, first, base / "resumed");
  Checkpoint ck = load_checkpoint(base / "resumed" / "epoch_0001");
  TrainOutput const resumed = train(ds, c, base / "resumed", ck);

  auto pa = straight.final.model.parameters();
  auto pb = resumed.final.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(pa[i], pb[i]));
  }
  EXPECT_EQ(slurp(base / "straight" / "metrics.csv"), slurp(base / "resumed" / "metrics.csv"));
  fs::remove_all(base);
}

TEST(Train, ZeroEpochsWritesInitialCheckpointOnly)
{
  auto const dir = fs::temp_directory_path() / "dbp_zero_epochs";
  fs::remove_all(dir);
  Dataset const ds = generate_dataset(tiny_config(2));
  TrainOutput const out = train(ds, fast_config(TrainMode::Supervised, 0), dir);
  EXPECT_TRUE(out.metrics.empty());
  EXPECT_TRUE(fs::exists(dir / "epoch_0000" / "checkpoint.json"));
  EXPECT_FALSE(fs::exists(dir / "epoch_0001"));
  std::string const csv = slurp(dir / "metrics.csv");
  EXPECT_EQ(csv, "epoch,split,mode,mean_loss,mean_nrmse,wall_time_s\n");
  fs::remove_all(dir);
}

TEST(Train, MetricsCsvLayout)
{
  auto const dir = fs::temp_directory_path() / "dbp_metrics";
  fs::remove_all(dir);
  Dataset const ds = generate_dataset(tiny_config(2));
  train(ds, fast_config(TrainMode::Unsupervised, 2), dir);
  std::ifstream is(dir / "metrics.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "epoch,split,mode,mean_loss,mean_nrmse,wall_time_s");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.rfind(std::to_string(rows) + ",train,unsupervised,", 0), 0u) << line;
  }
  EXPECT_EQ(rows, 2);
  EXPECT_TRUE(fs::exists(dir / "final" / "checkpoint.json"));
  fs::remove_all(dir);
}
