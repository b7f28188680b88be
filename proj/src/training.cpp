#include "dbp/training.hpp"

#include "dbp/container.hpp"
#include "dbp/errors.hpp"
#include "dbp/evaluation.hpp"
#include "dbp/ops.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dbp {

std::string to_string(TrainMode mode)
{
  switch (mode) {
  case TrainMode::Supervised:
    return "supervised";
  case TrainMode::Unsupervised:
    return "unsupervised";
  case TrainMode::Modl:
    return "modl";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string &s)
{
  if (s == "supervised") {
    return TrainMode::Supervised;
  }
  if (s == "unsupervised") {
    return TrainMode::Unsupervised;
  }
  if (s == "modl") {
    return TrainMode::Modl;
  }
  throw std::invalid_argument("unknown training mode '" + s + "' (supervised|unsupervised|modl)");
}

ModelKind model_kind_for(TrainMode mode)
{
  return mode == TrainMode::Modl ? ModelKind::Modl : ModelKind::Dbp;
}

Tensor supervised_loss(const Tensor &x_hat, const Tensor &truth)
{
  if (x_hat.shape() != truth.shape()) {
    throw std::invalid_argument("supervised_loss: shape mismatch " + shape_string(x_hat.shape()) + " vs " +
                                shape_string(truth.shape()));
  }
  return scale(sum_squares(sub(x_hat, truth)), 1.0 / static_cast<double>(x_hat.size()));
}

Tensor unsupervised_loss(const Tensor &x_hat, const Measurements &meas)
{
  SenseOp const op = meas.op();
  std::size_t const m = op.measurement_count();
  if (m == 0) {
    throw std::invalid_argument("unsupervised_loss: no sampled measurements");
  }
  return scale(sum_squares(sub(op.forward(x_hat), meas.y)), 1.0 / static_cast<double>(m));
}

void Adam::update(std::vector<Tensor> &params, const std::vector<Tensor> &grads)
{
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Adam: parameter/gradient count mismatch");
  }
  if (m.empty()) {
    for (auto const &p : params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }
  if (m.size() != params.size()) {
    throw std::invalid_argument("Adam: optimizer state does not match parameters");
  }
  ++step;
  double const c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double const c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = grads[i].data();
    auto &mi = m[i];
    auto &vi = v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      mi[k] = beta1 * mi[k] + (1.0 - beta1) * g[k];
      vi[k] = beta2 * vi[k] + (1.0 - beta2) * g[k] * g[k];
      double const mhat = mi[k] / c1;
      double const vhat = vi[k] / c2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Trainer

Trainer::Trainer(TrainConfig config, std::span<const Problem> train_set)
  : train_(train_set)
{
  state_.config = config;
  state_.model = UnrolledModel::create(model_kind_for(config.mode), config.arch, mix_seed(config.seed, 100),
                                       config.counts);
  state_.model.weights = init_weights(config.arch, mix_seed(config.seed, 100), config.init_output_scale);
  state_.model.warm_start = config.warm_start;
  state_.optimizer.lr = config.learning_rate;
  validate();
}

Trainer::Trainer(Checkpoint resume, std::span<const Problem> train_set)
  : state_(std::move(resume))
  , train_(train_set)
{
  validate();
}

void Trainer::validate() const
{
  auto const &c = state_.config;
  if (!(c.learning_rate > 0.0)) {
    throw std::invalid_argument("train: learning rate must be positive");
  }
  if (c.batch_size == 0) {
    throw std::invalid_argument("train: batch size must be at least 1");
  }
  if (c.epochs < 0) {
    throw std::invalid_argument("train: negative epoch count");
  }
  if (!(c.init_output_scale >= 0.0) || !std::isfinite(c.init_output_scale)) {
    throw std::invalid_argument("train: init output scale must be finite and non-negative");
  }
  if (c.mode != TrainMode::Unsupervised) {
    for (auto const &p : train_) {
      if (!p.truth) {
        throw DataError("train: mode '" + to_string(c.mode) + "' needs ground truth, but the dataset has none");
      }
    }
  }
}

double Trainer::step(std::span<const Problem *const> batch, double *nrmse_sum)
{
  auto &model = state_.model;
  auto params = model.parameters();
  std::size_t const n = batch.size();
  std::vector<double> losses(n, 0.0);
  std::vector<double> nrmses(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<Tensor>> grads(n);
  TrainMode const mode = state_.config.mode;

  auto one = [&](std::size_t b) {
    Problem const &p = *batch[b];
    Tape tape;
    TapeScope scope(tape);
    Tensor const x_hat = reconstruct(p.meas, model);
    Tensor const loss = mode == TrainMode::Unsupervised ? unsupervised_loss(x_hat, p.meas)
                                                        : supervised_loss(x_hat, *p.truth);
    losses[b] = loss.item();
    if (p.truth) {
      nrmses[b] = nrmse(x_hat, *p.truth);
    }
    Gradients const g = tape.backward(loss);
    for (auto const &t : params) {
      grads[b].push_back(g(t));
    }
  };

  std::vector<std::exception_ptr> errors(n);
  long const count = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (count > 1 && !state_.config.deterministic)
  for (long b = 0; b < count; ++b) {
    try {
      one(static_cast<std::size_t>(b));
    } catch (...) {
      errors[b] = std::current_exception();
    }
  }
  for (auto const &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  // Fixed summation order over the batch.
  std::vector<Tensor> mean;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor acc(params[i].shape());
    auto a = acc.mutable_data();
    for (std::size_t b = 0; b < n; ++b) {
      auto g = grads[b][i].data();
      for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] += g[k];
      }
    }
    for (auto &v : a) {
      v /= static_cast<double>(n);
    }
    if (!acc.all_finite()) {
      throw NumericError("train: non-finite gradient");
    }
    mean.push_back(std::move(acc));
  }
  for (std::size_t b = 0; b < n; ++b) {
    if (!std::isfinite(losses[b])) {
      throw NumericError("train: non-finite loss");
    }
    loss_sum += losses[b];
    if (nrmse_sum) {
      *nrmse_sum += nrmses[b];
    }
  }
  if (state_.config.cosine_decay) {
    std::size_t const bs = state_.config.batch_size;
    double const per_epoch = static_cast<double>((train_.size() + bs - 1) / bs);
    double const total = std::max(1.0, per_epoch * state_.config.epochs);
    double const t = std::min(1.0, static_cast<double>(state_.optimizer.step) / total);
    state_.optimizer.lr = state_.config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
  state_.optimizer.update(params, mean);
  return loss_sum / static_cast<double>(n);
}

EpochMetrics Trainer::run_epoch()
{
  auto const start = std::chrono::steady_clock::now();
  int const epoch = state_.epoch + 1;
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(state_.config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
  for (std::size_t k = order.size(); k > 1; --k) {
    std::swap(order[k - 1], order[static_cast<std::size_t>(rng() % k)]);
  }

  std::size_t const bs = state_.config.batch_size;
  double loss_sum = 0.0;
  double nrmse_sum = 0.0;
  std::size_t batches = 0;
  std::vector<const Problem *> batch;
  for (std::size_t i = 0; i < order.size(); i += bs) {
    batch.clear();
    for (std::size_t k = i; k < std::min(order.size(), i + bs); ++k) {
      batch.push_back(&train_[order[k]]);
    }
    loss_sum += step(batch, &nrmse_sum);
    ++batches;
  }
  state_.epoch = epoch;

  EpochMetrics m;
  m.epoch = epoch;
  m.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  m.mean_nrmse = train_.empty() ? 0.0 : nrmse_sum / static_cast<double>(train_.size());
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

// Checkpoints

namespace {

std::string kind_name(ModelKind k)
{
  return k == ModelKind::Dbp ? "dbp" : "modl";
}

std::filesystem::path checkpoint_file(const std::filesystem::path &path)
{
  return std::filesystem::is_directory(path) ? path / "checkpoint.json" : path;
}

std::string param_name(const char *prefix, std::size_t i)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.dbpt", prefix, i);
  return buf;
}

} // namespace

void save_checkpoint(const std::filesystem::path &dir, const Checkpoint &ckpt)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto const &model = ckpt.model;
  auto const &cfg = ckpt.config;
  auto params = model.parameters();

  nlohmann::ordered_json j;
  j["version"] = 1;
  j["arch"] = {{"channels", model.weights.arch.channels}, {"widths", model.weights.arch.widths}};
  j["kind"] = kind_name(model.kind);
  j["mode"] = to_string(cfg.mode);
  j["rho"] = model.penalty();
  j["n1"] = model.counts.n1;
  j["n2"] = model.counts.n2;
  j["n3"] = model.counts.n3;
  j["warm_start"] = model.warm_start;
  j["dual_update"] = model.dual == DualUpdate::Standard ? "standard" : "printed";
  j["step"] = ckpt.optimizer.step;
  j["epoch"] = ckpt.epoch;
  j["seed"] = cfg.seed;
  j["train"] = {{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"checkpoint_every", cfg.checkpoint_every},
                {"deterministic", cfg.deterministic},
                {"cosine_decay", cfg.cosine_decay},
                {"init_output_scale", cfg.init_output_scale}};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < params.size(); ++i) {
    names.push_back(param_name("param", i));
    save_tensor(dir / names.back(), params[i]);
  }
  j["params"] = names;
  auto const &opt = ckpt.optimizer;
  nlohmann::ordered_json o;
  o["beta1"] = opt.beta1;
  o["beta2"] = opt.beta2;
  o["eps"] = opt.eps;
  o["lr"] = opt.lr;
  o["step"] = opt.step;
  std::vector<std::string> mn, vn;
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    mn.push_back(param_name("adam_m", i));
    vn.push_back(param_name("adam_v", i));
    save_tensor(dir / mn.back(), Tensor(params[i].shape(), opt.m[i]));
    save_tensor(dir / vn.back(), Tensor(params[i].shape(), opt.v[i]));
  }
  o["m"] = mn;
  o["v"] = vn;
  j["optimizer"] = o;

  std::ofstream os(dir / "checkpoint.json");
  if (!os) {
    throw DataError("cannot write " + (dir / "checkpoint.json").string());
  }
  os << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path &path)
{
  auto const file = checkpoint_file(path);
  auto const dir = file.parent_path();
  std::ifstream is(file);
  if (!is) {
    throw DataError("missing checkpoint " + file.string());
  }
  Checkpoint c;
  try {
    auto const j = nlohmann::json::parse(is);
    UNetArch arch;
    arch.channels = j.at("arch").at("channels").get<std::size_t>();
    arch.widths = j.at("arch").at("widths").get<std::vector<std::size_t>>();
    auto const kind = j.at("kind").get<std::string>();
    if (kind != "dbp" && kind != "modl") {
      throw DataError(file.string() + ": unknown model kind " + kind);
    }
    UnrollCounts counts{j.at("n1").get<int>(), j.at("n2").get<int>(), j.at("n3").get<int>()};
    c.config.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.config.seed = j.at("seed").get<std::uint64_t>();
    c.config.arch = arch;
    c.config.counts = counts;
    auto const &t = j.at("train");
    c.config.epochs = t.at("epochs").get<int>();
    c.config.batch_size = t.at("batch_size").get<std::size_t>();
    c.config.learning_rate = t.at("learning_rate").get<double>();
    c.config.checkpoint_every = t.at("checkpoint_every").get<int>();
    c.config.deterministic = t.at("deterministic").get<bool>();
    c.config.cosine_decay = t.value("cosine_decay", false);
    c.config.init_output_scale = t.value("init_output_scale", 0.1);
    c.epoch = j.at("epoch").get<int>();

    c.model = UnrolledModel::create(kind == "dbp" ? ModelKind::Dbp : ModelKind::Modl, arch, 0, counts);
    c.model.warm_start = j.at("warm_start").get<bool>();
    c.config.warm_start = c.model.warm_start;
    c.model.dual = j.at("dual_update").get<std::string>() == "printed" ? DualUpdate::Printed : DualUpdate::Standard;
    auto params = c.model.parameters();
    auto const names = j.at("params").get<std::vector<std::string>>();
    if (names.size() != params.size()) {
      throw DataError(file.string() + ": parameter count does not match the architecture");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      Tensor const t = load_tensor(dir / names[i]);
      if (t.shape() != params[i].shape()) {
        throw DataError(file.string() + ": parameter " + names[i] + " has shape " + shape_string(t.shape()));
      }
      std::copy(t.data().begin(), t.data().end(), params[i].mutable_data().begin());
    }
    auto const &o = j.at("optimizer");
    auto &opt = c.optimizer;
    opt.beta1 = o.at("beta1").get<double>();
    opt.beta2 = o.at("beta2").get<double>();
    opt.eps = o.at("eps").get<double>();
    opt.lr = o.at("lr").get<double>();
    opt.step = o.at("step").get<long>();
    auto const mn = o.at("m").get<std::vector<std::string>>();
    auto const vn = o.at("v").get<std::vector<std::string>>();
    if (mn.size() != vn.size() || (!mn.empty() && mn.size() != params.size())) {
      throw DataError(file.string() + ": optimizer state does not match parameters");
    }
    for (std::size_t i = 0; i < mn.size(); ++i) {
      Tensor const m = load_tensor(dir / mn[i]);
      Tensor const v = load_tensor(dir / vn[i]);
      if (m.size() != params[i].size() || v.size() != params[i].size()) {
        throw DataError(file.string() + ": optimizer moment size mismatch");
      }
      opt.m.emplace_back(m.data().begin(), m.data().end());
      opt.v.emplace_back(v.data().begin(), v.data().end());
    }
  } catch (const nlohmann::json::exception &e) {
    throw DataError(file.string() + ": " + e.what());
  }
  return c;
}

void write_metrics_csv(const std::filesystem::path &path, const std::vector<EpochMetrics> &rows, TrainMode mode,
                       bool deterministic)
{
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw DataError("cannot write " + path.string());
  }
  os << "epoch,split,mode,mean_loss,mean_nrmse,wall_time_s\n";
  char line[256];
  for (auto const &r : rows) {
    // Wall time is zeroed in deterministic mode so reruns are byte-identical.
    std::snprintf(line, sizeof line, "%d,train,%s,%.17g,%.17g,%.3f\n", r.epoch, to_string(mode).c_str(),
                  r.mean_loss, r.mean_nrmse, deterministic ? 0.0 : r.wall_time_s);
    os << line;
  }
}

namespace {

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path &path)
{
  std::vector<EpochMetrics> rows;
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    EpochMetrics m;
    char split[32], mode[32];
    if (std::sscanf(line.c_str(), "%d,%31[^,],%31[^,],%lf,%lf,%lf", &m.epoch, split, mode, &m.mean_loss,
                    &m.mean_nrmse, &m.wall_time_s) == 6) {
      rows.push_back(m);
    }
  }
  return rows;
}

std::filesystem::path epoch_dir(const std::filesystem::path &out, int epoch)
{
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d", epoch);
  return out / name;
}

} // namespace

TrainOutput train(const Dataset &ds, const TrainConfig &config, const std::filesystem::path &out_dir,
                  std::optional<Checkpoint> resume)
{
  namespace fs = std::filesystem;
  Trainer trainer = resume ? Trainer(std::move(*resume), ds.train()) : Trainer(config, ds.train());
  auto &state = trainer.state();
  state.config.epochs = config.epochs;
  fs::create_directories(out_dir);

  TrainOutput out;
  auto const csv = out_dir / "metrics.csv";
  if (state.epoch > 0 && fs::exists(csv)) {
    for (auto const &m : read_metrics_csv(csv)) {
      if (m.epoch <= state.epoch) {
        out.metrics.push_back(m);
      }
    }
  }
  if (state.epoch == 0) {
    save_checkpoint(epoch_dir(out_dir, 0), state);
  }
  int const every = std::max(1, state.config.checkpoint_every);
  while (state.epoch < config.epochs) {
    out.metrics.push_back(trainer.run_epoch());
    write_metrics_csv(csv, out.metrics, state.config.mode, state.config.deterministic);
    if (state.epoch % every == 0 || state.epoch == config.epochs) {
      save_checkpoint(epoch_dir(out_dir, state.epoch), state);
    }
  }
  write_metrics_csv(csv, out.metrics, state.config.mode, state.config.deterministic);
  save_checkpoint(out_dir / "final", state);
  out.final = state;
  return out;
}

TrainOutput train(std::span<const Problem> train_set, const TrainConfig &config)
{
  Trainer trainer(config, train_set);
  TrainOutput out;
  while (trainer.state().epoch < config.epochs) {
    out.metrics.push_back(trainer.run_epoch());
  }
  out.final = trainer.state();
  return out;
}

} // namespace dbp
