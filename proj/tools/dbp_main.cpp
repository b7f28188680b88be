#include "dbp/container.hpp"
#include "dbp/data.hpp"
#include "dbp/errors.hpp"
#include "dbp/evaluation.hpp"
#include "dbp/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

using namespace dbp;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumeric = 4;

// Flat JSON objects map onto the flags of the subcommand being run; a nested
// object keyed by a subcommand name applies only to that subcommand.
class JsonConfig : public CLI::Config
{
public:
  const CLI::App *root = nullptr;
  std::string section;

  std::string to_config(const CLI::App *app, bool default_also, bool, std::string) const override
  {
    nlohmann::ordered_json j;
    for (const CLI::Option *opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) {
        continue;
      }
      auto const &name = opt->get_lnames().front();
      auto res = opt->results();
      if (res.empty() && default_also && !opt->get_default_str().empty()) {
        res = {opt->get_default_str()};
      }
      if (res.size() == 1) {
        j[name] = res.front();
      } else if (!res.empty()) {
        j[name] = res;
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream &is) const override
  {
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception &e) {
      throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
      throw CLI::FileError("config must be a JSON object");
    }
    std::vector<CLI::ConfigItem> items;
    for (auto const &[key, value] : j.items()) {
      if (value.is_object()) {
        if (key == section) {
          for (auto const &[k, v] : value.items()) {
            items.push_back(item_for(k, v));
          }
        }
        continue;
      }
      items.push_back(item_for(key, value));
    }
    return items;
  }

private:
  CLI::ConfigItem item_for(const std::string &key, const nlohmann::json &v) const
  {
    CLI::ConfigItem it;
    it.name = key;
    const CLI::App *sub = section.empty() ? nullptr : root->get_subcommand_no_throw(section);
    if (sub && sub->get_option_no_throw("--" + key)) {
      it.parents = {section};
    }
    auto scalar = [](const nlohmann::json &e) {
      if (e.is_string()) {
        return e.get<std::string>();
      }
      if (e.is_boolean()) {
        return std::string(e.get<bool>() ? "true" : "false");
      }
      return e.dump();
    };
    if (v.is_array()) {
      for (auto const &e : v) {
        it.inputs.push_back(scalar(e));
      }
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }
};

struct Common
{
  std::uint64_t seed = 0;
  int threads = 0;
  bool deterministic = false;
};

void apply_threads(const Common &c)
{
  int const n = c.deterministic ? 1 : (c.threads > 0 ? c.threads : omp_get_num_procs());
  omp_set_num_threads(n);
}

std::string method_name(TrainMode mode)
{
  switch (mode) {
  case TrainMode::Supervised:
    return "dbp_supervised";
  case TrainMode::Unsupervised:
    return "dbp_unsupervised";
  case TrainMode::Modl:
    return "modl";
  }
  return "unknown";
}

std::span<const Problem> select_split(const Dataset &ds, const std::string &split)
{
  if (split == "train") {
    return ds.train();
  }
  if (split == "val") {
    return ds.val();
  }
  if (split == "test") {
    return ds.test();
  }
  return {ds.problems.data(), ds.problems.size()};
}

std::size_t split_offset(const Dataset &ds, const std::string &split)
{
  if (split == "val") {
    return ds.manifest.split.train;
  }
  if (split == "test") {
    return ds.manifest.split.train + ds.manifest.split.val;
  }
  return 0;
}

std::string id_name(const char *prefix, std::size_t id, const char *ext)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu%s", prefix, id, ext);
  return buf;
}

void write_sweep_csv(const fs::path &path, const SweepResult &s)
{
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw DataError("cannot write " + path.string());
  }
  os << "n1,mean_nrmse\n";
  char line[64];
  for (auto const &r : s.rows) {
    std::snprintf(line, sizeof line, "%d,%.17g\n", r.n1, r.mean_nrmse);
    os << line;
  }
}

void write_summary_csv(const fs::path &path, const std::vector<ResultRow> &summary)
{
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw DataError("cannot write " + path.string());
  }
  os << "method,n1,count,mean_nrmse\n";
  char line[256];
  for (auto const &r : summary) {
    std::snprintf(line, sizeof line, "%s,%d,%zu,%.17g\n", r.method.c_str(), r.n1, r.problem_id, r.nrmse);
    os << line;
  }
}

void print_summary(const std::vector<ResultRow> &summary)
{
  for (auto const &r : summary) {
    std::printf("%-18s n1=%-3d problems=%-4zu mean_nrmse=%.6f\n", r.method.c_str(), r.n1, r.problem_id, r.nrmse);
  }
}

// gen-data

struct GenArgs
{
  fs::path out;
  std::size_t count = 250;
  std::vector<std::size_t> split;
  std::vector<std::size_t> size{32, 32};
  std::size_t coils = 4;
  double sigma = 0.02;
  double accel = 4.0;
  std::size_t calib = 8;
  bool no_truth = false;
  bool count_given = false;
};

int run_gen(const GenArgs &a, const Common &c)
{
  DatasetConfig cfg;
  cfg.height = a.size[0];
  cfg.width = a.size[1];
  cfg.coils = a.coils;
  cfg.sigma = a.sigma;
  cfg.accel = a.accel;
  cfg.calib = a.calib;
  cfg.seed = c.seed;
  if (!a.split.empty()) {
    cfg.split = {a.split[0], a.split[1], a.split[2]};
    if (a.count_given && cfg.split.total() != a.count) {
      throw std::invalid_argument("gen-data: --split does not add up to --count");
    }
  } else {
    std::size_t const held = a.count / 10;
    cfg.split = {a.count - 2 * held, held, held};
  }
  cfg.with_truth = !a.no_truth;
  Dataset ds = generate_dataset(cfg);
  if (a.no_truth) {
    ds.strip_truth();
  }
  write_dataset(a.out, ds);
  std::printf("wrote %zu problems (%zu/%zu/%zu) to %s\n", ds.problems.size(), cfg.split.train, cfg.split.val,
              cfg.split.test, a.out.string().c_str());
  return 0;
}

// train

struct TrainArgs
{
  fs::path data;
  fs::path out;
  std::string mode = "supervised";
  int epochs = 20;
  std::size_t batch = 1;
  double lr = 1e-3;
  int n1 = 5;
  int n2 = 4;
  int n3 = 6;
  std::vector<std::size_t> widths{16, 32};
  int checkpoint_every = 1;
  bool cold_start = false;
  bool cosine = false;
  double init_scale = 0.1;
  fs::path resume;
};

int run_train(const TrainArgs &a, const Common &c)
{
  TrainConfig cfg;
  cfg.mode = parse_train_mode(a.mode);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = c.seed;
  cfg.counts = {a.n1, a.n2, a.n3};
  cfg.arch = UNetArch{2, a.widths};
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.deterministic = c.deterministic;
  cfg.warm_start = !a.cold_start;
  cfg.cosine_decay = a.cosine;
  cfg.init_output_scale = a.init_scale;
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    if (resume->config.mode != cfg.mode) {
      throw std::invalid_argument("train: --resume checkpoint was trained in mode '" +
                                  to_string(resume->config.mode) + "'");
    }
  }
  Dataset const ds = read_dataset(a.data);
  TrainOutput const out = train(ds, cfg, a.out, std::move(resume));
  for (auto const &m : out.metrics) {
    std::printf("epoch %3d  loss %.6e  nrmse %.6f\n", m.epoch, m.mean_loss, m.mean_nrmse);
  }
  std::printf("final checkpoint: %s\n", (a.out / "final" / "checkpoint.json").string().c_str());
  return 0;
}

// recon / eval / sweep-unrolls

struct EvalArgs
{
  fs::path ckpt;
  fs::path data;
  fs::path out;
  fs::path recon_dir;
  std::string split = "test";
  std::vector<int> n1;
  std::vector<std::size_t> ids;
};

int run_recon(const EvalArgs &a, const Common &)
{
  Checkpoint const ck = load_checkpoint(a.ckpt);
  Dataset const ds = read_dataset(a.data);
  std::vector<std::size_t> ids = a.ids;
  if (ids.empty()) {
    std::size_t const off = split_offset(ds, a.split);
    for (std::size_t i = 0; i < select_split(ds, a.split).size(); ++i) {
      ids.push_back(off + i);
    }
  }
  for (std::size_t id : ids) {
    if (id >= ds.problems.size()) {
      throw std::invalid_argument("recon: problem id " + std::to_string(id) + " out of range");
    }
  }
  ForwardOptions opts;
  if (!a.n1.empty()) {
    opts.n1 = a.n1.front();
  }
  std::vector<Tensor> xs(ids.size());
  long const n = static_cast<long>(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    xs[i] = reconstruct(ds.problems[ids[i]].meas, ck.model, opts);
  }
  for (auto const &x : xs) {
    if (!x.all_finite()) {
      throw NumericError("recon: non-finite reconstruction");
    }
  }
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    save_tensor(a.out / id_name("recon", ids[i], ".dbpt"), xs[i]);
    export_image(xs[i], a.out / id_name("recon", ids[i], ".pgm"));
    if (auto const &t = ds.problems[ids[i]].truth) {
      export_error_map(xs[i], *t, a.out / id_name("error", ids[i], ".pgm"));
    }
  }
  std::printf("wrote %zu reconstructions to %s\n", ids.size(), a.out.string().c_str());
  return 0;
}

int run_eval(const EvalArgs &a, const Common &)
{
  Dataset const ds = read_dataset(a.data);
  auto const probs = select_split(ds, a.split);
  std::size_t const off = split_offset(ds, a.split);
  std::vector<ResultRow> rows;
  if (!a.recon_dir.empty()) {
    std::vector<std::pair<std::size_t, Tensor>> found;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      auto const f = a.recon_dir / id_name("recon", off + i, ".dbpt");
      if (fs::exists(f)) {
        found.emplace_back(off + i, load_tensor(f));
      }
    }
    if (found.empty()) {
      throw DataError("eval: no reconstructions for split '" + a.split + "' in " + a.recon_dir.string());
    }
    for (auto const &[id, x] : found) {
      auto const &t = ds.problems[id].truth;
      if (!t) {
        throw DataError("eval: problem " + std::to_string(id) + " has no ground truth");
      }
      if (!x.all_finite()) {
        throw NumericError("eval: non-finite reconstruction for problem " + std::to_string(id));
      }
      rows.push_back({id, "recon", 0, nrmse(x, *t)});
    }
  } else {
    Checkpoint const ck = load_checkpoint(a.ckpt);
    int const n1 = a.n1.empty() ? ck.model.counts.n1 : a.n1.front();
    auto const scores = evaluate_model(ck.model, probs, n1);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      rows.push_back({off + i, method_name(ck.config.mode), n1, scores[i]});
    }
  }
  fs::create_directories(a.out);
  write_results_csv(a.out / "results.csv", rows);
  auto const summary = summarize(rows);
  write_summary_csv(a.out / "summary.csv", summary);
  print_summary(summary);
  return 0;
}

int run_sweep(const EvalArgs &a, const Common &)
{
  Checkpoint const ck = load_checkpoint(a.ckpt);
  Dataset const ds = read_dataset(a.data);
  auto const probs = select_split(ds, a.split);
  std::size_t const off = split_offset(ds, a.split);
  std::vector<int> n1s = a.n1;
  if (n1s.empty()) {
    n1s = {3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  }
  std::vector<ResultRow> rows;
  SweepResult sweep;
  double best = std::numeric_limits<double>::infinity();
  for (int n1 : n1s) {
    auto const scores = evaluate_model(ck.model, probs, n1);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      rows.push_back({off + i, method_name(ck.config.mode), n1, scores[i]});
    }
    double const m = mean(scores);
    sweep.rows.push_back({n1, m});
    if (m < best) {
      best = m;
      sweep.best_n1 = n1;
    }
  }
  fs::create_directories(a.out);
  write_results_csv(a.out / "results.csv", rows);
  write_sweep_csv(a.out / "sweep.csv", sweep);
  for (auto const &r : sweep.rows) {
    std::printf("n1=%-3d mean_nrmse=%.6f\n", r.n1, r.mean_nrmse);
  }
  std::printf("best n1=%d\n", sweep.best_n1);
  return 0;
}

// compare

struct CompareArgs
{
  fs::path data;
  fs::path out;
  std::vector<std::string> models;
  std::vector<int> n1;
  int l1_iters = 30;
  int l1_levels = 3;
  double tau = -1.0;
};

int run_compare(const CompareArgs &a, const Common &)
{
  CompareInputs in;
  for (auto const &spec : a.models) {
    auto const eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw std::invalid_argument("compare: --model expects NAME=CHECKPOINT, got '" + spec + "'");
    }
    in.models.emplace(spec.substr(0, eq), load_checkpoint(spec.substr(eq + 1)).model);
  }
  if (!a.n1.empty()) {
    in.n1_sweep = a.n1;
  }
  in.l1.iters = a.l1_iters;
  in.l1.levels = a.l1_levels;
  if (a.tau >= 0.0) {
    in.l1.tau = a.tau;
    in.tune_tau = false;
  }
  Dataset const ds = read_dataset(a.data);
  CompareOutput const out = compare_methods(ds, in);
  fs::create_directories(a.out);
  write_results_csv(a.out / "results.csv", out.rows);
  auto const summary = summarize(out.rows);
  write_summary_csv(a.out / "summary.csv", summary);
  for (auto const &[name, sweep] : out.sweeps) {
    write_sweep_csv(a.out / ("sweep_" + name + ".csv"), sweep);
  }
  std::printf("l1_haar tau=%g\n", out.tau);
  print_summary(summary);
  return 0;
}

const char *kDatasetFormat = R"(Dataset layout:
  DIR/manifest.json            version, count, H, W, C, sigma, accel, calib, seeds, split
  DIR/problems/NNNNN/y.dbpt    (C,H,W,2) masked noisy k-space
  DIR/problems/NNNNN/sens.dbpt (C,H,W,2) coil sensitivities
  DIR/problems/NNNNN/mask.dbpt (H,W) 0/1 sampling mask
  DIR/problems/NNNNN/truth.dbpt (H,W,2) ground truth, absent when stripped
Problems are ordered train, then val, then test.
.dbpt: "DBPT", u8 version 1, u8 dtype 0 (f64), u8 rank, rank x u64 extents, then
row-major float64 data, all little-endian. Complex values are trailing real/imag pairs.)";

const char *kTrainFormat = R"(Outputs:
  OUT/metrics.csv       epoch,split,mode,mean_loss,mean_nrmse,wall_time_s
                        (wall_time_s is 0 with --deterministic; mean_nrmse is nan without truth)
  OUT/epoch_NNNN/       checkpoint after epoch NNNN (epoch_0000 is the initialization)
  OUT/final/            last checkpoint
Checkpoint directory: checkpoint.json (model kind, architecture, unroll counts,
train config, Adam state, epoch) plus param_NNN.dbpt tensors.)";

const char *kResultsFormat = R"(Outputs:
  OUT/results.csv   problem_id,method,n1,nrmse   (one row per problem; n1 is 0 for baselines)
  OUT/summary.csv   method,n1,count,mean_nrmse
NRMSE is |x - truth| / |truth| over real and imaginary parts.
Problem ids index the whole dataset (train, then val, then test).)";

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Unrolled basis-pursuit reconstruction: data generation, training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  auto cfg = std::make_shared<JsonConfig>();
  cfg->root = &app;
  app.config_formatter(cfg);
  app.set_config("--config", "", "JSON file of flag values; flags given on the command line take precedence. "
                                 "Keys are long flag names without dashes. A nested object keyed by a subcommand "
                                 "name applies only to that subcommand.");

  Common common;
  app.add_option("--seed", common.seed, "Seed for every random choice of this invocation")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads (0 = all available cores)")
    ->check(CLI::NonNegativeNumber)
    ->capture_default_str();
  app.add_flag("--deterministic", common.deterministic,
               "Single-threaded reductions and zero wall times, for byte-identical reruns");

  GenArgs gen;
  auto *g = app.add_subcommand("gen-data", "Generate a synthetic multi-coil dataset");
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--count", gen.count, "Number of problems; split 80/10/10 unless --split is given")
    ->check(CLI::PositiveNumber)
    ->capture_default_str();
  g->add_option("--split", gen.split, "Train, validation and test sizes")->expected(3);
  g->add_option("--size", gen.size, "Image height and width (powers of two)")->expected(2)->capture_default_str();
  g->add_option("--coils", gen.coils, "Receive coils")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--sigma", gen.sigma, "Complex noise standard deviation per measurement")
    ->check(CLI::NonNegativeNumber)
    ->capture_default_str();
  g->add_option("--accel", gen.accel, "Target acceleration R")->check(CLI::Range(1.0, 1e6))->capture_default_str();
  g->add_option("--calib", gen.calib, "Side of the fully sampled k-space centre")->capture_default_str();
  g->add_flag("--no-truth", gen.no_truth, "Omit ground-truth images");
  g->footer(kDatasetFormat);

  TrainArgs tr;
  auto *t = app.add_subcommand("train", "Train an unrolled network");
  t->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Output run directory")->required();
  t->add_option("--mode", tr.mode, "supervised | unsupervised | modl")
    ->check(CLI::IsMember({"supervised", "unsupervised", "modl"}))
    ->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Training epochs (0 writes the initial checkpoint only)")
    ->check(CLI::NonNegativeNumber)
    ->capture_default_str();
  t->add_option("--batch", tr.batch, "Problems per optimizer step")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--n1", tr.n1, "Denoiser / data-consistency alternations")
    ->check(CLI::PositiveNumber)
    ->capture_default_str();
  t->add_option("--n2", tr.n2, "ADMM iterations per data-consistency layer")
    ->check(CLI::PositiveNumber)
    ->capture_default_str();
  t->add_option("--n3", tr.n3, "CG iterations per solve")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--widths", tr.widths, "Encoder channel widths, one per level")->capture_default_str();
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Write epoch_NNNN every this many epochs")
    ->check(CLI::PositiveNumber)
    ->capture_default_str();
  t->add_flag("--cold-start", tr.cold_start, "Reset the ADMM slack and dual at every data-consistency layer");
  t->add_flag("--cosine", tr.cosine, "Cosine learning-rate decay to zero over the run");
  t->add_option("--init-output-scale", tr.init_scale, "Std multiplier of the denoiser output layer at init")
    ->capture_default_str()
    ->check(CLI::NonNegativeNumber);
  t->add_option("--resume", tr.resume, "Continue from this checkpoint (directory or checkpoint.json)");
  t->footer(kTrainFormat);

  EvalArgs rc;
  auto *r = app.add_subcommand("recon", "Reconstruct problems with a trained model");
  r->add_option("--ckpt", rc.ckpt, "Checkpoint directory or checkpoint.json")->required();
  r->add_option("--data", rc.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--out", rc.out, "Output directory")->required();
  r->add_option("--split", rc.split, "train | val | test | all")
    ->check(CLI::IsMember({"train", "val", "test", "all"}))
    ->capture_default_str();
  r->add_option("--ids", rc.ids, "Explicit problem ids (overrides --split)");
  r->add_option("--n1", rc.n1, "Unroll count override")->expected(1)->check(CLI::PositiveNumber);
  r->footer("Outputs per problem id NNNNN:\n"
            "  OUT/recon_NNNNN.dbpt  (H,W,2) reconstruction\n"
            "  OUT/recon_NNNNN.pgm   magnitude, 16-bit binary PGM scaled [0,max] -> [0,65535]\n"
            "  OUT/error_NNNNN.pgm   |x - truth|, same scaling (only when truth is present)");

  EvalArgs ev;
  auto *e = app.add_subcommand("eval", "Per-problem NRMSE of a model or of saved reconstructions");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint directory or checkpoint.json");
  e->add_option("--recon", ev.recon_dir, "Directory of recon_NNNNN.dbpt files to score instead of a model")
    ->check(CLI::ExistingDirectory);
  e->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--split", ev.split, "train | val | test | all")
    ->check(CLI::IsMember({"train", "val", "test", "all"}))
    ->capture_default_str();
  e->add_option("--n1", ev.n1, "Unroll count override")->expected(1)->check(CLI::PositiveNumber);
  e->footer(kResultsFormat);

  EvalArgs sw;
  auto *s = app.add_subcommand("sweep-unrolls", "Mean NRMSE over a range of inference-time unroll counts");
  s->add_option("--ckpt", sw.ckpt, "Checkpoint directory or checkpoint.json")->required();
  s->add_option("--data", sw.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--out", sw.out, "Output directory")->required();
  s->add_option("--split", sw.split, "train | val | test | all")
    ->check(CLI::IsMember({"train", "val", "test", "all"}))
    ->capture_default_str();
  s->add_option("--n1", sw.n1, "Unroll counts to evaluate (default 3..14)")->check(CLI::PositiveNumber);
  s->footer(std::string(kResultsFormat) + "\n  OUT/sweep.csv     n1,mean_nrmse");

  CompareArgs cp;
  auto *c = app.add_subcommand("compare", "Zero-filled, l1-Haar and trained models on the test split");
  c->add_option("--data", cp.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--out", cp.out, "Output directory")->required();
  c->add_option("--model", cp.models, "NAME=CHECKPOINT, repeatable");
  c->add_option("--n1", cp.n1, "Validation sweep used to pick each model's best unroll count (default 3..14)")
    ->check(CLI::PositiveNumber);
  c->add_option("--l1-iters", cp.l1_iters, "Outer iterations of the l1-Haar baseline")
    ->check(CLI::PositiveNumber)
    ->capture_default_str();
  c->add_option("--l1-levels", cp.l1_levels, "Haar levels")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--tau", cp.tau, "Fixed l1 threshold; by default tuned on the validation split");
  c->footer(std::string(kResultsFormat) + "\n  OUT/sweep_NAME.csv  n1,mean_nrmse on the validation split\n"
                                          "Methods: zero_filled, l1_haar, and each NAME at its training n1 and "
                                          "its validation-optimal n1.");

  for (int i = 1; i < argc; ++i) {
    if (app.get_subcommand_no_throw(argv[i])) {
      cfg->section = argv[i];
      break;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &err) {
    int const code = app.exit(err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    apply_threads(common);
    if (*g) {
      gen.count_given = g->get_option("--count")->count() > 0;
      if (gen.size[0] == 0 || gen.size[1] == 0) {
        throw std::invalid_argument("gen-data: --size must be positive");
      }
      return run_gen(gen, common);
    }
    if (*t) {
      return run_train(tr, common);
    }
    if (*r) {
      return run_recon(rc, common);
    }
    if (*e) {
      if (ev.ckpt.empty() == ev.recon_dir.empty()) {
        throw std::invalid_argument("eval: give exactly one of --ckpt or --recon");
      }
      return run_eval(ev, common);
    }
    if (*s) {
      return run_sweep(sw, common);
    }
    if (*c) {
      return run_compare(cp, common);
    }
  } catch (const DataError &err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const NumericError &err) {
    std::cerr << "numeric failure: " << err.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument &err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception &err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return kUsage;
}
