#include "dbp/container.hpp"
#include "dbp/data.hpp"
#include "dbp/evaluation.hpp"
#include "dbp/linops.hpp"
#include "dbp/ops.hpp"
#include "dbp/recon.hpp"
#include "dbp/sampling.hpp"
#include "dbp/training.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

using namespace dbp;
using namespace dbp::test;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
  bool pass = false;
  std::string detail;
};

struct Options
{
  fs::path work = "acceptance_work";
  fs::path cli;
  std::set<int> only;
  int sup_epochs = 10;
  int unsup_epochs = 16;
  int modl_epochs = 10;
  double unsup_lr = 5e-5;
  double unsup_init_scale = 0.0;
  std::size_t unsup_batch = 4;
  bool sup_warm = false;
  std::uint64_t seed = 2024;
};

std::string fmt(const char *f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Problem random_problem(std::size_t n, std::size_t C, double accel, double sigma, std::uint64_t seed)
{
  Tensor const truth = make_phantom(n, n, seed);
  Tensor const sens = make_sensitivities(C, n, n, seed + 1);
  MaskSpec spec;
  spec.height = n;
  spec.width = n;
  spec.calib = n / 4;
  spec.accel = accel;
  spec.seed = seed + 2;
  return simulate_measurements(truth, sens, poisson_disc_mask(spec), sigma, seed + 3);
}

// 1

Outcome adjoint_dot_test()
{
  auto const t0 = Clock::now();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coils(1, 6);
  std::uniform_int_distribution<int> side(2, 5);
  std::bernoulli_distribution keep(0.4);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::size_t const H = std::size_t{1} << side(rng);
    std::size_t const W = std::size_t{1} << side(rng);
    std::size_t const C = static_cast<std::size_t>(coils(rng));
    Tensor const sens = random_tensor({C, H, W, 2}, rng);
    Tensor mask({H, W});
    for (auto &v : mask.mutable_data()) {
      v = keep(rng) ? 1.0 : 0.0;
    }
    worst = std::max(worst, dot_test(SenseOp(sens, mask), rng).relative());
  }
  double const s = seconds_since(t0);
  return {worst <= 1e-10 && s < 5.0, fmt("worst relative mismatch %.2e (bound 1e-10), %.2f s", worst, s)};
}

// 2

double five_point(Tensor leaf, std::size_t i, const std::function<double()> &loss, double h)
{
  auto d = leaf.mutable_data();
  double const keep = d[i];
  auto at = [&](double t) {
    d[i] = keep + t;
    return loss();
  };
  double const v = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  d[i] = keep;
  return v;
}

Outcome gradient_integrity()
{
  auto const t0 = Clock::now();
  Tensor const truth = make_phantom(4, 4, 5);
  Tensor const sens = make_sensitivities(2, 4, 4, 6);
  Tensor const mask({4, 4}, {1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 0});
  Problem const p = simulate_measurements(truth, sens, mask, 0.05, 7);
  UnrolledModel model = UnrolledModel::create(ModelKind::Dbp, UNetArch::desk(), 8, UnrollCounts{1, 2, 3}, 0.8);
  auto loss = [&] { return sum_squares(sub(dbp_forward(p.meas, model), truth)); };
  Tape tape;
  Gradients g;
  {
    TapeScope scope(tape);
    g = tape.backward(loss());
  }
  std::size_t checked = 0;
  std::size_t retried = 0;
  double worst = 0.0;
  for (auto const &leaf : model.parameters()) {
    Tensor const grad = g(leaf);
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      double fd = central_difference(leaf, i, [&] { return loss().item(); }, 1e-5);
      if (std::max(std::abs(fd), std::abs(grad[i])) <= 1e-8) {
        continue;
      }
      double e = rel_err(grad[i], fd);
      if (e >= 1e-5) {
        // tiny components are roundoff-limited at h=1e-5, and a ReLU kink can sit inside the stencil
        ++retried;
        e = std::min(rel_err(grad[i], five_point(leaf, i, [&] { return loss().item(); }, 1e-3)),
                     rel_err(grad[i], central_difference(leaf, i, [&] { return loss().item(); }, 1e-6)));
      }
      worst = std::max(worst, e);
      ++checked;
    }
  }
  double const s = seconds_since(t0);
  return {worst < 1e-4 && s < 60.0,
          fmt("%zu components, worst rel. err %.2e (bound 1e-4; %zu rechecked with a 5-point stencil or h=1e-6), %.1f s", checked, worst,
              retried, s)};
}

// 3

Outcome admm_oracle()
{
  auto const t0 = Clock::now();
  double worst = 0.0;
  double worst_feas = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    Problem const p = random_problem(8, 2, 2.5, 0.05, 100 + 10 * k);
    SenseOp const op = p.meas.op();
    std::mt19937_64 rng(k);
    Tensor const r = add(*p.truth, random_tensor({8, 8, 2}, rng, 0.2));
    DCState const s = dc_layer(r, p.meas, op, Tensor::scalar(10.0), initial_state(p.meas, op), {50, 10});
    worst = std::max(worst, rel_norm(s.x, ball_oracle(p.meas, r)));
    worst_feas = std::max(worst_feas, norm2(sub(p.meas.y, op.forward(s.x))) / p.meas.epsilon);
  }
  double const s = seconds_since(t0);
  return {worst < 1e-4 && worst_feas <= 1.0 + 1e-4 && s < 120.0,
          fmt("worst rel. |dx| %.2e (bound 1e-4), worst |y-Ax|/eps %.8f (bound 1.0001), %.2f s", worst, worst_feas,
              s)};
}

// 4

Outcome cg_direct()
{
  auto const t0 = Clock::now();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> spectrum(1.0, 11.0);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Eigen::MatrixXd G(16, 16);
    for (long i = 0; i < G.size(); ++i) {
      G.data()[i] = random_tensor({1}, rng)[0];
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd const Q = qr.householderQ();
    Eigen::VectorXd d(16);
    for (long i = 0; i < 16; ++i) {
      d(i) = spectrum(rng);
    }
    Eigen::MatrixXd const S = Q * d.asDiagonal() * Q.transpose();
    Tensor const b = random_tensor({16}, rng);
    auto op = [&](const Tensor &v) { return tensor(S * vec(v), {16}); };
    Tensor const x = conjugate_gradient(op, b, Tensor({16}), 16);
    Eigen::VectorXd const ref = S.ldlt().solve(vec(b));
    worst = std::max(worst, (vec(x) - ref).norm() / ref.norm());
  }
  double const s = seconds_since(t0);
  return {worst <= 1e-8 && s < 1.0, fmt("worst rel. error %.2e over 20 systems (bound 1e-8), %.3f s", worst, s)};
}

// 5

Outcome noise_calibration()
{
  auto const t0 = Clock::now();
  double power = 0.0;
  double norm_sum = 0.0;
  double eps_sum = 0.0;
  std::size_t M = 0;
  double const sigma = 0.02;
  int const count = 12;
  for (int k = 0; k < count; ++k) {
    Problem const p = random_problem(32, 4, 4.0, sigma, 500 + 10 * k);
    SenseOp const op = p.meas.op();
    Tensor const v = sub(p.meas.y, op.forward(*p.truth));
    double const e2 = sum_squares(v).item();
    power += e2;
    norm_sum += std::sqrt(e2);
    eps_sum += p.meas.epsilon;
    M += op.measurement_count();
  }
  double const ratio = power / static_cast<double>(M) / (sigma * sigma);
  double const s = seconds_since(t0);
  return {M >= 10000 && std::abs(ratio - 1.0) <= 0.05 && s < 5.0,
          fmt("E|v|^2/M = %.4f sigma^2 over M=%zu (bound +-5%%), mean |v| / eps = %.4f, %.2f s", ratio, M,
              norm_sum / eps_sum, s)};
}

// 6-8: desk-scale training

struct Trained
{
  UnrolledModel model;
  std::vector<double> loss;
  std::vector<double> val_nrmse;
  double seconds = 0.0;
};

Trained train_model(const Dataset &ds, std::span<const Problem> train_set, TrainConfig cfg, const char *label)
{
  auto const t0 = Clock::now();
  Trainer tr(cfg, train_set);
  Trained out;
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochMetrics const m = tr.run_epoch();
    double const v = mean(evaluate_model(tr.state().model, ds.val(), cfg.counts.n1));
    out.loss.push_back(m.mean_loss);
    out.val_nrmse.push_back(v);
    std::printf("  %-16s epoch %2d  loss %.4e  val nrmse %.4f  (%.0f s)\n", label, m.epoch, m.mean_loss, v,
                seconds_since(t0));
    std::fflush(stdout);
  }
  out.model = tr.state().model;
  out.seconds = seconds_since(t0);
  return out;
}

double delta_std(const std::vector<double> &v, std::size_t from)
{
  std::vector<double> d;
  for (std::size_t i = std::max<std::size_t>(from, 1); i < v.size(); ++i) {
    d.push_back(v[i] - v[i - 1]);
  }
  if (d.size() < 2) {
    return 0.0;
  }
  double const m = mean(d);
  double acc = 0.0;
  for (double x : d) {
    acc += (x - m) * (x - m);
  }
  return std::sqrt(acc / static_cast<double>(d.size() - 1));
}

double method_mean(const std::vector<ResultRow> &summary, const std::string &method, int n1)
{
  for (auto const &r : summary) {
    if (r.method == method && r.n1 == n1) {
      return r.nrmse;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

struct DeskResults
{
  Outcome c6, c7, c8, c10_training;
};

DeskResults desk_scale(const Options &o)
{
  DeskResults res;
  DatasetConfig cfg = DatasetConfig::desk();
  cfg.seed = o.seed;
  Dataset const ds = generate_dataset(cfg);
  Dataset stripped = ds;
  stripped.strip_truth();

  double zf = 0.0;
  for (auto const &p : ds.test()) {
    zf += nrmse(zero_filled(p.meas), *p.truth);
  }
  zf /= static_cast<double>(ds.test().size());
  std::printf("  desk dataset: %zu/%zu/%zu problems, zero-filled test NRMSE %.4f\n", ds.train().size(),
              ds.val().size(), ds.test().size(), zf);

  TrainConfig base;
  base.seed = o.seed;
  base.deterministic = true;

  TrainConfig sup = base;
  sup.mode = TrainMode::Supervised;
  sup.epochs = o.sup_epochs;
  sup.warm_start = o.sup_warm;
  Trained const s = train_model(ds, ds.train(), sup, "supervised");
  // the other (z, u) policy, swept for the record
  TrainConfig alt = sup;
  alt.warm_start = !sup.warm_start;
  Trained const a = train_model(ds, ds.train(), alt, sup.warm_start ? "supervised-cold" : "supervised-warm");

  TrainConfig uns = base;
  uns.mode = TrainMode::Unsupervised;
  uns.epochs = o.unsup_epochs;
  uns.learning_rate = o.unsup_lr;
  uns.batch_size = o.unsup_batch;
  uns.init_output_scale = o.unsup_init_scale;
  bool purity = !stripped.has_truth();
  Trained u;
  try {
    u = train_model(ds, stripped.train(), uns, "unsupervised");
  } catch (const std::exception &e) {
    purity = false;
    res.c10_training.detail = std::string("unsupervised training on stripped data failed: ") + e.what();
  }
  if (purity) {
    res.c10_training = {true, fmt("desk unsupervised run trained on %zu truth-free problems", stripped.train().size())};
  }

  TrainConfig modl = base;
  modl.mode = TrainMode::Modl;
  modl.epochs = o.modl_epochs;
  Trained const m = train_model(ds, ds.train(), modl, "modl");

  fs::create_directories(o.work);
  {
    std::ofstream os(o.work / "curves.csv");
    os << "epoch,method,mean_loss,val_nrmse\n";
    for (const Trained *t : {&s, static_cast<const Trained *>(&u), &m}) {
      char const *name = t == &s ? "dbp_supervised" : t == &u ? "dbp_unsupervised" : "modl";
      for (std::size_t e = 0; e < t->loss.size(); ++e) {
        os << e + 1 << ',' << name << ',' << fmt("%.17g,%.17g", t->loss[e], t->val_nrmse[e]) << '\n';
      }
    }
  }

  int const n1 = sup.counts.n1;
  double const sup_test = mean(evaluate_model(s.model, ds.test(), n1));
  double const uns_test = purity ? mean(evaluate_model(u.model, ds.test(), n1)) : 1e300;
  double const sup_gain = 1.0 - sup_test / zf;
  double const uns_gain = 1.0 - uns_test / zf;
  double const train_s = s.seconds + u.seconds;
  res.c6 = {sup_gain >= 0.30 && uns_gain >= 0.15 && train_s < 1800.0,
            fmt("zero-filled %.4f; supervised %.4f (%.1f%% below, need 30%%); unsupervised %.4f (%.1f%% below, need "
                "15%%); %d+%d epochs in %.0f s",
                zf, sup_test, 100 * sup_gain, uns_test, 100 * uns_gain, o.sup_epochs, o.unsup_epochs, train_s)};

  CompareInputs in;
  in.models.emplace("dbp_supervised", s.model);
  if (purity) {
    in.models.emplace("dbp_unsupervised", u.model);
  }
  in.models.emplace("modl", m.model);
  CompareOutput const cmp = compare_methods(ds, in);
  write_results_csv(o.work / "results.csv", cmp.rows);
  auto const summary = summarize(cmp.rows);
  for (auto const &r : summary) {
    std::printf("  %-18s n1=%-3d mean test NRMSE %.4f\n", r.method.c_str(), r.n1, r.nrmse);
  }
  double const l1 = method_mean(summary, "l1_haar", 0);
  int const sb = cmp.sweeps.at("dbp_supervised").best_n1;
  double const sup_best = method_mean(summary, "dbp_supervised", sb);
  double uns_best = 1e300;
  int ub = 0;
  if (purity) {
    ub = cmp.sweeps.at("dbp_unsupervised").best_n1;
    uns_best = method_mean(summary, "dbp_unsupervised", ub);
  }
  res.c7 = {ds.test().size() >= 25 && sup_best <= uns_best && uns_best <= l1,
            fmt("supervised %.4f (n1=%d) <= unsupervised %.4f (n1=%d) <= l1-Haar %.4f (tau %g), %zu test problems",
                sup_best, sb, uns_best, ub, l1, cmp.tau, ds.test().size())};

  std::vector<int> sweep_n1;
  for (int k = 3; k <= 14; ++k) {
    sweep_n1.push_back(k);
  }
  auto ratio = [&](const UnrolledModel &model) {
    SweepResult const sw = sweep_unrolls(model, ds.test(), sweep_n1);
    double lo = 1e300;
    double hi = 0.0;
    for (auto const &r : sw.rows) {
      lo = std::min(lo, r.mean_nrmse);
      hi = std::max(hi, r.mean_nrmse);
    }
    return std::pair{hi / lo, sw};
  };
  auto const [dbp_ratio, dbp_sweep] = ratio(s.model);
  auto const [modl_ratio, modl_sweep] = ratio(m.model);
  auto const [alt_ratio, alt_sweep] = ratio(a.model);
  auto const [uns_ratio, uns_sweep] = purity ? ratio(u.model) : std::pair{0.0, SweepResult{}};
  {
    std::ofstream os(o.work / "sweep.csv");
    char const *alt_name = sup.warm_start ? "dbp_supervised_cold" : "dbp_supervised_warm";
    os << "n1,dbp_supervised,modl," << alt_name << ",dbp_unsupervised\n";
    for (std::size_t k = 0; k < dbp_sweep.rows.size(); ++k) {
      double const un = purity ? uns_sweep.rows[k].mean_nrmse : std::numeric_limits<double>::quiet_NaN();
      os << dbp_sweep.rows[k].n1 << ','
         << fmt("%.17g,%.17g,%.17g,%.17g", dbp_sweep.rows[k].mean_nrmse, modl_sweep.rows[k].mean_nrmse,
                alt_sweep.rows[k].mean_nrmse, un)
         << '\n';
    }
  }
  std::printf("  INFO sweep max/min: supervised %s-start %.3f, supervised %s-start %.3f, unsupervised %.3f\n",
              sup.warm_start ? "warm" : "cold", dbp_ratio, sup.warm_start ? "cold" : "warm", alt_ratio, uns_ratio);
  res.c8 = {dbp_ratio <= 1.5, fmt("supervised DBP max/min mean NRMSE over n1=3..14: %.3f (bound 1.5); MoDL %.3f (recorded only)",
                                  dbp_ratio, modl_ratio)};

  if (purity) {
    std::printf("  INFO epoch-to-epoch val NRMSE delta std (epochs 5+): supervised %.2e, unsupervised %.2e\n",
                delta_std(s.val_nrmse, 4), delta_std(u.val_nrmse, 4));
  }
  return res;
}

// 9-10: through the command-line tool

int run(const std::string &cmd)
{
  std::string const full = cmd + " > /dev/null 2>&1";
  int const rc = std::system(full.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path &p)
{
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string q(const fs::path &p)
{
  return "'" + p.string() + "'";
}

Outcome determinism(const Options &o)
{
  auto const t0 = Clock::now();
  std::string const cli = q(o.cli);
  std::vector<std::string> metrics;
  std::vector<std::string> results;
  for (char const *tag : {"a", "b"}) {
    fs::path const dir = o.work / "determinism" / tag;
    fs::remove_all(dir);
    int rc = run(cli + " gen-data --deterministic --seed 7 --count 30 --size 16 16 --calib 4 --coils 3 --out " +
                 q(dir / "data"));
    rc = rc ? rc
            : run(cli + " train --deterministic --seed 7 --epochs 2 --widths 8 16 --mode supervised --data " +
                  q(dir / "data") + " --out " + q(dir / "train"));
    rc = rc ? rc
            : run(cli + " eval --deterministic --ckpt " + q(dir / "train" / "final") + " --data " + q(dir / "data") +
                  " --out " + q(dir / "eval"));
    if (rc != 0) {
      return {false, fmt("pipeline run %s exited with %d", tag, rc)};
    }
    metrics.push_back(slurp(dir / "train" / "metrics.csv"));
    results.push_back(slurp(dir / "eval" / "results.csv"));
  }
  auto const rows = std::count(metrics[0].begin(), metrics[0].end(), '\n') - 1;
  bool const same = metrics[0] == metrics[1] && results[0] == results[1];
  return {same && rows == 2, fmt("metrics.csv %s (%zu bytes, %ld epoch rows), results.csv %s, %.1f s",
                                 metrics[0] == metrics[1] ? "identical" : "DIFFERS", metrics[0].size(), long(rows),
                                 results[0] == results[1] ? "identical" : "DIFFERS", seconds_since(t0))};
}

Outcome purity_cli(const Options &o)
{
  std::string const cli = q(o.cli);
  fs::path const dir = o.work / "purity";
  fs::remove_all(dir);
  int rc = run(cli + " gen-data --no-truth --seed 3 --count 20 --size 16 16 --calib 4 --out " + q(dir / "data"));
  if (rc != 0) {
    return {false, fmt("gen-data exited with %d", rc)};
  }
  std::size_t truths = 0;
  for (auto const &e : fs::recursive_directory_iterator(dir / "data")) {
    truths += e.path().filename() == "truth.dbpt";
  }
  rc = run(cli + " train --mode unsupervised --epochs 2 --widths 8 16 --data " + q(dir / "data") + " --out " +
           q(dir / "train"));
  std::string const csv = slurp(dir / "train" / "metrics.csv");
  auto const rows = std::count(csv.begin(), csv.end(), '\n') - 1;
  int const sup = run(cli + " train --mode supervised --epochs 1 --data " + q(dir / "data") + " --out " +
                      q(dir / "sup"));
  return {truths == 0 && rc == 0 && rows == 2 && sup == 3,
          fmt("%zu truth files, unsupervised exit %d with %ld epoch rows, supervised exit %d (expects 3)", truths, rc,
              long(rows), sup)};
}

} // namespace

int main(int argc, char **argv)
{
  Options o;
#ifdef DBP_CLI_PATH
  o.cli = DBP_CLI_PATH;
#endif
  CLI::App app{"Acceptance criteria 1-10; one PASS/FAIL line per criterion"};
  app.add_option("--work", o.work, "Scratch directory")->capture_default_str();
  app.add_option("--cli", o.cli, "Path to the dbp executable")->capture_default_str();
  app.add_option("--only", o.only, "Run only these criteria");
  app.add_option("--sup-epochs", o.sup_epochs)->capture_default_str();
  app.add_option("--unsup-epochs", o.unsup_epochs)->capture_default_str();
  app.add_option("--modl-epochs", o.modl_epochs)->capture_default_str();
  app.add_option("--unsup-lr", o.unsup_lr)->capture_default_str();
  app.add_option("--unsup-batch", o.unsup_batch)->capture_default_str();
  app.add_flag("--sup-warm", o.sup_warm, "Warm-start (z, u) in the supervised DBP run");
  app.add_option("--unsup-init-scale", o.unsup_init_scale, "Output-layer init scale of the unsupervised run")
    ->capture_default_str();
  app.add_option("--seed", o.seed, "Desk dataset and training seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(o.work);

  auto want = [&](int c) { return o.only.empty() || o.only.count(c) > 0; };
  std::map<int, Outcome> out;
  std::map<int, std::string> names{{1, "adjoint dot-test"},
                                   {2, "gradient integrity"},
                                   {3, "ADMM matches convex oracle"},
                                   {4, "CG matches direct solve"},
                                   {5, "noise / epsilon calibration"},
                                   {6, "training effectiveness"},
                                   {7, "method ordering"},
                                   {8, "unroll stability"},
                                   {9, "determinism"},
                                   {10, "unsupervised purity"}};
  auto report = [&](int c, Outcome r) {
    std::printf("%s %d %s: %s\n", r.pass ? "PASS" : "FAIL", c, names[c].c_str(), r.detail.c_str());
    std::fflush(stdout);
    out[c] = std::move(r);
  };
  auto guarded = [&](int c, auto fn) {
    if (!want(c)) {
      return;
    }
    try {
      report(c, fn());
    } catch (const std::exception &e) {
      report(c, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, adjoint_dot_test);
  guarded(2, gradient_integrity);
  guarded(3, admm_oracle);
  guarded(4, cg_direct);
  guarded(5, noise_calibration);
  std::optional<Outcome> c10_training;
  if (want(6) || want(7) || want(8) || want(10)) {
    DeskResults d;
    try {
      d = desk_scale(o);
    } catch (const std::exception &e) {
      Outcome const bad{false, std::string("exception: ") + e.what()};
      d = {bad, bad, bad, bad};
    }
    for (auto [c, r] : {std::pair{6, d.c6}, std::pair{7, d.c7}, std::pair{8, d.c8}}) {
      if (want(c)) {
        report(c, r);
      }
    }
    c10_training = d.c10_training;
  }
  guarded(9, [&] { return determinism(o); });
  guarded(10, [&] {
    Outcome const cli = purity_cli(o);
    return Outcome{cli.pass && c10_training->pass, c10_training->detail + "; " + cli.detail};
  });

  int failed = 0;
  for (auto const &[c, r] : out) {
    failed += !r.pass;
  }
  std::printf("%zu criteria run, %d failed\n", out.size(), failed);
  return failed == 0 ? 0 : 1;
}
