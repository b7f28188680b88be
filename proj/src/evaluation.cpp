#include "dbp/evaluation.hpp"

#include "dbp/errors.hpp"
#include "dbp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dbp {

double nrmse(const Tensor &x_hat, const Tensor &truth, bool magnitude)
{
  if (x_hat.shape() != truth.shape()) {
    throw std::invalid_argument("nrmse: shape mismatch " + shape_string(x_hat.shape()) + " vs " +
                                shape_string(truth.shape()));
  }
  auto a = x_hat.data();
  auto b = truth.data();
  double num = 0.0;
  double den = 0.0;
  if (magnitude) {
    if (a.size() % 2 != 0) {
      throw std::invalid_argument("nrmse: magnitude mode needs complex pairs");
    }
    for (std::size_t i = 0; i < a.size(); i += 2) {
      double const ma = std::hypot(a[i], a[i + 1]);
      double const mb = std::hypot(b[i], b[i + 1]);
      num += (ma - mb) * (ma - mb);
      den += mb * mb;
    }
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) {
      num += (a[i] - b[i]) * (a[i] - b[i]);
      den += b[i] * b[i];
    }
  }
  if (den == 0.0) {
    throw std::invalid_argument("nrmse: reference has zero norm");
  }
  return std::sqrt(num / den);
}

double mean(const std::vector<double> &v)
{
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

std::vector<double> evaluate_model(const UnrolledModel &model, std::span<const Problem> problems, int n1)
{
  for (auto const &p : problems) {
    if (!p.truth) {
      throw DataError("evaluate: problem without ground truth");
    }
  }
  std::vector<double> out(problems.size());
  long const n = static_cast<long>(problems.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    auto const &p = problems[i];
    ForwardOptions opts;
    opts.n1 = n1;
    Tensor const x = reconstruct(p.meas, model, opts);
    out[i] = x.all_finite() ? nrmse(x, *p.truth) : std::numeric_limits<double>::quiet_NaN();
  }
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw NumericError("evaluate: non-finite reconstruction");
    }
  }
  return out;
}

SweepResult sweep_unrolls(const UnrolledModel &model, std::span<const Problem> problems, const std::vector<int> &n1_list)
{
  SweepResult r;
  double best = std::numeric_limits<double>::infinity();
  for (int n1 : n1_list) {
    double const m = mean(evaluate_model(model, problems, n1));
    r.rows.push_back({n1, m});
    if (m < best) {
      best = m;
      r.best_n1 = n1;
    }
  }
  return r;
}

void write_results_csv(const std::filesystem::path &path, const std::vector<ResultRow> &rows)
{
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw DataError("cannot write " + path.string());
  }
  os << "problem_id,method,n1,nrmse\n";
  char line[256];
  for (auto const &r : rows) {
    std::snprintf(line, sizeof line, "%zu,%s,%d,%.17g\n", r.problem_id, r.method.c_str(), r.n1, r.nrmse);
    os << line;
  }
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path &path)
{
  std::ifstream is(path);
  if (!is) {
    throw DataError("cannot open " + path.string());
  }
  std::vector<ResultRow> rows;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string id, method, n1, v;
    if (!std::getline(ls, id, ',') || !std::getline(ls, method, ',') || !std::getline(ls, n1, ',') ||
        !std::getline(ls, v)) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
    rows.push_back({std::stoul(id), method, std::stoi(n1), std::stod(v)});
  }
  return rows;
}

std::vector<double> default_tau_grid()
{
  return {0.0, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02};
}

namespace {

std::vector<double> evaluate_l1(std::span<const Problem> problems, const L1WaveletSettings &settings)
{
  for (auto const &p : problems) {
    if (!p.truth) {
      throw DataError("l1 baseline: problem without ground truth");
    }
  }
  std::vector<double> out(problems.size());
  long const n = static_cast<long>(problems.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    out[i] = nrmse(l1_wavelet_bp(problems[i].meas, settings), *problems[i].truth);
  }
  return out;
}

} // namespace

double tune_l1_tau(std::span<const Problem> val, const std::vector<double> &candidates, L1WaveletSettings settings)
{
  if (candidates.empty()) {
    throw std::invalid_argument("tune_l1_tau: no candidates");
  }
  double best_tau = candidates.front();
  double best = std::numeric_limits<double>::infinity();
  for (double tau : candidates) {
    settings.tau = tau;
    double const m = mean(evaluate_l1(val, settings));
    if (m < best) {
      best = m;
      best_tau = tau;
    }
  }
  return best_tau;
}

CompareOutput compare_methods(const Dataset &ds, const CompareInputs &in)
{
  CompareOutput out;
  auto const test = ds.test();
  std::size_t const base = ds.manifest.split.train + ds.manifest.split.val;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].truth) {
      throw DataError("compare: test problems need ground truth");
    }
    out.rows.push_back({base + i, "zero_filled", 0, nrmse(zero_filled(test[i].meas), *test[i].truth)});
  }

  L1WaveletSettings l1 = in.l1;
  if (in.tune_tau && !ds.val().empty()) {
    l1.tau = tune_l1_tau(ds.val(), default_tau_grid(), l1);
  }
  out.tau = l1.tau;
  auto const l1_scores = evaluate_l1(test, l1);
  for (std::size_t i = 0; i < test.size(); ++i) {
    out.rows.push_back({base + i, "l1_haar", 0, l1_scores[i]});
  }

  for (auto const &[name, model] : in.models) {
    int best = model.counts.n1;
    if (!ds.val().empty() && !in.n1_sweep.empty()) {
      auto sweep = sweep_unrolls(model, ds.val(), in.n1_sweep);
      best = sweep.best_n1;
      out.sweeps.emplace(name, std::move(sweep));
    }
    std::vector<int> n1s{model.counts.n1};
    if (best != model.counts.n1) {
      n1s.push_back(best);
    }
    for (int n1 : n1s) {
      auto const scores = evaluate_model(model, test, n1);
      for (std::size_t i = 0; i < test.size(); ++i) {
        out.rows.push_back({base + i, name, n1, scores[i]});
      }
    }
  }
  return out;
}

std::vector<ResultRow> summarize(const std::vector<ResultRow> &rows)
{
  std::vector<ResultRow> out;
  std::vector<std::size_t> counts;
  for (auto const &r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ResultRow &o) { return o.method == r.method && o.n1 == r.n1; });
    if (it == out.end()) {
      out.push_back({0, r.method, r.n1, 0.0});
      counts.push_back(0);
      it = out.end() - 1;
    }
    std::size_t const k = static_cast<std::size_t>(it - out.begin());
    it->nrmse += r.nrmse;
    ++counts[k];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].problem_id = counts[k];
    out[k].nrmse /= static_cast<double>(counts[k]);
  }
  return out;
}

// PGM

void write_pgm(const std::filesystem::path &path, std::size_t width, std::size_t height,
               const std::vector<double> &values)
{
  if (values.size() != width * height) {
    throw std::invalid_argument("write_pgm: value count does not match extents");
  }
  double peak = 0.0;
  for (double v : values) {
    peak = std::max(peak, v);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw DataError("cannot write " + path.string());
  }
  os << "P5\n" << width << ' ' << height << "\n65535\n";
  std::vector<unsigned char> buf(2 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double const s = peak > 0.0 ? std::clamp(values[i] / peak, 0.0, 1.0) : 0.0;
    auto const q = static_cast<std::uint16_t>(std::lround(s * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(q >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  os.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) {
    throw DataError("write failed for " + path.string());
  }
}

namespace {

std::vector<double> magnitude(const Tensor &x)
{
  if (x.rank() != 3 || x.dim(2) != 2) {
    throw std::invalid_argument("export: expected (H,W,2), got " + shape_string(x.shape()));
  }
  std::vector<double> m(x.dim(0) * x.dim(1));
  auto d = x.data();
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = std::hypot(d[2 * i], d[2 * i + 1]);
  }
  return m;
}

} // namespace

void export_image(const Tensor &x, const std::filesystem::path &path)
{
  write_pgm(path, x.dim(1), x.dim(0), magnitude(x));
}

void export_error_map(const Tensor &x, const Tensor &truth, const std::filesystem::path &path)
{
  if (x.shape() != truth.shape()) {
    throw std::invalid_argument("export_error_map: shape mismatch");
  }
  write_pgm(path, x.dim(1), x.dim(0), magnitude(sub(x, truth)));
}

PgmImage read_pgm(const std::filesystem::path &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open " + path.string());
  }
  std::string magic;
  PgmImage img;
  is >> magic >> img.width >> img.height >> img.maxval;
  if (!is || magic != "P5" || img.maxval <= 0 || img.maxval > 65535) {
    throw DataError(path.string() + ": not a binary PGM");
  }
  is.get();
  std::size_t const n = img.width * img.height;
  img.pixels.resize(n);
  if (img.maxval < 256) {
    for (auto &p : img.pixels) {
      int const c = is.get();
      if (c == EOF) {
        throw DataError(path.string() + ": truncated");
      }
      p = static_cast<std::uint16_t>(c);
    }
  } else {
    std::vector<unsigned char> buf(2 * n);
    is.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
      throw DataError(path.string() + ": truncated");
    }
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
  }
  return img;
}

} // namespace dbp
