#include "dbp/data.hpp"

#include "dbp/container.hpp"
#include "dbp/errors.hpp"
#include "dbp/recon.hpp"
#include "dbp/sampling.hpp"

#include <json.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dbp {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor make_phantom(std::size_t H, std::size_t W, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };

  std::vector<std::complex<double>> img(H * W);
  int const count = 3 + static_cast<int>(rng() % 6);
  for (int e = 0; e < count; ++e) {
    // The first ellipse is the object body; the rest are structures inside it.
    bool const body = e == 0;
    double const a = body ? uniform(0.55, 0.8) : uniform(0.08, 0.35);
    double const b = body ? uniform(0.55, 0.8) : uniform(0.08, 0.35);
    double const reach = body ? 0.08 : 0.75 - std::max(a, b);
    double const cy = uniform(-reach, reach);
    double const cx = uniform(-reach, reach);
    double const theta = uniform(0.0, std::numbers::pi);
    double const mag = uniform(0.2, 1.0);
    double const phase = uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
    std::complex<double> const amp = std::polar(mag, phase);
    double const ct = std::cos(theta);
    double const st = std::sin(theta);
    for (std::size_t i = 0; i < H; ++i) {
      double const v = (static_cast<double>(i) - static_cast<double>(H / 2)) / static_cast<double>(H / 2);
      for (std::size_t j = 0; j < W; ++j) {
        double const w = (static_cast<double>(j) - static_cast<double>(W / 2)) / static_cast<double>(W / 2);
        double const p = (v - cy) * ct + (w - cx) * st;
        double const q = -(v - cy) * st + (w - cx) * ct;
        if ((p * p) / (a * a) + (q * q) / (b * b) <= 1.0) {
          img[i * W + j] += amp;
        }
      }
    }
  }

  Tensor out(Shape{H, W, 2});
  auto o = out.mutable_data();
  double peak = 0.0;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      std::complex<double> acc{0.0, 0.0};
      for (long di = -1; di <= 1; ++di) {
        for (long dj = -1; dj <= 1; ++dj) {
          long const a = static_cast<long>(i) + di;
          long const b = static_cast<long>(j) + dj;
          if (a >= 0 && b >= 0 && a < static_cast<long>(H) && b < static_cast<long>(W)) {
            acc += img[a * W + b];
          }
        }
      }
      acc /= 9.0;
      o[2 * (i * W + j)] = acc.real();
      o[2 * (i * W + j) + 1] = acc.imag();
      peak = std::max(peak, std::abs(acc));
    }
  }
  if (peak > 0.0) {
    for (auto &v : o) {
      v /= peak;
    }
  }
  return out;
}

Tensor make_sensitivities(std::size_t C, std::size_t H, std::size_t W, std::uint64_t seed)
{
  if (C == 0) {
    throw std::invalid_argument("make_sensitivities: need at least one coil");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double const side = static_cast<double>(std::min(H, W));
  double const ring = 0.6 * side;
  double const width = 0.5 * side;
  double const offset = u01(rng) * 2.0 * std::numbers::pi / static_cast<double>(C);
  double const max_slope = std::numbers::pi / (2.0 * side);

  Tensor out(Shape{C, H, W, 2});
  auto s = reinterpret_cast<std::complex<double> *>(out.mutable_data().data());
  std::size_t const px = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    double const angle = offset + 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(C);
    double const pi0 = static_cast<double>(H / 2) + ring * std::cos(angle);
    double const pj0 = static_cast<double>(W / 2) + ring * std::sin(angle);
    double const phase0 = (2.0 * u01(rng) - 1.0) * std::numbers::pi;
    double const gy = (2.0 * u01(rng) - 1.0) * max_slope;
    double const gx = (2.0 * u01(rng) - 1.0) * max_slope;
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        double const di = static_cast<double>(i) - pi0;
        double const dj = static_cast<double>(j) - pj0;
        double const mag = std::exp(-(di * di + dj * dj) / (2.0 * width * width));
        double const ph = phase0 + gy * (static_cast<double>(i) - static_cast<double>(H / 2)) +
                          gx * (static_cast<double>(j) - static_cast<double>(W / 2));
        s[c * px + i * W + j] = std::polar(mag, ph);
      }
    }
  }
  for (std::size_t p = 0; p < px; ++p) {
    double energy = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      energy += std::norm(s[c * px + p]);
    }
    double const inv = 1.0 / std::sqrt(energy);
    for (std::size_t c = 0; c < C; ++c) {
      s[c * px + p] *= inv;
    }
  }
  return out;
}

Problem simulate_measurements(const Tensor &truth, const Tensor &sens, const Tensor &mask, double sigma,
                              std::uint64_t seed)
{
  if (sigma < 0.0) {
    throw std::invalid_argument("simulate_measurements: negative sigma");
  }
  SenseOp const op(sens, mask);
  Tensor y = op.forward(truth);
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma / std::sqrt(2.0));
    auto yd = y.mutable_data();
    auto m = mask.data();
    std::size_t const px = mask.size();
    for (std::size_t i = 0; i < yd.size(); i += 2) {
      // Draw for every position so the noise realization does not depend on the mask.
      double const re = noise(rng);
      double const im = noise(rng);
      if (m[(i / 2) % px] != 0.0) {
        yd[i] += re;
        yd[i + 1] += im;
      }
    }
  }
  Problem p;
  p.meas.y = y;
  p.meas.sens = sens;
  p.meas.mask = mask;
  p.meas.sigma = sigma;
  p.meas.epsilon = epsilon_from_sigma(sigma, op.measurement_count());
  p.truth = truth;
  return p;
}

DatasetConfig DatasetConfig::desk()
{
  return DatasetConfig{};
}

DatasetConfig DatasetConfig::paper_scale()
{
  DatasetConfig c;
  c.height = 256;
  c.width = 256;
  c.coils = 8;
  c.sigma = 0.01;
  c.accel = 12.0;
  c.calib = 16;
  c.split = {4384, 548, 548};
  return c;
}

std::span<const Problem> Dataset::train() const
{
  return std::span<const Problem>(problems).subspan(0, manifest.split.train);
}

std::span<const Problem> Dataset::val() const
{
  return std::span<const Problem>(problems).subspan(manifest.split.train, manifest.split.val);
}

std::span<const Problem> Dataset::test() const
{
  return std::span<const Problem>(problems).subspan(manifest.split.train + manifest.split.val, manifest.split.test);
}

bool Dataset::has_truth() const
{
  for (auto const &p : problems) {
    if (!p.truth) {
      return false;
    }
  }
  return !problems.empty();
}

void Dataset::strip_truth()
{
  for (auto &p : problems) {
    p.truth.reset();
  }
}

Dataset generate_dataset(const DatasetConfig &cfg)
{
  std::size_t const count = cfg.split.total();
  Dataset ds;
  ds.manifest.count = count;
  ds.manifest.height = cfg.height;
  ds.manifest.width = cfg.width;
  ds.manifest.coils = cfg.coils;
  ds.manifest.sigma = cfg.sigma;
  ds.manifest.accel = cfg.accel;
  ds.manifest.calib = cfg.calib;
  ds.manifest.split = cfg.split;
  ds.problems.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::uint64_t const s = mix_seed(cfg.seed, n);
    ds.manifest.seeds.push_back(s);
    Tensor truth = make_phantom(cfg.height, cfg.width, mix_seed(s, 1));
    Tensor sens = make_sensitivities(cfg.coils, cfg.height, cfg.width, mix_seed(s, 2));
    Tensor mask = poisson_disc_mask(MaskSpec{cfg.height, cfg.width, cfg.calib, cfg.accel, mix_seed(s, 3)});
    Problem p = simulate_measurements(truth, sens, mask, cfg.sigma, mix_seed(s, 4));
    if (!cfg.with_truth) {
      p.truth.reset();
    }
    ds.problems.push_back(std::move(p));
  }
  return ds;
}

namespace {

std::filesystem::path problem_dir(const std::filesystem::path &dir, std::size_t n)
{
  char name[16];
  std::snprintf(name, sizeof name, "%05zu", n);
  return dir / "problems" / name;
}

} // namespace

void write_dataset(const std::filesystem::path &dir, const Dataset &ds)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir / "problems");
  nlohmann::ordered_json j;
  auto const &m = ds.manifest;
  j["version"] = m.version;
  j["count"] = m.count;
  j["H"] = m.height;
  j["W"] = m.width;
  j["C"] = m.coils;
  j["sigma"] = m.sigma;
  j["accel"] = m.accel;
  j["calib"] = m.calib;
  j["seeds"] = m.seeds;
  j["split"] = {{"train", m.split.train}, {"val", m.split.val}, {"test", m.split.test}};
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) {
      throw DataError("cannot write " + (dir / "manifest.json").string());
    }
    os << j.dump(2) << '\n';
  }
  for (std::size_t n = 0; n < ds.problems.size(); ++n) {
    auto const pd = problem_dir(dir, n);
    fs::create_directories(pd);
    auto const &p = ds.problems[n];
    save_tensor(pd / "y.dbpt", p.meas.y);
    save_tensor(pd / "sens.dbpt", p.meas.sens);
    save_tensor(pd / "mask.dbpt", p.meas.mask);
    if (p.truth) {
      save_tensor(pd / "truth.dbpt", *p.truth);
    } else {
      fs::remove(pd / "truth.dbpt");
    }
  }
}

Dataset read_dataset(const std::filesystem::path &dir)
{
  namespace fs = std::filesystem;
  auto const mpath = dir / "manifest.json";
  std::ifstream is(mpath);
  if (!is) {
    throw DataError("missing dataset manifest " + mpath.string());
  }
  Dataset ds;
  try {
    auto const j = nlohmann::json::parse(is);
    auto &m = ds.manifest;
    m.version = j.at("version").get<int>();
    m.count = j.at("count").get<std::size_t>();
    m.height = j.at("H").get<std::size_t>();
    m.width = j.at("W").get<std::size_t>();
    m.coils = j.at("C").get<std::size_t>();
    m.sigma = j.at("sigma").get<double>();
    m.accel = j.at("accel").get<double>();
    m.calib = j.at("calib").get<std::size_t>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.split.train = j.at("split").at("train").get<std::size_t>();
    m.split.val = j.at("split").at("val").get<std::size_t>();
    m.split.test = j.at("split").at("test").get<std::size_t>();
  } catch (const nlohmann::json::exception &e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  auto const &m = ds.manifest;
  if (m.version != 1) {
    throw DataError(mpath.string() + ": unsupported version " + std::to_string(m.version));
  }
  if (m.split.total() != m.count || m.seeds.size() != m.count) {
    throw DataError(mpath.string() + ": split sizes or seeds do not match count");
  }
  for (std::size_t n = 0; n < m.count; ++n) {
    auto const pd = problem_dir(dir, n);
    Problem p;
    p.meas.y = load_tensor(pd / "y.dbpt");
    p.meas.sens = load_tensor(pd / "sens.dbpt");
    p.meas.mask = load_tensor(pd / "mask.dbpt");
    Shape const kspace{m.coils, m.height, m.width, 2};
    if (p.meas.y.shape() != kspace || p.meas.sens.shape() != kspace ||
        p.meas.mask.shape() != Shape{m.height, m.width}) {
      throw DataError(pd.string() + ": tensor shapes do not match manifest");
    }
    p.meas.sigma = m.sigma;
    try {
      p.meas.epsilon = epsilon_from_sigma(m.sigma, p.meas.op().measurement_count());
    } catch (const std::invalid_argument &e) {
      throw DataError(pd.string() + ": " + e.what());
    }
    if (fs::exists(pd / "truth.dbpt")) {
      p.truth = load_tensor(pd / "truth.dbpt");
      if (p.truth->shape() != Shape{m.height, m.width, 2}) {
        throw DataError(pd.string() + ": truth shape does not match manifest");
      }
    }
    ds.problems.push_back(std::move(p));
  }
  return ds;
}

} // namespace dbp
