#include "dbp/recon.hpp"

#include "dbp/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace dbp {

double epsilon_from_sigma(double sigma, std::size_t measurements)
{
  if (sigma < 0.0) {
    throw std::invalid_argument("epsilon_from_sigma: negative sigma");
  }
  return sigma * std::sqrt(static_cast<double>(measurements));
}

Tensor conjugate_gradient(const SpdAction &op, const Tensor &b, const Tensor &x0, int iters, CgMode mode)
{
  if (b.shape() != x0.shape()) {
    throw std::invalid_argument("conjugate_gradient: b " + shape_string(b.shape()) + " and x0 " +
                                shape_string(x0.shape()) + " differ");
  }
  double const stop = 1e-9 * norm2(b);
  Tensor x = x0;
  Tensor r = sub(b, op(x0));
  Tensor p = r;
  Tensor rr = sum_squares(r);
  for (int k = 0; k < iters; ++k) {
    if (rr.item() == 0.0) {
      break;
    }
    Tensor const ap = op(p);
    Tensor const pap = dot(p, ap);
    if (!(pap.item() > 0.0)) {
      break;
    }
    Tensor const alpha = div(rr, pap);
    x = add(x, scale(p, alpha));
    r = sub(r, scale(ap, alpha));
    Tensor const rr_next = sum_squares(r);
    if (mode == CgMode::EarlyExit && std::sqrt(rr_next.item()) < stop) {
      break;
    }
    p = add(r, scale(p, div(rr_next, rr)));
    rr = rr_next;
  }
  return x;
}

UnrolledModel UnrolledModel::create(ModelKind kind, const UNetArch &arch, std::uint64_t seed, UnrollCounts counts,
                                    double penalty)
{
  if (!(penalty > 0.0)) {
    throw std::invalid_argument("UnrolledModel: penalty must be positive");
  }
  UnrolledModel m;
  m.kind = kind;
  m.weights = init_weights(arch, seed);
  m.log_penalty = Tensor::parameter({}, {std::log(penalty)});
  m.counts = counts;
  return m;
}

double UnrolledModel::penalty() const
{
  return std::exp(log_penalty.item());
}

std::vector<Tensor> UnrolledModel::parameters() const
{
  auto p = weights.parameters();
  p.push_back(log_penalty);
  return p;
}

DCState initial_state(const Measurements &meas, const SenseOp &op)
{
  Tensor x = op.adjoint(meas.y);
  Tensor z = op.forward(x);
  return {x, z, Tensor::zeros(meas.y.shape())};
}

DCState dc_layer(const Tensor &r, const Measurements &meas, const SenseOp &op, const Tensor &rho, DCState state,
                 const DcSettings &settings)
{
  auto const gram = [&](const Tensor &v) { return op.gram_plus_identity(v, rho); };
  for (int l = 0; l < settings.n2; ++l) {
    Tensor const rhs = add(scale(op.adjoint(sub(state.z, state.u)), rho), r);
    state.x = conjugate_gradient(gram, rhs, state.x, settings.n3, settings.cg);
    Tensor const ax = op.forward(state.x);
    Tensor const axu = add(ax, state.u);
    state.z = add(meas.y, l2proj(sub(axu, meas.y), meas.epsilon));
    state.u = settings.dual == DualUpdate::Standard ? sub(axu, state.z) : add(axu, state.z);
  }
  return state;
}

namespace {

int unrolls(const UnrolledModel &model, const ForwardOptions &opts)
{
  int const n1 = opts.n1.value_or(model.counts.n1);
  if (n1 < 0) {
    throw std::invalid_argument("forward: negative unroll count");
  }
  return n1;
}

void check_shapes(const Measurements &meas)
{
  if (meas.y.shape() != meas.sens.shape()) {
    throw std::invalid_argument("forward: measurements " + shape_string(meas.y.shape()) +
                                " do not match sensitivities " + shape_string(meas.sens.shape()));
  }
}

} // namespace

Tensor dbp_forward(const Measurements &meas, const UnrolledModel &model, const ForwardOptions &opts)
{
  check_shapes(meas);
  SenseOp const op = meas.op();
  Tensor const rho = exp(model.log_penalty);
  DcSettings const dc{model.counts.n2, model.counts.n3, opts.cg, model.dual};
  DCState state = initial_state(meas, op);
  int const n1 = unrolls(model, opts);
  for (int k = 0; k < n1; ++k) {
    Tensor const r = denoise(state.x, model.weights);
    if (!model.warm_start) {
      state.z = op.forward(state.x);
      state.u = Tensor::zeros(meas.y.shape());
    }
    state = dc_layer(r, meas, op, rho, state, dc);
  }
  return state.x;
}

Tensor modl_forward(const Measurements &meas, const UnrolledModel &model, const ForwardOptions &opts)
{
  check_shapes(meas);
  SenseOp const op = meas.op();
  Tensor const lambda = exp(model.log_penalty);
  Tensor const aty = op.adjoint(meas.y);
  auto const system = [&](const Tensor &v) { return add(op.normal(v), scale(v, lambda)); };
  Tensor x = aty;
  int const n1 = unrolls(model, opts);
  for (int k = 0; k < n1; ++k) {
    Tensor const r = denoise(x, model.weights);
    x = conjugate_gradient(system, add(aty, scale(r, lambda)), x, model.counts.n3, opts.cg);
  }
  return x;
}

Tensor reconstruct(const Measurements &meas, const UnrolledModel &model, const ForwardOptions &opts)
{
  return model.kind == ModelKind::Dbp ? dbp_forward(meas, model, opts) : modl_forward(meas, model, opts);
}

Tensor zero_filled(const Measurements &meas)
{
  return meas.op().adjoint(meas.y);
}

// Haar

namespace {

void check_haar(const Tensor &x, int levels)
{
  if (x.rank() != 3 || x.dim(2) != 2 || levels < 0) {
    throw std::invalid_argument("haar: expected (H,W,2), got " + shape_string(x.shape()));
  }
  std::size_t const d = std::size_t{1} << levels;
  if (x.dim(0) % d != 0 || x.dim(1) % d != 0) {
    throw std::invalid_argument("haar: " + shape_string(x.shape()) + " not divisible by 2^" +
                                std::to_string(levels));
  }
}

// One orthonormal Haar step over the first n entries of a strided line of
// complex pairs: averages to the front half, details to the back half.
void haar_line(double *line, std::size_t n, std::size_t stride, bool inverse, std::vector<double> &buf)
{
  double const s = 1.0 / std::sqrt(2.0);
  std::size_t const h = n / 2;
  buf.resize(2 * n);
  for (std::size_t k = 0; k < h; ++k) {
    for (int c = 0; c < 2; ++c) {
      if (!inverse) {
        double const a = line[(2 * k) * stride + c];
        double const b = line[(2 * k + 1) * stride + c];
        buf[2 * k + c] = s * (a + b);
        buf[2 * (h + k) + c] = s * (a - b);
      } else {
        double const a = line[k * stride + c];
        double const d = line[(h + k) * stride + c];
        buf[2 * (2 * k) + c] = s * (a + d);
        buf[2 * (2 * k + 1) + c] = s * (a - d);
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    line[k * stride] = buf[2 * k];
    line[k * stride + 1] = buf[2 * k + 1];
  }
}

void haar_level(std::vector<double> &d, std::size_t W, std::size_t h, std::size_t w, bool inverse)
{
  std::vector<double> buf;
  auto rows = [&] {
    for (std::size_t i = 0; i < h; ++i) {
      haar_line(d.data() + 2 * i * W, w, 2, inverse, buf);
    }
  };
  auto cols = [&] {
    for (std::size_t j = 0; j < w; ++j) {
      haar_line(d.data() + 2 * j, h, 2 * W, inverse, buf);
    }
  };
  if (!inverse) {
    rows();
    cols();
  } else {
    cols();
    rows();
  }
}

} // namespace

Tensor haar_forward(const Tensor &x, int levels)
{
  check_haar(x, levels);
  std::size_t const H = x.dim(0);
  std::size_t const W = x.dim(1);
  std::vector<double> d(x.data().begin(), x.data().end());
  for (int l = 0; l < levels; ++l) {
    haar_level(d, W, H >> l, W >> l, false);
  }
  return Tensor(x.shape(), std::move(d));
}

Tensor haar_inverse(const Tensor &c, int levels)
{
  check_haar(c, levels);
  std::size_t const H = c.dim(0);
  std::size_t const W = c.dim(1);
  std::vector<double> d(c.data().begin(), c.data().end());
  for (int l = levels; l-- > 0;) {
    haar_level(d, W, H >> l, W >> l, true);
  }
  return Tensor(c.shape(), std::move(d));
}

double soft_threshold(double v, double tau)
{
  double const m = std::abs(v) - tau;
  return m > 0.0 ? std::copysign(m, v) : 0.0;
}

Tensor soft_threshold_wavelet(const Tensor &c, int levels, double tau)
{
  check_haar(c, levels);
  std::size_t const H = c.dim(0);
  std::size_t const W = c.dim(1);
  std::size_t const h = H >> levels;
  std::size_t const w = W >> levels;
  Tensor out = c.clone();
  out.set_trainable(false);
  if (tau <= 0.0) {
    return out;
  }
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      if (i < h && j < w) {
        continue;
      }
      std::size_t const p = 2 * (i * W + j);
      double const mag = std::hypot(o[p], o[p + 1]);
      double const f = mag > tau ? (mag - tau) / mag : 0.0;
      o[p] *= f;
      o[p + 1] *= f;
    }
  }
  return out;
}

Tensor l1_wavelet_bp(const Measurements &meas, const L1WaveletSettings &settings)
{
  check_shapes(meas);
  check_haar(Tensor(Shape{meas.height(), meas.width(), 2}), settings.levels);
  SenseOp const op = meas.op();
  Tensor const rho = Tensor::scalar(settings.rho);
  DcSettings const dc{settings.n2, settings.n3, CgMode::Fixed, DualUpdate::Standard};
  DCState state = initial_state(meas, op);
  for (int it = 0; it < settings.iters; ++it) {
    Tensor const r =
      haar_inverse(soft_threshold_wavelet(haar_forward(state.x, settings.levels), settings.levels, settings.tau),
                   settings.levels);
    state = dc_layer(r, meas, op, rho, state, dc);
  }
  return state.x;
}

} // namespace dbp
