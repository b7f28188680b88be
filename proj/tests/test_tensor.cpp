#include "dbp/container.hpp"
#include "dbp/errors.hpp"
#include "dbp/fft.hpp"
#include "dbp/ops.hpp"
#include "dbp/tensor.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dbp;
using dbp::test::central_difference;
using dbp::test::random_parameter;
using dbp::test::random_tensor;
using dbp::test::rel_err;

namespace {

// Checks autodiff against central differences for every entry of every leaf.
void expect_gradients_match(const std::vector<Tensor> &leaves, const std::function<Tensor()> &f,
                            double tol = 1e-4, double h = 1e-5)
{
  Tape tape;
  Gradients g;
  {
    TapeScope scope(tape);
    g = tape.backward(f());
  }
  auto value = [&] { return f().item(); };
  for (auto const &leaf : leaves) {
    Tensor const grad = g(leaf);
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      double const fd = central_difference(leaf, i, value, h);
      if (std::max(std::abs(fd), std::abs(grad[i])) <= 1e-8) {
        continue;
      }
      EXPECT_LT(rel_err(grad[i], fd), tol) << "entry " << i << ": autodiff " << grad[i] << " fd " << fd;
    }
  }
}

} // namespace

TEST(Tensor, ShapeAndData)
{
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  for (double v : t.data()) {
    EXPECT_EQ(v, 0.0);
  }
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  EXPECT_EQ(Tensor::scalar(3.5).item(), 3.5);
  EXPECT_THROW(t.item(), std::invalid_argument);
}

TEST(Tensor, CopiesShareCloneDoesNot)
{
  Tensor a({2}, {1.0, 2.0});
  Tensor b = a;
  Tensor c = a.clone();
  a.mutable_data()[0] = 7.0;
  EXPECT_EQ(b[0], 7.0);
  EXPECT_EQ(c[0], 1.0);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

TEST(Ops, AddExample)
{
  Tensor const r = add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}));
  EXPECT_EQ(r[0], 4.0);
  EXPECT_EQ(r[1], 6.0);
}

TEST(Ops, ShapeMismatchThrows)
{
  EXPECT_THROW(add(Tensor({2}), Tensor({3})), std::invalid_argument);
  EXPECT_THROW(sub(Tensor({2}), Tensor({2, 1})), std::invalid_argument);
  EXPECT_THROW(mul(Tensor({2}), Tensor({3})), std::invalid_argument);
}

TEST(Ops, ReluExampleAndSubgradient)
{
  Tensor const r = relu(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_EQ(r[2], 2.0);

  Tensor a = Tensor::parameter({3}, {-1, 0, 2});
  Tape tape;
  TapeScope scope(tape);
  auto g = tape.backward(sum(relu(a)))(a);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 1.0);
}

TEST(Ops, ElementwiseGradients)
{
  std::mt19937_64 rng(1);
  Tensor a = random_parameter({5}, rng);
  Tensor b = random_parameter({5}, rng);
  Tensor s = Tensor::parameter({}, {0.7});
  expect_gradients_match({a, b}, [&] { return sum_squares(add(a, b)); });
  expect_gradients_match({a, b}, [&] { return sum_squares(sub(a, b)); });
  expect_gradients_match({a, b}, [&] { return sum(mul(a, b)); });
  expect_gradients_match({a, s}, [&] { return sum_squares(scale(neg(a), s)); });
  expect_gradients_match({a}, [&] { return sum(exp(scale(a, 0.3))); });
  expect_gradients_match({a, b}, [&] { return dot(a, relu(b)); });
  Tensor pos = Tensor::parameter({3}, {1.5, 2.0, 3.0});
  expect_gradients_match({a, pos}, [&] { return sum(div(Tensor({3}, {1, 2, 3}), pos)); });
}

TEST(Ops, ComplexMulExamples)
{
  std::mt19937_64 rng(2);
  Tensor const x = random_tensor({3, 2}, rng);
  Tensor const one({3, 2}, {1, 0, 1, 0, 1, 0});
  EXPECT_TRUE(bitwise_equal(complex_mul(one, x), x));
  Tensor const i({1, 2}, {0, 1});
  Tensor const r = complex_mul(i, i);
  EXPECT_EQ(r[0], -1.0);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_THROW(complex_mul(Tensor({3}), Tensor({3})), std::invalid_argument);
}

TEST(Ops, ComplexMulGradient)
{
  std::mt19937_64 rng(3);
  Tensor a = random_parameter({4, 2}, rng);
  Tensor b = random_parameter({4, 2}, rng);
  expect_gradients_match({a, b}, [&] { return sum_squares(complex_mul(a, b)); }, 1e-6);
}

TEST(Fft, RoundTripAndParseval)
{
  std::mt19937_64 rng(4);
  for (std::size_t n : {1u, 2u, 4u, 8u, 16u, 32u, 64u}) {
    for (std::size_t m : {4u, 64u}) {
      Tensor const x = random_tensor({n, m, 2}, rng);
      Tensor const k = fft2_centered(x);
      EXPECT_NEAR(norm2(k), norm2(x), 1e-12 * norm2(x));
      EXPECT_LT(test::max_abs_diff(ifft2_centered(k), x), 1e-12);
      EXPECT_LT(test::max_abs_diff(fft2_centered(ifft2_centered(x)), x), 1e-12);
    }
  }
}

TEST(Fft, CenteredImpulseIsFlat)
{
  Tensor x({4, 4, 2});
  x.mutable_data()[2 * (2 * 4 + 2)] = 1.0;
  Tensor const k = fft2_centered(x);
  for (std::size_t p = 0; p < 16; ++p) {
    EXPECT_NEAR(std::hypot(k[2 * p], k[2 * p + 1]), 0.25, 1e-15);
  }
  // DC sits at (H/2, W/2): a constant image concentrates there.
  Tensor const c = fft2_centered(Tensor({4, 4, 2}, std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0,
                                                                       1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0}));
  EXPECT_NEAR(c[2 * (2 * 4 + 2)], 4.0, 1e-14);
  EXPECT_NEAR(norm2(c), 4.0, 1e-14);
}

TEST(Fft, MatchesDirectCenteredDft)
{
  std::mt19937_64 rng(5);
  std::size_t const H = 8;
  std::size_t const W = 4;
  Tensor const x = random_tensor({H, W, 2}, rng);
  Tensor const k = fft2_centered(x);
  double const pi = std::acos(-1.0);
  for (std::size_t u = 0; u < H; ++u) {
    for (std::size_t v = 0; v < W; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          double const ph = -2.0 * pi *
                            ((double(u) - H / 2.0) * (double(i) - H / 2.0) / H +
                             (double(v) - W / 2.0) * (double(j) - W / 2.0) / W);
          acc += std::complex<double>(x[2 * (i * W + j)], x[2 * (i * W + j) + 1]) * std::polar(1.0, ph);
        }
      }
      acc /= std::sqrt(double(H * W));
      EXPECT_NEAR(k[2 * (u * W + v)], acc.real(), 1e-12);
      EXPECT_NEAR(k[2 * (u * W + v) + 1], acc.imag(), 1e-12);
    }
  }
}

TEST(Fft, RejectsNonPowerOfTwo)
{
  EXPECT_THROW(fft2_centered(Tensor({6, 4, 2})), std::invalid_argument);
  EXPECT_THROW(fft2_centered(Tensor({4, 4})), std::invalid_argument);
}

TEST(Fft, BatchedGradient)
{
  std::mt19937_64 rng(6);
  Tensor x = random_parameter({2, 4, 4, 2}, rng);
  Tensor const w = random_tensor({2, 4, 4, 2}, rng);
  expect_gradients_match({x}, [&] { return dot(w, fft2_centered(x)); });
  expect_gradients_match({x}, [&] { return sum_squares(mul(w, ifft2_centered(x))); });
}

TEST(Conv, IdentityKernel)
{
  std::mt19937_64 rng(7);
  Tensor const x = random_tensor({3, 8, 8}, rng);
  Tensor k({3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    k.mutable_data()[(c * 3 + c) * 9 + 4] = 1.0;
  }
  Tensor const y = conv2d(x, k, Tensor({3}));
  EXPECT_LT(test::max_abs_diff(x, y), 1e-15);
}

TEST(Conv, OnesKernelOnConstant)
{
  Tensor const x = Tensor::full({1, 5, 5}, 1.0);
  Tensor const y = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), Tensor({1}));
  EXPECT_DOUBLE_EQ(y[2 * 5 + 2], 9.0);
  EXPECT_DOUBLE_EQ(y[0], 4.0); // corner sees zero padding
  EXPECT_DOUBLE_EQ(y[2], 6.0);
}

TEST(Conv, ChannelMismatchThrows)
{
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1})), std::invalid_argument);
  EXPECT_THROW(conv2d(Tensor({3, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({2})), std::invalid_argument);
}

TEST(Conv, KernelGradient)
{
  std::mt19937_64 rng(8);
  Tensor const x = random_tensor({1, 8, 8}, rng);
  Tensor k = random_parameter({2, 1, 3, 3}, rng);
  Tensor b = random_parameter({2}, rng);
  Tensor const w = random_tensor({2, 8, 8}, rng);
  expect_gradients_match({k, b}, [&] { return dot(w, conv2d(x, k, b)); }, 1e-6);
  expect_gradients_match({k}, [&] { return sum_squares(conv2d(x, k, b)); }, 1e-6);
}

TEST(Conv, InputGradient)
{
  std::mt19937_64 rng(9);
  Tensor x = random_parameter({3, 4, 8}, rng);
  Tensor const k = random_tensor({2, 3, 3, 3}, rng);
  Tensor const w = random_tensor({2, 4, 8}, rng);
  expect_gradients_match({x}, [&] { return dot(w, conv2d(x, k, Tensor({2}))); });
}

TEST(Conv, PoolUpsampleConcatGradients)
{
  std::mt19937_64 rng(10);
  Tensor x = random_parameter({2, 4, 4}, rng);
  Tensor y = random_parameter({2, 2, 2}, rng);
  Tensor const w = random_tensor({4, 4, 4}, rng);
  expect_gradients_match({x, y}, [&] { return dot(w, concat_channels(x, upsample2(y))); });
  expect_gradients_match({x}, [&] { return sum_squares(upsample2(avg_pool2(x))); });
  Tensor img = random_parameter({4, 4, 2}, rng);
  expect_gradients_match({img}, [&] { return sum_squares(mul(channels_to_image(image_to_channels(img)), img)); });
}

TEST(Conv, Deterministic)
{
  std::mt19937_64 rng(11);
  Tensor const x = random_tensor({4, 16, 16}, rng);
  Tensor const k = random_tensor({8, 4, 3, 3}, rng);
  Tensor const b = random_tensor({8}, rng);
  EXPECT_TRUE(bitwise_equal(conv2d(x, k, b), conv2d(x, k, b)));
}

TEST(Backward, SumOfSquares)
{
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tape tape;
  TapeScope scope(tape);
  auto g = tape.backward(sum(mul(w, w)))(w);
  EXPECT_EQ(g[0], 2.0);
  EXPECT_EQ(g[1], 4.0);
  EXPECT_EQ(tape.node_count(), 0u);
}

TEST(Backward, IndependentLossGivesZero)
{
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tensor v = Tensor::parameter({2}, {3, 4});
  Tape tape;
  TapeScope scope(tape);
  auto loss = sum_squares(v);
  (void)add(w, w);
  auto grads = tape.backward(loss);
  auto g = grads(w);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Backward, NonScalarLossThrows)
{
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tape tape;
  TapeScope scope(tape);
  EXPECT_THROW(tape.backward(mul(w, w)), std::invalid_argument);
}

TEST(Backward, ReusedInputAccumulates)
{
  Tensor w = Tensor::parameter({1}, {3});
  Tape tape;
  TapeScope scope(tape);
  Tensor const a = mul(w, w);
  auto g = tape.backward(sum(add(a, mul(a, w))))(w); // w^2 + w^3
  EXPECT_DOUBLE_EQ(g[0], 2 * 3.0 + 3 * 9.0);
}

TEST(Backward, NoTapeRecordsNothing)
{
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tape tape;
  (void)mul(w, w);
  EXPECT_EQ(tape.node_count(), 0u);
  TapeScope scope(tape);
  (void)mul(Tensor({2}), Tensor({2}));
  EXPECT_EQ(tape.node_count(), 0u);
}

TEST(Container, RoundTripBitExact)
{
  std::mt19937_64 rng(12);
  for (Shape const &s : {Shape{}, Shape{3}, Shape{2, 3, 4, 2}, Shape{0, 5}}) {
    Tensor const t = random_tensor(s, rng);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor const r = read_tensor(ss);
    EXPECT_EQ(r.shape(), t.shape());
    EXPECT_TRUE(bitwise_equal(r, t));
  }
}

TEST(Container, HeaderLayout)
{
  std::stringstream ss;
  write_tensor(ss, Tensor({2}, {1.0, -2.0}));
  std::string const bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 3u + 8u + 16u);
  EXPECT_EQ(bytes.substr(0, 4), "DBPT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 2u);
}

TEST(Container, CorruptInputsThrowDataError)
{
  std::stringstream good;
  write_tensor(good, Tensor({3}, {1, 2, 3}));
  std::string const bytes = good.str();
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    std::stringstream ss(bytes.substr(0, cut));
    EXPECT_THROW(read_tensor(ss), DataError) << "cut at " << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream m(bad);
  EXPECT_THROW(read_tensor(m), DataError);
  bad = bytes;
  bad[4] = 9;
  std::stringstream v(bad);
  EXPECT_THROW(read_tensor(v), DataError);
  bad = bytes;
  bad[5] = 1;
  std::stringstream d(bad);
  EXPECT_THROW(read_tensor(d), DataError);
  EXPECT_THROW(load_tensor("/nonexistent/file.dbpt"), DataError);
}

TEST(Container, FileRoundTrip)
{
  auto const dir = std::filesystem::temp_directory_path() / "dbp_container_test";
  std::filesystem::create_directories(dir);
  Tensor const t({2, 2}, {0.1, 0.2, 0.3, 0.4});
  save_tensor(dir / "t.dbpt", t);
  EXPECT_TRUE(bitwise_equal(load_tensor(dir / "t.dbpt"), t));
  std::filesystem::remove_all(dir);
}
