#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "scl/tensor.hpp"

namespace scl {
namespace {

using oracle::random_tensor;
using testing::grad_check;

// Weighted sum with fixed pseudo-random weights, so a gradient check sees
// every output entry with a distinct upstream gradient.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, Tape<T>& tape) {
  Rng rng(12345);
  Tensor<T> w(x.shape());
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return sum(mul(x, w, tape), tape);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tape<float> tape;
  Tensor<float> eye(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<float> b(Shape{3, 2}, {1.5f, -2, 3, 4, -5, 6.25f});
  auto c = matmul(eye, b, tape);
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(c[i], b[i]);
}

TEST(Matmul, ScalarProduct) {
  Tape<float> tape;
  auto c = matmul(Tensor<float>(Shape{1, 1}, std::vector<float>{2}), Tensor<float>(Shape{1, 1}, std::vector<float>{3}), tape);
  EXPECT_EQ(c[0], 6.0f);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(1);
  Tape<float> tape;
  auto a = random_tensor<float>(rng, {5, 4});
  auto b = random_tensor<float>(rng, {4, 3});
  const auto ref = oracle::matmul(oracle::to_matrix(a), oracle::to_matrix(b));
  const auto c = matmul(a, b, tape);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(c.at(i, j), ref[i][j], 1e-6);
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape<float> tape;
  EXPECT_THROW(matmul(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{2, 3}), tape), DimensionError);
}

TEST(Matmul, AssociativeOnSmallInstances) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<double> tape;
    auto a = random_tensor<double>(rng, {3, 4});
    auto b = random_tensor<double>(rng, {4, 5});
    auto c = random_tensor<double>(rng, {5, 2});
    auto left = matmul(matmul(a, b, tape), c, tape);
    auto right = matmul(a, matmul(b, c, tape), tape);
    for (std::size_t i = 0; i < left.numel(); ++i)
      EXPECT_LE(std::abs(left[i] - right[i]), 1e-4 * std::max(1.0, std::abs(left[i])));
  }
}

TEST(AddRowBias, ZeroBiasIsIdentity) {
  Rng rng(3);
  Tape<float> tape;
  auto x = random_tensor<float>(rng, {3, 4});
  auto y = add_row_bias(x, Tensor<float>(Shape{4}), tape);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(AddRowBias, BroadcastsPerRow) {
  Tape<float> tape;
  auto y = add_row_bias(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{3}, {1, 2, 3}), tape);
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{1, 2, 3, 1, 2, 3}));
}

TEST(AddRowBias, MatchesElementwiseLoop) {
  Rng rng(4);
  Tape<float> tape;
  auto x = random_tensor<float>(rng, {4, 5});
  auto b = random_tensor<float>(rng, {5});
  auto y = add_row_bias(x, b, tape);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(y.at(i, j), x.at(i, j) + b[j]);
}

TEST(AddRowBias, BiasGradientIsColumnSum) {
  Rng rng(5);
  Tape<double> tape;
  auto x = random_tensor<double>(rng, {3, 2}, -1, 1, true);
  Tensor<double> b(Shape{2}, true);
  auto loss = sum(add_row_bias(x, b, tape), tape);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(b.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(b.grad()[1], 3.0);
}

TEST(AddRowBias, MismatchThrows) {
  Tape<float> tape;
  EXPECT_THROW(add_row_bias(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{2}), tape), DimensionError);
}

TEST(Relu, ClampsNegatives) {
  Tape<float> tape;
  auto y = relu(Tensor<float>(Shape{3}, {-1, 0, 2}), tape);
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{0, 0, 2}));
}

TEST(Relu, PositiveInputUnchanged) {
  Tape<float> tape;
  Tensor<float> x(Shape{3}, {0.5f, 1, 7});
  auto y = relu(x, tape);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Relu, SubgradientConvention) {
  Tape<double> tape;
  Tensor<double> x(Shape{3}, {-0.5, 1.5, 0.0}, true);
  Tensor<double> w(Shape{3}, {2.0, 3.0, 4.0});
  auto loss = sum(mul(relu(x, tape), w, tape), tape);
  backward(loss, tape);
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 3.0);
  EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(L2Normalize, ThreeFourFive) {
  Tape<float> tape;
  auto y = l2_normalize_rows(Tensor<float>(Shape{1, 2}, {3, 4}), tape);
  EXPECT_NEAR(y[0], 0.6f, 1e-7);
  EXPECT_NEAR(y[1], 0.8f, 1e-7);
}

TEST(L2Normalize, UnitVectorIsFixed) {
  Tape<float> tape;
  const float s = 1.0f / std::sqrt(3.0f);
  auto y = l2_normalize_rows(Tensor<float>(Shape{1, 3}, {s, -s, s}), tape);
  EXPECT_NEAR(y[0], s, 1e-6);
  EXPECT_NEAR(y[1], -s, 1e-6);
  EXPECT_NEAR(y[2], s, 1e-6);
}

TEST(L2Normalize, ZeroRowStaysZero) {
  Tape<double> tape;
  Tensor<double> x(Shape{2, 3}, {0, 0, 0, 1, 2, 2}, true);
  auto y = l2_normalize_rows(x, tape);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y.at(0, j), 0.0);
  auto loss = sum(y, tape);
  backward(loss, tape);
  for (double g : x.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(L2Normalize, NormBoundsForNonTinyRows) {
  Rng rng(6);
  Tape<float> tape;
  auto x = random_tensor<float>(rng, {50, 7}, -3, 3);
  x.at(0, 0) = 1e-3f;
  for (std::size_t j = 1; j < 7; ++j) x.at(0, j) = 0.0f;
  auto y = l2_normalize_rows(x, tape);
  for (std::size_t i = 0; i < 50; ++i) {
    double ss = 0;
    for (std::size_t j = 0; j < 7; ++j) ss += double(y.at(i, j)) * y.at(i, j);
    EXPECT_LE(std::sqrt(ss), 1.0 + 1e-6);
    EXPECT_GE(std::sqrt(ss), 1.0 - 1e-6);
  }
}

TEST(L2Normalize, ScaleInvariant) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Tape<float> tape;
    auto x = random_tensor<float>(rng, {1, 6});
    const double c = std::pow(10.0, rng.uniform(-3.0, 3.0));
    auto scaled = scale(x, static_cast<float>(c), tape);
    auto a = l2_normalize_rows(x, tape);
    auto b = l2_normalize_rows(scaled, tape);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a[j], b[j], 1e-6);
  }
}

TEST(Softmax, UniformRow) {
  Tape<float> tape;
  auto y = softmax_rows(Tensor<float>(Shape{1, 4}, {2.5f, 2.5f, 2.5f, 2.5f}), tape);
  for (float v : y.data()) EXPECT_NEAR(v, 0.25f, 1e-7);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tape<float> tape;
  auto y = softmax_rows(Tensor<float>(Shape{1, 2}, {1000, 0}), tape);
  EXPECT_NEAR(y[0], 1.0f, 1e-7);
  EXPECT_GE(y[1], 0.0f);
  EXPECT_LT(y[1], 1e-30f);
}

TEST(Softmax, MatchesDoublePrecisionReference) {
  Rng rng(8);
  Tape<float> tape;
  auto z = random_tensor<float>(rng, {6, 5}, -4, 4);
  auto y = softmax_rows(z, tape);
  for (std::size_t i = 0; i < 6; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < 5; ++j) denom += std::exp(double(z.at(i, j)));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(y.at(i, j), std::exp(double(z.at(i, j))) / denom, 1e-6);
  }
}

TEST(Softmax, RowsSumToOneForWideRanges) {
  Rng rng(9);
  Tape<float> tape;
  auto z = random_tensor<float>(rng, {100, 9}, -300, 300);
  auto y = softmax_rows(z, tape);
  for (std::size_t i = 0; i < 100; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) s += y.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Backward, SumOfSquares) {
  Tape<double> tape;
  Tensor<double> x(Shape{1}, {3.0}, true);
  auto loss = sum(mul(x, x, tape), tape);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, DisconnectedLeafHasZeroGradient) {
  Tape<double> tape;
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  Tensor<double> unused(Shape{2}, {5.0, 6.0}, true);
  auto other = sum(unused, tape);  // recorded, but not part of the loss
  auto loss = sum(mul(x, x, tape), tape);
  backward(loss, tape);
  EXPECT_EQ(unused.grad()[0], 0.0);
  EXPECT_EQ(unused.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  (void)other;
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape<double> tape;
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  auto y = mul(x, x, tape);
  EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(Backward, RepeatedCallsGiveSameGradient) {
  Tape<double> tape;
  Tensor<double> x(Shape{1}, {2.0}, true);
  auto loss = sum(mul(x, x, tape), tape);
  backward(loss, tape);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(Tape, RecordsInTopologicalOrder) {
  Tape<double> tape;
  Tensor<double> x(Shape{2, 2}, {1, 2, 3, 4}, true);
  auto y = relu(matmul(x, x, tape), tape);
  auto loss = sum(y, tape);
  ASSERT_EQ(tape.size(), 3u);
  const auto& e = tape.entries();
  EXPECT_EQ(e[0].op, "matmul");
  EXPECT_TRUE(e[1].inputs[0].same_storage(e[0].output));
  EXPECT_TRUE(e[2].inputs[0].same_storage(e[1].output));
}

TEST(Tape, InferenceModeRecordsNothing) {
  Tape<double> tape(Tape<double>::Mode::inference);
  Tensor<double> x(Shape{2}, {1, 2}, true);
  auto y = sum(mul(x, x, tape), tape);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, NonFiniteResultIsAnError) {
  Tape<float> tape;
  Tensor<float> big(Shape{1}, std::vector<float>{std::numeric_limits<float>::max()});
  EXPECT_THROW(scale(big, 10.0f, tape), NumericError);
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
}

// Each op is checked in 32-bit against a 64-bit central difference
// (h = 1e-3, relative error <= 1e-4), and in 64-bit against a 64-bit central
// difference with a small step (h = 1e-5, relative error <= 1e-7).
class OpGradient : public ::testing::TestWithParam<int> {};

template <class Build>
void expect_gradients(Build build, const std::vector<Tensor<double>>& inputs) {
  const auto f32 = grad_check<float>(build, inputs, 1e-3);
  EXPECT_LE(f32.max_rel_error, 1e-4) << "32-bit analytic vs 64-bit difference";
  const auto f64 = grad_check<double>(build, inputs, 1e-5);
  EXPECT_LE(f64.max_rel_error, 1e-7) << "64-bit analytic vs 64-bit difference";
  EXPECT_GT(f32.checked, 0u);
}

TEST_P(OpGradient, Matmul) {
  Rng rng(100 + GetParam());
  expect_gradients([]<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) { return weighted_sum(matmul(in[0], in[1], t), t); },
                   {random_tensor<double>(rng, {4, 3}), random_tensor<double>(rng, {3, 5})});
}

TEST_P(OpGradient, Transpose) {
  Rng rng(200 + GetParam());
  expect_gradients([]<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) { return weighted_sum(transpose(in[0], t), t); },
                   {random_tensor<double>(rng, {3, 5})});
}

TEST_P(OpGradient, AddRowBias) {
  Rng rng(300 + GetParam());
  expect_gradients([]<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) { return weighted_sum(add_row_bias(in[0], in[1], t), t); },
                   {random_tensor<double>(rng, {4, 6}), random_tensor<double>(rng, {6})});
}

TEST_P(OpGradient, Relu) {
  Rng rng(400 + GetParam());
  auto x = random_tensor<double>(rng, {5, 5});
  for (auto& v : x.data()) v += v >= 0 ? 0.1 : -0.1;  // keep clear of the kink
  expect_gradients([]<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) { return weighted_sum(relu(in[0], t), t); }, {x});
}

TEST_P(OpGradient, L2NormalizeRows) {
  Rng rng(500 + GetParam());
  expect_gradients([]<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) { return weighted_sum(l2_normalize_rows(in[0], t), t); },
                   {random_tensor<double>(rng, {4, 8})});
}

TEST_P(OpGradient, SoftmaxRows) {
  Rng rng(600 + GetParam());
  expect_gradients([]<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) { return weighted_sum(softmax_rows(in[0], t), t); },
                   {random_tensor<double>(rng, {4, 7}, -3, 3)});
}

TEST_P(OpGradient, ScaleByAndExpClamped) {
  Rng rng(700 + GetParam());
  expect_gradients(
      []<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) {
        return weighted_sum(scale_by(in[0], exp_clamped(in[1], T(100), t), t), t);
      },
      {random_tensor<double>(rng, {3, 3}), random_tensor<double>(rng, {1}, 0.0, 1.5)});
}

TEST_P(OpGradient, MulAddFlatten) {
  Rng rng(800 + GetParam());
  expect_gradients(
      []<class T>(std::vector<Tensor<T>>& in, Tape<T>& t) {
        return weighted_sum(flatten_rows(add(mul(in[0], in[1], t), in[0], t), t), t);
      },
      {random_tensor<double>(rng, {2, 2, 3}), random_tensor<double>(rng, {2, 2, 3})});
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, OpGradient, ::testing::Range(0, 5));

TEST(ExpClamped, NoGradientWhileClamped) {
  Tape<double> tape;
  Tensor<double> s(Shape{1}, {6.0}, true);  // e^6 > 100
  auto t = exp_clamped(s, 100.0, tape);
  EXPECT_DOUBLE_EQ(t[0], 100.0);
  backward(t, tape);
  EXPECT_EQ(s.grad()[0], 0.0);
}

}  // namespace
}  // namespace scl
