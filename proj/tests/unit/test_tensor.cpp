#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "equibench/error.hpp"
#include "equibench/rng.hpp"
#include "equibench/tensor.hpp"

using namespace equibench;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::matrix(r, c, v);
}

void expect_tensor_eq(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]) << "index " << i;
}

}  // namespace

TEST(Tensor, ShapeMatchesData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_FALSE(t.attached());
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Rng rng(1);
  const Tensor b = random_matrix(rng, 3, 4);
  expect_tensor_eq(matmul(Tensor::identity(3), b), b);
}

TEST(Matmul, ZeroAnnihilates) {
  Rng rng(2);
  const Tensor a = random_matrix(rng, 3, 4);
  expect_tensor_eq(matmul(a, Tensor::zeros({4, 2})), Tensor::zeros({3, 2}));
}

TEST(Matmul, HandArithmetic) {
  const Tensor r = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}}));
  expect_tensor_eq(r, Tensor::matrix({{17}, {39}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativityWithIdentityAndZeroIsExact) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_matrix(rng, 3, 3);
    const Tensor i = Tensor::identity(3);
    expect_tensor_eq(matmul(matmul(a, i), i), matmul(a, matmul(i, i)));
    expect_tensor_eq(matmul(matmul(a, Tensor::zeros({3, 3})), a), Tensor::zeros({3, 3}));
  }
}

TEST(Elementwise, ReferenceValues) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(relu(Tensor::scalar(-3.0)).item(), 0.0);
  EXPECT_NEAR(tanh(Tensor::scalar(0.5)).item(), 0.46211716, 1e-8);
  EXPECT_EQ(elementwise(ElementwiseOp::relu, Tensor::scalar(2.5)).item(), 2.5);
}

TEST(Elementwise, BroadcastsLengthOneAxis) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor row = Tensor::matrix({{10, 20}});
  expect_tensor_eq(add(a, row), Tensor::matrix({{11, 22}, {13, 24}}));
  const Tensor col = Tensor::matrix({{2}, {3}});
  expect_tensor_eq(mul(a, col), Tensor::matrix({{2, 4}, {9, 12}}));
  EXPECT_THROW(add(a, Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(add(a, Tensor::vector({1, 2})), DimensionError);
  EXPECT_THROW(elementwise(ElementwiseOp::add, a, nullptr), ContractError);
}

TEST(Reduce, Examples) {
  EXPECT_EQ(reduce(ReduceOp::sum, Tensor::vector({1, 2, 3}), 0).item(), 6.0);
  EXPECT_EQ(reduce(ReduceOp::mean, Tensor::vector({2, 4}), 0).item(), 3.0);
  expect_tensor_eq(reduce(ReduceOp::max, Tensor::matrix({{1, 5}, {3, 2}}), 0), Tensor::vector({3, 5}));
  expect_tensor_eq(reduce(ReduceOp::sum, Tensor::matrix({{1, 5}, {3, 2}}), 1), Tensor::vector({6, 5}));
  EXPECT_THROW(reduce(ReduceOp::sum, Tensor::vector({1, 2}), 1), DimensionError);
}

TEST(Reduce, MeanIsSumOverLength) {
  Rng rng(4);
  const Tensor a = random_matrix(rng, 4, 5);
  const Tensor s = reduce(ReduceOp::sum, a, 0);
  const Tensor m = reduce(ReduceOp::mean, a, 0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(m.data()[i], s.data()[i] / 4.0);
}

TEST(SegmentReduce, EmptySegmentsGiveZero) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::uint32_t> seg{0, 2, 0};
  expect_tensor_eq(segment_reduce(ReduceOp::sum, a, seg, 3), Tensor::matrix({{6, 8}, {0, 0}, {3, 4}}));
  expect_tensor_eq(segment_reduce(ReduceOp::max, a, seg, 3), Tensor::matrix({{5, 6}, {0, 0}, {3, 4}}));
  expect_tensor_eq(segment_reduce(ReduceOp::mean, a, seg, 3), Tensor::matrix({{3, 4}, {0, 0}, {3, 4}}));
}

TEST(Backward, SquareAtThree) {
  GradTape tape;
  const Tensor x = tape.watch(Tensor::scalar(3.0));
  const Gradients g = tape.backward(mul(x, x));
  EXPECT_EQ(g.of(x).item(), 6.0);
}

TEST(Backward, BilinearFormGradientIsOtherOperand) {
  Rng rng(5);
  const Tensor a0 = random_matrix(rng, 2, 3);
  const Tensor b = random_matrix(rng, 2, 3);
  GradTape tape;
  const Tensor a = tape.watch(a0);
  const Gradients g = tape.backward(sum_all(mul(a, b)));
  expect_tensor_eq(g.of(a), b);
}

TEST(Backward, NonScalarLossIsContractError) {
  GradTape tape;
  const Tensor x = tape.watch(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), ContractError);
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), ContractError);
}

TEST(Backward, DetachedTensorsGetNoGradient) {
  GradTape tape;
  const Tensor x = tape.watch(Tensor::scalar(2.0));
  const Tensor c = Tensor::scalar(5.0);
  const Gradients g = tape.backward(mul(x, c));
  EXPECT_FALSE(g.contains(c));
  EXPECT_TRUE(g.contains(x));
  EXPECT_EQ(g.of(x).item(), 5.0);
}

TEST(Backward, GradientKeepsLeafShape) {
  GradTape tape;
  const Tensor w = tape.watch(Tensor::zeros({3, 2}));
  const Gradients g = tape.backward(sum_all(w));
  EXPECT_EQ(g.of(w).shape(), (Shape{3, 2}));
}

TEST(Backward, VisitsEveryOperationOnce) {
  GradTape tape;
  const Tensor x = tape.watch(Tensor::vector({1, 2, 3}));
  const Tensor y = tanh(mul(x, x));
  const Tensor loss = sum_all(add(y, x));
  tape.backward(loss);
  // mul, tanh, add, sum_all
  EXPECT_EQ(tape.last_backward_visits(), 4u);
}

TEST(Backward, UnrelatedLeafGradientIsZero) {
  GradTape tape;
  const Tensor x = tape.watch(Tensor::scalar(2.0));
  const Tensor unused = tape.watch(Tensor::vector({1, 2}));
  const Gradients g = tape.backward(mul(x, x));
  expect_tensor_eq(g.of(unused), Tensor::zeros({2}));
}

TEST(Tape, MutableDataRejectsAttachedTensor) {
  GradTape tape;
  Tensor x = tape.watch(Tensor::scalar(1.0));
  EXPECT_THROW(x.mutable_data(), ContractError);
  Tensor d = x.detach();
  EXPECT_NO_THROW(d.mutable_data()[0] = 2.0);
}

TEST(FiniteDiff, SumIsExact) {
  Rng rng(6);
  const Tensor x = random_matrix(rng, 3, 4);
  const auto r = finite_diff_check([](const Tensor& t) { return sum_all(t); }, x);
  EXPECT_LT(r.max_relative_error, 1e-9);
}

TEST(FiniteDiff, SigmoidOfDot) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor w = random_matrix(rng, 5, 1);
    const Tensor x = random_matrix(rng, 1, 5);
    const auto r = finite_diff_check([&](const Tensor& t) { return sum_all(sigmoid(matmul(t, w))); }, x);
    EXPECT_LT(r.max_relative_error, 1e-5);
  }
}

TEST(FiniteDiff, FlagsReluKink) {
  const Tensor x = Tensor::vector({0.0});
  const auto r = finite_diff_check([](const Tensor& t) { return sum_all(relu(t)); }, x);
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(FiniteDiff, FullMlpGradient) {
  Rng rng(8);
  const Tensor w1 = random_matrix(rng, 4, 6);
  const Tensor w2 = random_matrix(rng, 6, 1);
  const Tensor x = random_matrix(rng, 5, 4);
  const auto r = finite_diff_check(
      [&](const Tensor& t) { return mean_all(sigmoid(matmul(tanh(matmul(x, t)), w2))); }, w1);
  EXPECT_LT(r.max_relative_error, 1e-5);
}

// Every primitive against central differences on random inputs, away from
// the relu kink.
TEST(FiniteDiff, EveryPrimitiveOnRandomSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Tensor a = random_matrix(rng, 3, 4, 0.1, 1.0);
    const Tensor b = random_matrix(rng, 3, 4, 0.1, 1.0);
    const Tensor m = random_matrix(rng, 4, 2);
    const std::vector<std::uint32_t> rows{2, 0, 1, 2};
    const std::vector<std::uint32_t> seg{1, 0, 1};
    const std::vector<std::function<Tensor(const Tensor&)>> fns{
        [&](const Tensor& t) { return sum_all(matmul(t, m)); },
        [&](const Tensor& t) { return sum_all(mul(add(t, b), sub(t, b))); },
        [&](const Tensor& t) { return sum_all(mul(relu(t), b)); },
        [&](const Tensor& t) { return sum_all(mul(sigmoid(t), b)); },
        [&](const Tensor& t) { return sum_all(mul(tanh(t), b)); },
        [&](const Tensor& t) { return sum_all(mul(softplus(t), b)); },
        [&](const Tensor& t) { return sum_all(mul(signed_log1p(sub(t, b)), b)); },
        [&](const Tensor& t) { return sum_all(mul(transpose(t), transpose(b))); },
        [&](const Tensor& t) { return sum_all(scale(mul(t, t), 0.5)); },
        [&](const Tensor& t) { return sum_all(mul(reduce(ReduceOp::mean, t, 0), reduce(ReduceOp::max, b, 0))); },
        [&](const Tensor& t) { return sum_all(mul(reduce(ReduceOp::max, t, 1), reduce(ReduceOp::sum, b, 1))); },
        [&](const Tensor& t) { return mean_all(mul(gather_rows(t, rows), gather_rows(b, rows))); },
        [&](const Tensor& t) { return sum_all(mul(segment_reduce(ReduceOp::sum, t, seg, 2), segment_reduce(ReduceOp::mean, b, seg, 2))); },
        [&](const Tensor& t) { return sum_all(segment_reduce(ReduceOp::max, mul(t, b), seg, 2)); },
        [&](const Tensor& t) { return sum_all(tanh(concat_cols({t, b, t}))); },
    };
    for (std::size_t k = 0; k < fns.size(); ++k) {
      const auto r = finite_diff_check(fns[k], a);
      EXPECT_LT(r.max_relative_error, 1e-5) << "seed " << seed << " primitive " << k;
    }
  }
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  Rng r1(9);
  Rng r2(9);
  const Tensor a = random_matrix(r1, 6, 6);
  const Tensor b = random_matrix(r2, 6, 6);
  expect_tensor_eq(tanh(matmul(a, a)), tanh(matmul(b, b)));
}

TEST(Precision, F32ScopeRoundsOutputs) {
  const Tensor x = Tensor::scalar(1.0 / 3.0);
  const double full = scale(x, 1.0).item();
  double reduced = 0.0;
  {
    PrecisionScope scope(Precision::f32);
    EXPECT_EQ(current_precision(), Precision::f32);
    reduced = scale(x, 1.0).item();
  }
  EXPECT_EQ(current_precision(), Precision::f64);
  EXPECT_EQ(reduced, static_cast<double>(static_cast<float>(1.0 / 3.0)));
  EXPECT_NE(reduced, full);
}

TEST(ConcatCols, AllowsZeroWidthParts) {
  const Tensor a = Tensor::matrix({{1}, {2}});
  const Tensor empty = Tensor::zeros({2, 0});
  expect_tensor_eq(concat_cols({a, empty, a}), Tensor::matrix({{1, 1}, {2, 2}}));
  EXPECT_THROW(concat_cols({a, Tensor::zeros({3, 1})}), DimensionError);
}
