#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "metareid/autodiff.hpp"
#include "metareid/finite_diff.hpp"
#include "metareid/gradcheck.hpp"
#include "test_util.hpp"

using namespace metareid;
using V = Var<double>;

namespace {

std::vector<double> values(const V& v) {
  return {v.value().data().begin(), v.value().data().end()};
}

// Small two-layer network loss, used by several checks.
V two_layer_loss(const V& w0, const V& w1, const V& x) {
  return mean(square(matmul(relu(matmul(x, w0)), w1)));
}

}  // namespace

TEST(AutodiffExamples, Relu) {
  auto y = relu(V::constant(Tensor<double>::vector({-1, 0, 2})));
  EXPECT_EQ(values(y), (std::vector<double>{0, 0, 2}));
}

TEST(AutodiffExamples, IdentityMatmul) {
  std::mt19937_64 rng(5);
  auto a = testutil::random_tensor({3, 3}, rng);
  auto eye = Tensor<double>::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  auto y = matmul(V::constant(eye), V::constant(a));
  EXPECT_EQ(y.value(), a);
}

TEST(AutodiffExamples, ThreeFourFiveTriangle) {
  auto x = V::constant(Tensor<double>::matrix(2, 2, {0, 0, 3, 4}));
  EXPECT_EQ(pairwise_sqdist(x).value()(0, 1), 25.0);
  EXPECT_EQ(pairwise_dist(x).value()(0, 1), 5.0);
  EXPECT_EQ(pairwise_dist(x).value()(1, 0), 5.0);
}

TEST(AutodiffExamples, DerivativeOfSquare) {
  auto x = V::leaf(Tensor<double>::scalar(3.0));
  EXPECT_EQ(grad(square(x), x).item(), 6.0);
}

TEST(AutodiffExamples, SecondDerivativeOfCube) {
  auto x = V::leaf(Tensor<double>::scalar(2.0));
  auto cube = mul(square(x), x);
  auto dx = grad(cube, x, {.create_graph = true});
  EXPECT_DOUBLE_EQ(dx.item(), 12.0);
  EXPECT_DOUBLE_EQ(grad(dx, x).item(), 12.0);
}

TEST(FiniteDiffExamples, QuadraticIsExact) {
  auto g = finite_diff_grad<double>([](const Tensor<double>& t) { return t[0] * t[0]; },
                                    Tensor<double>::vector({3.0}));
  EXPECT_NEAR(g[0], 6.0, 1e-9);
}

TEST(FiniteDiffExamples, SumOfSquares) {
  auto f = [](const Tensor<double>& t) { return t[0] * t[0] + t[1] * t[1]; };
  auto g = finite_diff_grad<double>(f, Tensor<double>::vector({1.0, 2.0}));
  EXPECT_NEAR(g[0], 2.0, 1e-9);
  EXPECT_NEAR(g[1], 4.0, 1e-9);
}

TEST(FiniteDiffExamples, RejectsBadStepAndNonFiniteValues) {
  auto f = [](const Tensor<double>& t) { return t[0]; };
  EXPECT_THROW(finite_diff_grad<double>(f, Tensor<double>::vector({1.0}), 0.0),
               std::invalid_argument);
  auto bad = [](const Tensor<double>& t) { return std::log(t[0]); };
  EXPECT_THROW(finite_diff_grad<double>(bad, Tensor<double>::vector({0.0})), NonFiniteError);
}

TEST(FiniteDiffExamples, RandomTwoLayerNetwork) {
  std::mt19937_64 rng(11);
  auto x = V::constant(testutil::random_tensor({5, 4}, rng));
  auto w0 = testutil::random_tensor({4, 6}, rng);
  auto w1 = testutil::random_tensor({6, 3}, rng);
  auto lw0 = V::leaf(w0);
  auto g = grad(two_layer_loss(lw0, V::constant(w1), x), lw0);
  auto f = [&](const Tensor<double>& w) {
    return two_layer_loss(V::constant(w), V::constant(w1), x).item();
  };
  auto fd = finite_diff_grad<double>(f, w0);
  EXPECT_LT(max_relative_error<double>(g.value().data(), fd.data()), 1e-4);
}

TEST(AutodiffErrors, ShapeMismatchNamesOpAndShapes) {
  auto a = V::constant(Tensor<double>::zeros({2, 3}));
  auto b = V::constant(Tensor<double>::zeros({4, 5}));
  try {
    (void)matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
  EXPECT_THROW((void)add(a, b), ShapeError);
}

TEST(AutodiffErrors, NonScalarOutputRejected) {
  auto x = V::leaf(Tensor<double>::vector({1, 2}));
  EXPECT_THROW((void)grad(square(x), x), ShapeError);
}

TEST(AutodiffErrors, UnreachableInputRejectedUnlessAllowed) {
  auto x = V::leaf(Tensor<double>::scalar(1.0));
  auto y = V::leaf(Tensor<double>::vector({1, 2}));
  const std::vector<V> wrt = {x, y};
  EXPECT_THROW((void)grad<double>(square(x), wrt), std::invalid_argument);
  auto gs = grad<double>(square(x), wrt, {.allow_unused = true});
  EXPECT_EQ(gs[1].value(), Tensor<double>::zeros({2}));
}

TEST(AutodiffProperties, BroadcastOverLeadingAxis) {
  auto m = V::leaf(Tensor<double>::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = V::leaf(Tensor<double>::vector({10, 20, 30}));
  auto y = add(m, b);
  EXPECT_EQ(values(y), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  auto gb = grad(sum(y), b);
  EXPECT_EQ(values(gb), (std::vector<double>{2, 2, 2}));
}

TEST(AutodiffProperties, GradIsLinear) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = V::leaf(testutil::random_tensor({4, 3}, rng));
    auto w = V::constant(testutil::random_tensor({3, 2}, rng));
    const double a = 1.7, b = -0.6;
    auto f = mean(square(matmul(x, w)));
    auto g = sum(exp(scale(x, 0.5)));
    auto combo = add(scale(f, a), scale(g, b));
    auto gc = grad(combo, x).value();
    auto gf = grad(f, x).value();
    auto gg = grad(g, x).value();
    for (std::size_t i = 0; i < gc.numel(); ++i) {
      EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-10);
    }
  }
}

TEST(AutodiffProperties, HessianVectorProductOfQuadraticForm) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5;
    auto a = testutil::random_tensor({n, n}, rng);
    auto v = testutil::random_tensor({n, 1}, rng);
    auto x = V::leaf(testutil::random_tensor({n, 1}, rng));
    auto xt = transpose(x);
    auto f = sum(matmul(matmul(xt, V::constant(a)), x));
    auto g = grad(f, x, {.create_graph = true});
    auto hv = grad(sum(mul(g, V::constant(v))), x).value();
    for (std::size_t i = 0; i < n; ++i) {
      double expect = 0.0;
      for (std::size_t j = 0; j < n; ++j) expect += (a(i, j) + a(j, i)) * v[j];
      EXPECT_NEAR(hv[i], expect, 1e-8);
    }
  }
}

TEST(AutodiffProperties, OpSuiteMatchesFiniteDifferencesOnTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& r : check_op_suite(seed, 1e-4)) {
      EXPECT_TRUE(r.pass) << r.name << " seed " << seed << " err " << r.max_rel_error;
    }
  }
}

TEST(AutodiffProperties, SqrtAtZeroHasFiniteGradient) {
  auto x = V::leaf(Tensor<double>::matrix(2, 2, {1, 1, 1, 1}));
  auto g = grad(sum(pairwise_dist(x)), x).value();
  EXPECT_TRUE(g.all_finite());
  auto z = V::leaf(Tensor<double>::scalar(0.0));
  EXPECT_TRUE(grad(sqrt(z), z).value().all_finite());
}

TEST(AutodiffProperties, NoGradGuardRecordsNothing) {
  auto x = V::leaf(Tensor<double>::scalar(2.0));
  NoGradGuard guard;
  auto y = square(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(AutodiffProperties, RepeatedEvaluationIsBitwiseIdentical) {
  std::mt19937_64 rng_a(41), rng_b(41);
  auto run = [](std::mt19937_64& rng) {
    auto x = V::constant(testutil::random_tensor({6, 4}, rng));
    auto w0 = V::leaf(testutil::random_tensor({4, 8}, rng));
    auto w1 = V::leaf(testutil::random_tensor({8, 3}, rng));
    auto loss = two_layer_loss(w0, w1, x);
    auto g = grad(loss, w0, {.create_graph = true});
    auto gg = grad(sum(square(g)), w1);
    return std::make_pair(g.value(), gg.value());
  };
  EXPECT_EQ(run(rng_a), run(rng_b));
}

TEST(AutodiffProperties, ConcatSliceRoundTrip) {
  auto a = V::leaf(Tensor<double>::matrix(1, 2, {1, 2}));
  auto b = V::leaf(Tensor<double>::matrix(2, 2, {3, 4, 5, 6}));
  const std::vector<V> parts = {a, b};
  auto c = concat_rows<double>(parts);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  EXPECT_EQ(slice_rows(c, 1, 3).value(), b.value());
  auto gb = grad(sum(square(c)), b);
  EXPECT_EQ(values(gb), (std::vector<double>{6, 8, 10, 12}));
}
