#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "metareid/finite_diff.hpp"
#include "metareid/losses.hpp"
#include "metareid/model.hpp"
#include "test_util.hpp"

using namespace metareid;
using V = Var<double>;

namespace {

ModelDims small_dims() { return ModelDims{6, 10, 8, 8, 5}; }

// Head weights that expose the standardized features directly: unit scale,
// zero shift, identity embedding.
ModelParams<double> transparent_head(const ModelDims& dims) {
  auto p = init_params<double>(dims, 3);
  p.weights.embed_w = Tensor<double>::zeros({dims.feature, dims.embed});
  for (std::size_t i = 0; i < std::min(dims.feature, dims.embed); ++i) p.weights.embed_w(i, i) = 1.0;
  return p;
}

}  // namespace

TEST(ModelExamples, ZeroWeightsGiveZeroOutputs) {
  auto dims = small_dims();
  auto p = init_params<double>(dims, 1);
  for (auto* t : p.weights.refs()) std::fill(t->data().begin(), t->data().end(), 0.0);
  std::mt19937_64 rng(2);
  auto x = V::constant(testutil::random_tensor({4, dims.input}, rng));
  for (Mode mode : {Mode::train, Mode::eval}) {
    auto out = forward(as_constants(p.weights), x, mode, p.buffers);
    for (double v : out.embeddings.value().data()) EXPECT_EQ(v, 0.0);
    for (double v : out.logits.value().data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(ModelExamples, StandardizedBatchPassesThrough) {
  auto dims = small_dims();
  auto p = transparent_head(dims);
  std::mt19937_64 rng(4);
  auto x = testutil::random_tensor({6, dims.feature}, rng);
  for (std::size_t c = 0; c < dims.feature; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < 6; ++r) m += x(r, c);
    m /= 6.0;
    double v = 0.0;
    for (std::size_t r = 0; r < 6; ++r) v += (x(r, c) - m) * (x(r, c) - m);
    const double sd = std::sqrt(v / 6.0);
    for (std::size_t r = 0; r < 6; ++r) x(r, c) = (x(r, c) - m) / sd;
  }
  auto head = forward_mixed(as_constants(p.weights), V::constant(x), Mode::train, p.buffers);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(head.embeddings.value()[i], x[i], 1e-6);
}

TEST(ModelExamples, CapturedStatsMatchRecomputation) {
  std::mt19937_64 rng(5);
  auto f = testutil::random_tensor({7, 3}, rng);
  for (std::size_t r : {1u, 4u}) f(r, 2) = 0.25;  // domain 2 is constant in column 2
  f(1, 0) = 0.5;
  f(4, 0) = 0.5;
  const std::vector<int> domains = {0, 2, 0, 1, 2, 1, 0};
  auto stats = capture_domain_stats<double>(f, domains);
  ASSERT_EQ(stats.size(), 3u);
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const int d = stats[k].domain_id;
    EXPECT_EQ(d, static_cast<int>(k));
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < domains.size(); ++i) {
      if (domains[i] == d) rows.push_back(i);
    }
    EXPECT_EQ(stats[k].sample_count, rows.size());
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (auto r : rows) m += f(r, c);
      m /= static_cast<double>(rows.size());
      double v = 0.0;
      for (auto r : rows) v += (f(r, c) - m) * (f(r, c) - m);
      const double sd = std::max(std::sqrt(v / static_cast<double>(rows.size())), 1e-5);
      EXPECT_NEAR(stats[k].mean[c], m, 1e-15);
      EXPECT_NEAR(stats[k].std[c], sd, 1e-15);
      EXPECT_GT(stats[k].std[c], 0.0);
    }
  }
  EXPECT_EQ(stats[2].std[0], 1e-5);
  EXPECT_EQ(stats[2].std[2], 1e-5);
}

TEST(ModelErrors, CaptureNeedsTwoSamplesPerDomain) {
  std::mt19937_64 rng(6);
  auto f = testutil::random_tensor({3, 2}, rng);
  const std::vector<int> domains = {0, 0, 1};
  EXPECT_THROW(capture_domain_stats<double>(f, domains), std::invalid_argument);
}

TEST(ModelErrors, DimensionMismatch) {
  auto dims = small_dims();
  auto p = init_params<double>(dims, 1);
  auto x = V::constant(Tensor<double>::zeros({3, dims.input + 1}));
  EXPECT_THROW(forward(as_constants(p.weights), x, Mode::train, p.buffers), ShapeError);
  auto pre = V::constant(Tensor<double>::zeros({3, dims.feature + 2}));
  EXPECT_THROW(forward_mixed(as_constants(p.weights), pre, Mode::train, p.buffers), ShapeError);
  EXPECT_THROW(init_params<double>(ModelDims{0, 1, 1, 1, 1}, 0), std::invalid_argument);
}

TEST(ModelInvariants, InitializationIsBoundedAndSeeded) {
  auto dims = small_dims();
  auto a = init_params<double>(dims, 9);
  auto b = init_params<double>(dims, 9);
  auto c = init_params<double>(dims, 10);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  const double limit = std::sqrt(6.0 / static_cast<double>(dims.input + dims.hidden));
  for (double v : a.weights.trunk0_w.data()) EXPECT_LE(std::abs(v), limit);
  EXPECT_EQ(a.dims().classes, dims.classes);
  EXPECT_EQ(a.weights.classifier_w.dim(1), dims.classes);
}

TEST(ModelProperties, TrainModeStandardizesEachDimension) {
  auto dims = small_dims();
  auto p = transparent_head(dims);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t b = 2 + static_cast<std::size_t>(trial) * 3;
    auto pre = testutil::random_tensor({b, dims.feature}, rng, -3.0, 3.0);
    auto head = forward_mixed(as_constants(p.weights), V::constant(pre), Mode::train, p.buffers);
    const auto& e = head.embeddings.value();
    auto moments = [&](const Tensor<double>& t, std::size_t c) {
      double m = 0.0;
      for (std::size_t r = 0; r < b; ++r) m += t(r, c);
      m /= static_cast<double>(b);
      double v = 0.0;
      for (std::size_t r = 0; r < b; ++r) v += (t(r, c) - m) * (t(r, c) - m);
      return std::pair{m, v / static_cast<double>(b)};
    };
    for (std::size_t c = 0; c < dims.feature; ++c) {
      const auto [m, v] = moments(e, c);
      const double in_var = moments(pre, c).second;
      EXPECT_LT(std::abs(m), 1e-5);
      EXPECT_NEAR(v, in_var / (in_var + kNormEps), 1e-10);
    }
  }
}

TEST(ModelProperties, ForwardIsPure) {
  auto dims = small_dims();
  auto p = init_params<double>(dims, 8);
  std::mt19937_64 rng(8);
  auto x = V::constant(testutil::random_tensor({5, dims.input}, rng));
  for (Mode mode : {Mode::train, Mode::eval}) {
    auto a = forward(as_constants(p.weights), x, mode, p.buffers);
    auto b = forward(as_constants(p.weights), x, mode, p.buffers);
    EXPECT_EQ(a.embeddings.value(), b.embeddings.value());
    EXPECT_EQ(a.logits.value(), b.logits.value());
  }
}

TEST(ModelProperties, BatchPermutationEquivariance) {
  auto dims = small_dims();
  auto p = init_params<double>(dims, 12);
  std::mt19937_64 rng(12);
  const std::size_t b = 8;
  auto x = testutil::random_tensor({b, dims.input}, rng);
  const std::vector<int> domains = {0, 1, 0, 1, 2, 2, 0, 1};
  std::vector<std::size_t> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> xp(x.shape());
  std::vector<int> dp(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t d = 0; d < dims.input; ++d) xp(i, d) = x(perm[i], d);
    dp[i] = domains[perm[i]];
  }
  auto a = forward(as_constants(p.weights), V::constant(x), Mode::train, p.buffers,
                   std::span<const int>(domains));
  auto c = forward(as_constants(p.weights), V::constant(xp), Mode::train, p.buffers,
                   std::span<const int>(dp));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < dims.classes; ++k) {
      EXPECT_NEAR(c.logits.value()(i, k), a.logits.value()(perm[i], k), 1e-12);
    }
  }
  ASSERT_EQ(a.domain_stats.size(), c.domain_stats.size());
  for (std::size_t k = 0; k < a.domain_stats.size(); ++k) {
    EXPECT_EQ(a.domain_stats[k].domain_id, c.domain_stats[k].domain_id);
    for (std::size_t d = 0; d < dims.feature; ++d) {
      EXPECT_NEAR(a.domain_stats[k].mean[d], c.domain_stats[k].mean[d], 1e-12);
      EXPECT_NEAR(a.domain_stats[k].std[d], c.domain_stats[k].std[d], 1e-12);
    }
  }
}

TEST(ModelExamples, ForwardMixedOnOwnFeaturesIsConsistent) {
  auto dims = small_dims();
  auto p = init_params<double>(dims, 13);
  std::mt19937_64 rng(13);
  auto x = V::constant(testutil::random_tensor({6, dims.input}, rng));
  auto theta = as_constants(p.weights);
  auto full = forward(theta, x, Mode::train, p.buffers);
  auto head = forward_mixed(theta, V::constant(full.pre_norm_features.value()), Mode::train,
                            p.buffers);
  EXPECT_EQ(head.embeddings.value(), full.embeddings.value());
  EXPECT_EQ(head.logits.value(), full.logits.value());
}

TEST(ModelExamples, ForwardMixedGradientMatchesFiniteDifferences) {
  auto dims = small_dims();
  auto p = init_params<double>(dims, 14);
  std::mt19937_64 rng(14);
  auto pre = testutil::random_tensor({6, dims.feature}, rng);
  const std::vector<int> ids = {0, 0, 1, 1, 2, 2};
  auto loss_at = [&](const ParamSet<V>& theta) {
    auto h = forward_mixed(theta, V::constant(pre), Mode::train, p.buffers);
    return id_cross_entropy(h.logits, ids);
  };
  auto theta = as_leaves(p.weights);
  auto g = grad(loss_at(theta), theta.embed_w);
  auto f = [&](const Tensor<double>& w) {
    auto t = as_constants(p.weights);
    t.embed_w = V::constant(w);
    return loss_at(t).item();
  };
  auto fd = finite_diff_grad<double>(f, p.weights.embed_w);
  EXPECT_LT(max_relative_error<double>(g.value().data(), fd.data()), 1e-4);
  // Gradients reach the affine parameters of the normalization layer as well.
  auto gs = grad(loss_at(theta), theta.norm_scale);
  double norm = 0.0;
  for (double v : gs.value().data()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(ModelProperties, EvalModeUsesRunningStatistics) {
  auto dims = small_dims();
  auto p = transparent_head(dims);
  std::mt19937_64 rng(15);
  auto pre = testutil::random_tensor({3, dims.feature}, rng);
  p.buffers.running_mean = Tensor<double>(Shape{dims.feature}, 0.5);
  p.buffers.running_var = Tensor<double>(Shape{dims.feature}, 4.0);
  auto head = forward_mixed(as_constants(p.weights), V::constant(pre), Mode::eval, p.buffers);
  for (std::size_t i = 0; i < pre.numel(); ++i) {
    EXPECT_NEAR(head.embeddings.value()[i], (pre[i] - 0.5) / std::sqrt(4.0 + kNormEps), 1e-12);
  }
}

TEST(ModelProperties, RunningStatsFollowMomentum) {
  NormBuffers<double> b{Tensor<double>::zeros({2}), Tensor<double>::ones({2})};
  update_running_stats(b, Tensor<double>::vector({1.0, 2.0}), Tensor<double>::vector({3.0, 5.0}));
  EXPECT_NEAR(b.running_mean[0], 0.1, 1e-15);
  EXPECT_NEAR(b.running_mean[1], 0.2, 1e-15);
  EXPECT_NEAR(b.running_var[0], 0.9 + 0.3, 1e-15);
  EXPECT_NEAR(b.running_var[1], 0.9 + 0.5, 1e-15);
  EXPECT_THROW(update_running_stats(b, Tensor<double>::zeros({3}), Tensor<double>::zeros({2})),
               ShapeError);
}
