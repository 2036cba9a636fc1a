#include "metareid/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "metareid/finite_diff.hpp"
#include "metareid/losses.hpp"

namespace metareid {

namespace {

using V = Var<double>;
using Op = std::function<V(const V&)>;

struct OpCase {
  const char* name;
  Shape shape;
  bool positive;  // inputs drawn from [0.5, 2]
  Op op;
};

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, bool positive) {
  Tensor<double> t(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  for (auto& v : t.data()) v = positive ? pos(rng) : normal(rng);
  return t;
}

std::vector<OpCase> op_cases(std::mt19937_64& rng) {
  auto w = V::constant(random_tensor({4, 3}, rng, false));
  auto row = V::constant(random_tensor({4}, rng, false));
  auto other = V::constant(random_tensor({5, 4}, rng, false));
  auto positive = V::constant(random_tensor({5, 4}, rng, true));
  std::vector<int> ids = {0, 0, 1, 1, 2, 2};
  std::vector<int> labels = {0, 2, 1, 3, 2};
  return {
      {"add", {5, 4}, false, [=](const V& x) { return add(x, other); }},
      {"add_broadcast", {5, 4}, false, [=](const V& x) { return add(x, row); }},
      {"sub", {5, 4}, false, [=](const V& x) { return sub(other, x); }},
      {"mul", {5, 4}, false, [=](const V& x) { return mul(x, mul(x, other)); }},
      {"div", {5, 4}, true, [=](const V& x) { return div(other, x); }},
      {"div_numerator", {5, 4}, false, [=](const V& x) { return div(x, positive); }},
      {"scale_neg", {5, 4}, false, [](const V& x) { return neg(scale(add_scalar(x, 0.5), 3.0)); }},
      {"matmul", {5, 4}, false, [=](const V& x) { return matmul(x, w); }},
      {"matmul_self", {4, 4}, false, [](const V& x) { return matmul(x, transpose(x)); }},
      {"relu", {5, 4}, false, [](const V& x) { return relu(x); }},
      {"square", {5, 4}, false, [](const V& x) { return square(x); }},
      {"sqrt", {5, 4}, true, [](const V& x) { return sqrt(x); }},
      {"exp", {5, 4}, false, [](const V& x) { return exp(x); }},
      {"log", {5, 4}, true, [](const V& x) { return log(x); }},
      {"clamp_min", {5, 4}, false, [](const V& x) { return clamp_min(x, 0.1); }},
      {"sum", {5, 4}, false, [](const V& x) { return square(sum(x)); }},
      {"mean", {5, 4}, false, [](const V& x) { return square(mean(x)); }},
      {"mean_rows", {5, 4}, false, [](const V& x) { return square(mean_rows(x)); }},
      {"var_rows", {5, 4}, false, [](const V& x) { return var_rows(x); }},
      {"sum_cols", {5, 4}, false, [](const V& x) { return square(sum_cols(x)); }},
      {"expand_rows", {4}, false, [](const V& x) { return square(expand_rows(x, 3)); }},
      {"expand_cols", {4}, false, [](const V& x) { return square(expand_cols(x, 3)); }},
      {"logsumexp_rows", {5, 4}, false, [](const V& x) { return logsumexp_rows(x); }},
      {"pairwise_sqdist", {6, 3}, false, [](const V& x) { return pairwise_sqdist(x); }},
      {"pairwise_dist", {6, 3}, false, [](const V& x) { return pairwise_dist(x); }},
      {"gather", {5, 4}, false,
       [](const V& x) { return square(gather(x, {0, 2, 4, 2}, {1, 3, 0, 3})); }},
      {"concat_slice", {5, 4}, false,
       [](const V& x) {
         std::vector<V> parts = {slice_rows(x, 1, 3), square(x)};
         return concat_rows<double>(parts);
       }},
      {"pad_rows", {2, 4}, false, [](const V& x) { return square(pad_rows(x, 1, 4)); }},
      {"triplet_batch_hard", {6, 3}, false,
       [ids](const V& x) { return triplet_batch_hard(x, ids, 0.3); }},
      {"id_cross_entropy", {5, 4}, false,
       [labels](const V& x) { return id_cross_entropy(x, labels); }},
  };
}

/// sum(op(x) * r), a scalar whose gradient touches every output entry.
V weighted(const Op& op, const V& x, const V& r) { return sum(mul(op(x), r)); }

CheckResult compare(const std::string& name, const Tensor<double>& analytic,
                    const Tensor<double>& numeric, double tolerance) {
  CheckResult r;
  r.name = name;
  r.tolerance = tolerance;
  r.max_rel_error = max_relative_error<double>(analytic.data(), numeric.data());
  r.pass = r.max_rel_error < tolerance;
  return r;
}

}  // namespace

std::vector<CheckResult> check_op_suite(std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  for (const auto& c : op_cases(rng)) {
    const Tensor<double> x0 = random_tensor(c.shape, rng, c.positive);
    Shape out_shape;
    {
      NoGradGuard ng;
      out_shape = c.op(V::constant(x0)).shape();
    }
    const auto r1 = V::constant(random_tensor(out_shape, rng, false));
    const auto r2 = V::constant(random_tensor(c.shape, rng, false));

    auto first = [&](const Tensor<double>& x) {
      NoGradGuard ng;
      return weighted(c.op, V::constant(x), r1).item();
    };
    auto x = V::leaf(x0);
    auto g = grad(weighted(c.op, x, r1), x, {.create_graph = true});
    out.push_back(compare(std::string("op.") + c.name, g.value(),
                          finite_diff_grad<double>(first, x0), tolerance));

    // Second order: d/dx sum(grad_x f(x) * r2).
    auto second = [&](const Tensor<double>& xv) {
      auto leaf = V::leaf(xv);
      auto gv = grad(weighted(c.op, leaf, r1), leaf);
      double acc = 0.0;
      for (std::size_t i = 0; i < gv.numel(); ++i) acc += gv.value()[i] * r2.value()[i];
      return acc;
    };
    auto gg = grad(sum(mul(g, r2)), x, {.allow_unused = true});
    out.push_back(compare(std::string("op2.") + c.name, gg.value(),
                          finite_diff_grad<double>(second, x0), tolerance));
  }
  return out;
}

QuadraticMetaGradient quadratic_meta_gradient(double theta, double alpha) {
  auto half_square = [](std::span<const V> p) { return scale(square(p[0]), 0.5); };
  const V t = V::leaf(Tensor<double>::scalar(theta));
  const std::vector<V> params = {t};
  auto terms = bilevel_objective<double>(params, half_square, half_square, alpha,
                                         InnerOptimizer::sgd_differentiable);
  QuadraticMetaGradient out;
  out.meta = grad(terms.objective, t).item();

  const double adapted = theta - alpha * theta;
  auto at_adapted = V::leaf(Tensor<double>::scalar(adapted));
  out.first_order = grad(half_square(std::span<const V>(&t, 1)), t).item() +
                    grad(scale(square(at_adapted), 0.5), at_adapted).item();
  return out;
}

MetaCheckInstance make_meta_check_instance(std::uint64_t seed, bool mlr) {
  GenSpec spec;
  spec.identities = 6;
  spec.domains = 4;
  spec.dim = 6;
  spec.samples = 4;
  spec.seed = seed;
  const Dataset data = generate(spec);

  MetaCheckInstance inst;
  inst.cfg.identities_per_batch = 4;
  inst.cfg.samples_per_identity = 4;
  inst.cfg.inner_lr = 0.05;
  inst.cfg.mlr_enabled = mlr;
  inst.cfg.seed = seed;
  inst.cfg.model = ModelDims{spec.dim, 16, 6, 4, static_cast<std::size_t>(spec.identities)};

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  inst.params = init_params<double>(inst.cfg.model, rng());
  const auto batch = sample_pk_batch(data, inst.cfg.identities_per_batch,
                                     inst.cfg.samples_per_identity, rng);
  inst.split = split_episode(batch, rng);
  if (mlr) {
    auto theta = as_leaves(inst.params.weights);
    auto obj = build_meta_objective<double>(theta, inst.params.buffers, inst.split, inst.cfg,
                                            inst.cfg.inner_lr, inst.inner_state, &rng, nullptr,
                                            false);
    inst.draws = obj.draws;
  }
  return inst;
}

CheckResult check_meta_gradient(const MetaCheckInstance& inst, double tolerance,
                                const std::string& name) {
  auto mg = compute_meta_gradient<double>(inst.params, inst.split, inst.cfg, inst.cfg.inner_lr,
                                          inst.inner_state, nullptr,
                                          inst.cfg.mlr_enabled ? &inst.draws : nullptr);
  ParamSet<Tensor<double>> grads = ParamSet<Tensor<double>>::from_vector(mg.grads);
  const Tensor<double> analytic = flatten(grads);

  const Tensor<double> theta0 = flatten(inst.params.weights);
  auto objective = [&](const Tensor<double>& flat) {
    ModelParams<double> p = inst.params;
    p.weights = unflatten(flat, inst.params.weights);
    return meta_objective_value<double>(p, inst.split, inst.cfg, inst.cfg.inner_lr,
                                        inst.inner_state, inst.draws);
  };
  const auto numeric = finite_diff_grad_adaptive(objective, theta0);
  auto result = compare(name, analytic, numeric.grad, tolerance);
  result.refined = numeric.refined;
  return result;
}

std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opts) {
  auto out = check_op_suite(opts.seed, opts.tolerance);

  const auto q = quadratic_meta_gradient(1.0, 0.1);
  constexpr double kClosedFormTol = 1e-10;
  out.push_back({"quadratic.meta_gradient", std::abs(q.meta - 1.81) / 1.81, kClosedFormTol,
                 std::abs(q.meta - 1.81) < kClosedFormTol});
  out.push_back({"quadratic.first_order", std::abs(q.first_order - 1.9) / 1.9, kClosedFormTol,
                 std::abs(q.first_order - 1.9) < kClosedFormTol &&
                     std::abs(q.meta - q.first_order) > 1e-3});

  for (int i = 0; i < opts.instances; ++i) {
    const std::uint64_t s = opts.seed * 1000 + static_cast<std::uint64_t>(i);
    out.push_back(check_meta_gradient(make_meta_check_instance(s), opts.tolerance,
                                      "meta_objective.seed" + std::to_string(s)));
  }
  return out;
}

}  // namespace metareid
