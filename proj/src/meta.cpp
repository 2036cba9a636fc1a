#include "metareid/meta.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

#include "metareid/errors.hpp"

namespace metareid {

double TrainConfig::lr_factor(std::size_t iteration) const {
  if (warmup_iters == 0) return 1.0;
  const double progress =
      std::min(1.0, static_cast<double>(iteration > 0 ? iteration - 1 : 0) /
                        static_cast<double>(warmup_iters));
  return warmup_start_factor + (1.0 - warmup_start_factor) * progress;
}

void TrainConfig::validate() const {
  auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!nonneg(inner_lr)) throw ValidationError("train: inner_lr must be finite and >= 0");
  if (!nonneg(outer_lr)) throw ValidationError("train: outer_lr must be finite and >= 0");
  if (!(warmup_start_factor > 0.0 && warmup_start_factor <= 1.0)) {
    throw ValidationError("train: warmup_start_factor must lie in (0, 1]");
  }
  if (total_iters > 0 && warmup_iters > total_iters) {
    throw ValidationError("train: warmup_iters must not exceed total_iters");
  }
  if (identities_per_batch < 2) throw ValidationError("train: P must be >= 2");
  if (samples_per_identity < 2) throw ValidationError("train: K must be >= 2");
  if (!nonneg(weight_decay)) throw ValidationError("train: weight_decay must be >= 0");
  if (!(grad_clip > 0.0)) throw ValidationError("train: grad_clip must be > 0");
  if (!(lambda_alpha > 0.0) || !(lambda_beta > 0.0)) {
    throw ValidationError("train: lambda Beta parameters must be > 0");
  }
  if (lambda_override && !(*lambda_override >= 0.0 && *lambda_override <= 1.0)) {
    throw ValidationError("train: lambda_override must lie in [0, 1]");
  }
  loss.validate();
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

namespace {

bool half_is_valid(const EpisodeBatch& batch, std::span<const std::size_t> positions) {
  std::map<int, int> counts;
  for (std::size_t p : positions) ++counts[batch.ids[p]];
  if (counts.size() < 2) return false;
  return std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; });
}

}  // namespace

EpisodeSplit split_episode(const EpisodeBatch& batch, std::mt19937_64& rng) {
  std::vector<int> domains(batch.domains.begin(), batch.domains.end());
  std::sort(domains.begin(), domains.end());
  domains.erase(std::unique(domains.begin(), domains.end()), domains.end());

  std::vector<std::vector<std::size_t>> test_sets;
  std::vector<std::vector<std::size_t>> train_sets;
  if (domains.size() >= 2) {
    for (int d : domains) {
      std::vector<std::size_t> test;
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        (batch.domains[i] == d ? test : train).push_back(i);
      }
      if (half_is_valid(batch, test) && half_is_valid(batch, train)) {
        test_sets.push_back(std::move(test));
        train_sets.push_back(std::move(train));
      }
    }
  }

  EpisodeSplit split;
  if (!test_sets.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, test_sets.size() - 1);
    const std::size_t chosen = pick(rng);
    split.meta_train = batch.select(train_sets[chosen]);
    split.meta_test = batch.select(test_sets[chosen]);
    return split;
  }

  // Per-identity halving.
  split.fallback = true;
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < batch.size(); ++i) by_id[batch.ids[i]].push_back(i);
  if (by_id.size() < 2) {
    throw ValidationError("split: batch holds a single identity");
  }
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& [id, positions] : by_id) {
    if (positions.size() < 4) {
      throw ValidationError("split: identity " + std::to_string(id) +
                            " needs >= 4 rows for a per-identity split, has " +
                            std::to_string(positions.size()));
    }
    std::shuffle(positions.begin(), positions.end(), rng);
    const std::size_t half = positions.size() / 2;
    train.insert(train.end(), positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(half));
    test.insert(test.end(), positions.begin() + static_cast<std::ptrdiff_t>(half), positions.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  split.meta_train = batch.select(train);
  split.meta_test = batch.select(test);
  return split;
}

std::vector<std::string> split_violations(const EpisodeBatch& batch, const EpisodeSplit& split) {
  std::vector<std::string> out;
  std::multiset<std::size_t> all(batch.rows.begin(), batch.rows.end());
  std::multiset<std::size_t> tr(split.meta_train.rows.begin(), split.meta_train.rows.end());
  std::multiset<std::size_t> te(split.meta_test.rows.begin(), split.meta_test.rows.end());
  for (std::size_t r : tr) {
    if (te.count(r)) {
      out.push_back("row " + std::to_string(r) + " appears in both halves");
    }
  }
  std::multiset<std::size_t> joined = tr;
  joined.insert(te.begin(), te.end());
  if (joined != all) out.push_back("halves do not cover the batch exactly");
  for (const EpisodeBatch* half : {&split.meta_train, &split.meta_test}) {
    std::map<int, int> counts;
    for (int id : half->ids) ++counts[id];
    for (const auto& [id, n] : counts) {
      if (n < 2) out.push_back("identity " + std::to_string(id) + " has no positive in its half");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inner update, sampling, mixing
// ---------------------------------------------------------------------------

template <typename T>
InnerResult<T> inner_update(std::span<const Var<T>> theta, const Var<T>& loss_mtr, double alpha,
                            InnerOptimizer mode, const InnerAdamState<T>& state,
                            bool differentiable) {
  auto grads = grad(loss_mtr, theta, {.create_graph = differentiable, .allow_unused = true});
  for (const auto& g : grads) g.value().check_finite("inner_update gradient");

  InnerResult<T> out;
  out.adapted.reserve(theta.size());
  if (mode == InnerOptimizer::sgd_differentiable) {
    for (std::size_t k = 0; k < theta.size(); ++k) {
      out.adapted.push_back(sub(theta[k], scale(grads[k], alpha)));
    }
    return out;
  }

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  out.state.step = state.step + 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(out.state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(out.state.step));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const Shape& shape = theta[k].shape();
    const Tensor<T> m_prev = state.m.empty() ? Tensor<T>(shape) : state.m[k];
    const Tensor<T> v_prev = state.v.empty() ? Tensor<T>(shape) : state.v[k];
    auto m = add(scale(Var<T>::constant(m_prev), beta1), scale(grads[k], 1.0 - beta1));
    Tensor<T> v(shape);
    Tensor<T> denom(shape);
    const auto& g = grads[k].value();
    for (std::size_t i = 0; i < v.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      v[i] = static_cast<T>(beta2 * static_cast<double>(v_prev[i]) + (1.0 - beta2) * gi * gi);
      denom[i] = static_cast<T>(std::sqrt(static_cast<double>(v[i]) / bc2) + eps);
    }
    auto step = div(scale(m, alpha / bc1), Var<T>::constant(denom));
    out.adapted.push_back(sub(theta[k], step));
    out.state.m.push_back(m.value());
    out.state.v.push_back(std::move(v));
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> sample_domain_features(std::span<const DomainStats<T>> stats,
                                              std::size_t rows, std::mt19937_64& rng) {
  if (stats.empty()) throw std::invalid_argument("sample_domain_features: no domain statistics");
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<Tensor<T>> out;
  for (const auto& s : stats) {
    const std::size_t dim = s.mean.numel();
    if (s.std.numel() != dim) throw ShapeError("sample_domain_features: mean/std size mismatch");
    for (T sd : s.std.data()) {
      if (!(sd > T{0})) {
        throw std::invalid_argument("sample_domain_features: non-positive std for domain " +
                                    std::to_string(s.domain_id));
      }
    }
    Tensor<T> z(Shape{rows, dim});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t d = 0; d < dim; ++d) {
        z(r, d) = static_cast<T>(static_cast<double>(s.mean[d]) +
                                 static_cast<double>(s.std[d]) * unit(rng));
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

template <typename T>
Var<T> mix_features(const Var<T>& features, const Tensor<T>& samples, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("mix_features: lambda " + std::to_string(lambda) +
                                " outside [0, 1]");
  }
  if (features.shape() != samples.shape()) {
    throw ShapeError("mix_features: features " + shape_str(features.shape()) + " vs samples " +
                     shape_str(samples.shape()));
  }
  Tensor<T> weighted = samples;
  const T w = static_cast<T>(1.0 - lambda);
  for (auto& v : weighted.data()) v *= w;
  return add(scale(features, lambda), Var<T>::constant(std::move(weighted)));
}

double draw_lambda(const TrainConfig& cfg, std::mt19937_64& rng) {
  if (cfg.lambda_override) return *cfg.lambda_override;
  std::gamma_distribution<double> ga(cfg.lambda_alpha, 1.0);
  std::gamma_distribution<double> gb(cfg.lambda_beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

template <typename T>
BilevelTerms<T> bilevel_objective(std::span<const Var<T>> theta, const ScalarLossFn<T>& mtr,
                                  const ScalarLossFn<T>& mte, double alpha, InnerOptimizer mode,
                                  const InnerAdamState<T>& inner_state, bool differentiable) {
  BilevelTerms<T> terms;
  terms.loss_mtr = mtr(theta);
  auto inner = inner_update(theta, terms.loss_mtr, alpha, mode, inner_state, differentiable);
  terms.loss_mte = mte(inner.adapted);
  terms.objective = add(terms.loss_mtr, terms.loss_mte);
  terms.inner_state = std::move(inner.state);
  return terms;
}

namespace {

template <typename T>
void fold_into_store(std::map<int, DomainStats<T>>& store, const DomainStats<T>& s) {
  auto [it, inserted] = store.try_emplace(s.domain_id, s);
  if (inserted) return;
  auto& held = it->second;
  const double keep = 1.0 - kRunningMomentum;
  for (std::size_t d = 0; d < s.mean.numel(); ++d) {
    held.mean[d] = static_cast<T>(keep * held.mean[d] + kRunningMomentum * s.mean[d]);
    held.std[d] = static_cast<T>(std::max(keep * held.std[d] + kRunningMomentum * s.std[d],
                                          kStdFloor));
  }
  held.sample_count = s.sample_count;
}

}  // namespace

template <typename T>
MetaObjective<T> build_meta_objective(const ParamSet<Var<T>>& theta, const NormBuffers<T>& buffers,
                                      const EpisodeSplit& split, const TrainConfig& cfg,
                                      double inner_lr, const InnerAdamState<T>& inner_state,
                                      std::mt19937_64* rng, const MlrDraws<T>* frozen,
                                      bool differentiable,
                                      std::map<int, DomainStats<T>>* stats_store) {
  MetaObjective<T> result;
  const auto x_mtr = Var<T>::constant(split.meta_train.features.template cast<T>());
  const auto x_mte = Var<T>::constant(split.meta_test.features.template cast<T>());
  const std::span<const int> ids_mtr = split.meta_train.ids;
  const std::span<const int> ids_mte = split.meta_test.ids;
  const std::span<const int> dom_mtr = split.meta_train.domains;
  const bool capture = cfg.mlr_enabled;

  ScalarLossFn<T> mtr = [&](std::span<const Var<T>> params) {
    auto p = ParamSet<Var<T>>::from_vector(params);
    auto out = forward(p, x_mtr, Mode::train, buffers,
                       capture ? std::optional<std::span<const int>>(dom_mtr) : std::nullopt);
    result.domain_stats = out.domain_stats;
    result.batch_mean = out.batch_mean;
    result.batch_var = out.batch_var;
    return total_loss(out, ids_mtr, cfg.loss);
  };

  ScalarLossFn<T> mte = [&](std::span<const Var<T>> params) {
    auto p = ParamSet<Var<T>>::from_vector(params);
    if (!cfg.mlr_enabled) {
      return total_loss(forward(p, x_mte, Mode::train, buffers), ids_mte, cfg.loss);
    }
    std::vector<DomainStats<T>> sources = result.domain_stats;
    if (cfg.stats_ema && stats_store) {
      for (auto& s : sources) {
        fold_into_store(*stats_store, s);
        s = stats_store->at(s.domain_id);
      }
    }
    const std::size_t rows = split.meta_test.size();
    if (frozen) {
      if (frozen->samples.size() != sources.size() || frozen->lambdas.size() != sources.size()) {
        throw std::invalid_argument("build_meta_objective: frozen draws do not match the " +
                                    std::to_string(sources.size()) + " meta-train domains");
      }
      result.draws = *frozen;
    } else {
      if (!rng) throw std::invalid_argument("build_meta_objective: MLR needs an rng or frozen draws");
      result.draws.samples = sample_domain_features<T>(sources, rows, *rng);
      for (std::size_t i = 0; i < sources.size(); ++i) {
        result.draws.lambdas.push_back(draw_lambda(cfg, *rng));
      }
    }

    auto features = trunk(p, x_mte);
    Var<T> acc;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      auto mixed = mix_features(features, result.draws.samples[i], result.draws.lambdas[i]);
      auto head = forward_mixed(p, mixed, Mode::train, buffers);
      auto term = total_loss(head.embeddings, head.logits, ids_mte, cfg.loss);
      acc = acc.defined() ? add(acc, term) : term;
    }
    auto loss = scale(acc, 1.0 / static_cast<double>(sources.size()));
    if (cfg.include_unmixed_meta_test) {
      auto head = forward_mixed(p, features, Mode::train, buffers);
      loss = add(loss, total_loss(head.embeddings, head.logits, ids_mte, cfg.loss));
    }
    return loss;
  };

  const auto theta_vec = theta.to_vector();
  result.terms = bilevel_objective<T>(theta_vec, mtr, mte, inner_lr, cfg.inner_optimizer,
                                      inner_state, differentiable);
  return result;
}

template <typename T>
MetaGradient<T> compute_meta_gradient(const ModelParams<T>& params, const EpisodeSplit& split,
                                      const TrainConfig& cfg, double inner_lr,
                                      const InnerAdamState<T>& inner_state, std::mt19937_64* rng,
                                      const MlrDraws<T>* frozen,
                                      std::map<int, DomainStats<T>>* stats_store) {
  auto theta = as_leaves(params.weights);
  MetaGradient<T> out;
  out.objective = build_meta_objective(theta, params.buffers, split, cfg, inner_lr, inner_state,
                                       rng, frozen, true, stats_store);
  const auto theta_vec = theta.to_vector();
  auto grads = grad<T>(out.objective.terms.objective, theta_vec, {.allow_unused = true});
  for (auto& g : grads) out.grads.push_back(g.value());
  out.loss_mtr = static_cast<double>(out.objective.terms.loss_mtr.item());
  out.loss_mte = static_cast<double>(out.objective.terms.loss_mte.item());
  return out;
}

template <typename T>
T meta_objective_value(const ModelParams<T>& params, const EpisodeSplit& split,
                       const TrainConfig& cfg, double inner_lr,
                       const InnerAdamState<T>& inner_state, const MlrDraws<T>& frozen) {
  auto theta = as_leaves(params.weights);
  auto obj = build_meta_objective(theta, params.buffers, split, cfg, inner_lr, inner_state,
                                  nullptr, cfg.mlr_enabled ? &frozen : nullptr, false);
  return obj.terms.objective.item();
}

template <typename T>
Tensor<T> flatten(const ParamSet<Tensor<T>>& weights) {
  std::vector<T> data;
  for (const auto* t : weights.refs()) data.insert(data.end(), t->data().begin(), t->data().end());
  return Tensor<T>::vector(std::move(data));
}

template <typename T>
ParamSet<Tensor<T>> unflatten(const Tensor<T>& flat, const ParamSet<Tensor<T>>& like) {
  ParamSet<Tensor<T>> out = like;
  std::size_t offset = 0;
  for (auto* t : out.refs()) {
    if (offset + t->numel() > flat.numel()) throw ShapeError("unflatten: vector too short");
    std::copy_n(flat.data().begin() + static_cast<std::ptrdiff_t>(offset), t->numel(),
                t->data().begin());
    offset += t->numel();
  }
  if (offset != flat.numel()) throw ShapeError("unflatten: vector too long");
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

template <typename T>
bool all_finite(std::span<const Tensor<T>> ts) {
  return std::all_of(ts.begin(), ts.end(), [](const Tensor<T>& t) { return t.all_finite(); });
}

template <typename T>
StepReport register_skip(TrainState<T>& state, StepReport report) {
  report.skipped = true;
  ++state.skipped_total;
  if (++state.consecutive_skips > kMaxConsecutiveSkips) {
    throw TrainingAborted("training aborted at iteration " + std::to_string(report.iteration) +
                          ": more than " + std::to_string(kMaxConsecutiveSkips) +
                          " consecutive non-finite iterations");
  }
  return report;
}

template <typename T>
bool apply_update(TrainState<T>& state, std::vector<Tensor<T>>& grads, const TrainConfig& cfg,
                  StepReport& report, const Tensor<T>& batch_mean, const Tensor<T>& batch_var) {
  report.grad_norm = clip_global_norm<T>(grads, cfg.grad_clip);
  const ModelParams<T> backup = state.params;
  const AdamState<T> adam_backup = state.outer;
  auto slots = state.params.weights.refs();
  std::vector<Tensor<T>*> params(slots.begin(), slots.end());
  AdamConfig adam;
  adam.weight_decay = cfg.weight_decay;
  adamw_step<T>(params, grads, state.outer, report.lr, adam);
  update_running_stats(state.params.buffers, batch_mean, batch_var);
  if (!state.params.all_finite()) {
    state.params = backup;
    state.outer = adam_backup;
    return false;
  }
  return true;
}

}  // namespace

ModelDims model_dims_for(const Dataset& data, const TrainConfig& cfg) {
  ModelDims dims = cfg.model;
  dims.input = data.dim;
  dims.classes = static_cast<std::size_t>(data.num_identities());
  return dims;
}

template <typename T>
TrainState<T> make_train_state(const ModelDims& dims, const TrainConfig& cfg) {
  TrainState<T> state;
  auto init_rng = stream(cfg.seed, 1);
  state.params = init_params<T>(dims, init_rng());
  state.sampler_rng = stream(cfg.seed, 2);
  state.mlr_rng = stream(cfg.seed, 3);
  return state;
}

template <typename T>
StepReport meta_step(TrainState<T>& state, const EpisodeBatch& batch, const TrainConfig& cfg) {
  StepReport report;
  report.iteration = ++state.iteration;
  const double factor = cfg.lr_factor(report.iteration);
  report.lr = cfg.outer_lr * factor;
  report.inner_lr = cfg.inner_lr * factor;

  const EpisodeSplit split = split_episode(batch, state.sampler_rng);
  const auto violations = split_violations(batch, split);
  report.split_violations = violations.size();
  report.fallback_split = split.fallback;
  if (!violations.empty()) {
    throw std::logic_error("split invariant violated: " + violations.front());
  }

  MetaGradient<T> mg;
  try {
    mg = compute_meta_gradient<T>(state.params, split, cfg, report.inner_lr, state.inner,
                                  &state.mlr_rng, nullptr,
                                  cfg.stats_ema ? &state.stats_store : nullptr);
  } catch (const NonFiniteError&) {
    return register_skip(state, report);
  }
  report.loss_mtr = mg.loss_mtr;
  report.loss_mte = mg.loss_mte;
  report.lambdas = mg.objective.draws.lambdas;
  if (!std::isfinite(mg.loss_mtr) || !std::isfinite(mg.loss_mte) ||
      !all_finite<T>(mg.grads)) {
    return register_skip(state, report);
  }
  if (!apply_update(state, mg.grads, cfg, report, mg.objective.batch_mean,
                    mg.objective.batch_var)) {
    return register_skip(state, report);
  }
  state.inner = std::move(mg.objective.terms.inner_state);
  state.consecutive_skips = 0;
  return report;
}

template <typename T>
StepReport erm_step(TrainState<T>& state, const EpisodeBatch& batch, const TrainConfig& cfg) {
  StepReport report;
  report.iteration = ++state.iteration;
  report.lr = cfg.outer_lr * cfg.lr_factor(report.iteration);

  auto theta = as_leaves(state.params.weights);
  const auto x = Var<T>::constant(batch.features.template cast<T>());
  auto out = forward(theta, x, Mode::train, state.params.buffers);
  auto loss = total_loss(out, batch.ids, cfg.loss);
  report.loss_mtr = static_cast<double>(loss.item());
  const auto theta_vec = theta.to_vector();
  auto grads_var = grad<T>(loss, theta_vec, {.allow_unused = true});
  std::vector<Tensor<T>> grads;
  for (auto& g : grads_var) grads.push_back(g.value());
  if (!std::isfinite(report.loss_mtr) || !all_finite<T>(grads)) {
    return register_skip(state, report);
  }
  if (!apply_update(state, grads, cfg, report, out.batch_mean, out.batch_var)) {
    return register_skip(state, report);
  }
  state.consecutive_skips = 0;
  return report;
}

template <typename T>
TrainResult<T> train_loop(const Dataset& data, const TrainConfig& cfg, TrainMode mode,
                          const std::function<void(const StepReport&)>& on_step) {
  cfg.validate();
  auto state = make_train_state<T>(model_dims_for(data, cfg), cfg);
  TrainResult<T> result;
  bool warned = false;
  for (std::size_t t = 0; t < cfg.total_iters; ++t) {
    const EpisodeBatch batch = sample_pk_batch(data, cfg.identities_per_batch,
                                               cfg.samples_per_identity, state.sampler_rng);
    StepReport report = mode == TrainMode::meta ? meta_step(state, batch, cfg)
                                                : erm_step(state, batch, cfg);
    if (report.fallback_split && !warned) {
      std::cerr << "warning: single-domain batch at iteration " << report.iteration
                << ", using per-identity meta-train/meta-test split\n";
      warned = true;
    }
    if (on_step) on_step(report);
    result.trace.push_back(std::move(report));
  }
  result.params = std::move(state.params);
  return result;
}

#define METAREID_INSTANTIATE(T)                                                                 \
  template InnerResult<T> inner_update<T>(std::span<const Var<T>>, const Var<T>&, double,        \
                                          InnerOptimizer, const InnerAdamState<T>&, bool);       \
  template std::vector<Tensor<T>> sample_domain_features<T>(std::span<const DomainStats<T>>,     \
                                                            std::size_t, std::mt19937_64&);      \
  template Var<T> mix_features<T>(const Var<T>&, const Tensor<T>&, double);                     \
  template BilevelTerms<T> bilevel_objective<T>(std::span<const Var<T>>, const ScalarLossFn<T>&, \
                                                const ScalarLossFn<T>&, double, InnerOptimizer,  \
                                                const InnerAdamState<T>&, bool);                 \
  template MetaObjective<T> build_meta_objective<T>(                                            \
      const ParamSet<Var<T>>&, const NormBuffers<T>&, const EpisodeSplit&, const TrainConfig&,   \
      double, const InnerAdamState<T>&, std::mt19937_64*, const MlrDraws<T>*, bool,             \
      std::map<int, DomainStats<T>>*);                                                           \
  template MetaGradient<T> compute_meta_gradient<T>(                                            \
      const ModelParams<T>&, const EpisodeSplit&, const TrainConfig&, double,                    \
      const InnerAdamState<T>&, std::mt19937_64*, const MlrDraws<T>*,                            \
      std::map<int, DomainStats<T>>*);                                                           \
  template T meta_objective_value<T>(const ModelParams<T>&, const EpisodeSplit&,                \
                                     const TrainConfig&, double, const InnerAdamState<T>&,       \
                                     const MlrDraws<T>&);                                        \
  template Tensor<T> flatten<T>(const ParamSet<Tensor<T>>&);                                    \
  template ParamSet<Tensor<T>> unflatten<T>(const Tensor<T>&, const ParamSet<Tensor<T>>&);      \
  template TrainState<T> make_train_state<T>(const ModelDims&, const TrainConfig&);             \
  template StepReport meta_step<T>(TrainState<T>&, const EpisodeBatch&, const TrainConfig&);    \
  template StepReport erm_step<T>(TrainState<T>&, const EpisodeBatch&, const TrainConfig&);     \
  template TrainResult<T> train_loop<T>(const Dataset&, const TrainConfig&, TrainMode,          \
                                        const std::function<void(const StepReport&)>&);

METAREID_INSTANTIATE(float)
METAREID_INSTANTIATE(double)
#undef METAREID_INSTANTIATE

}  // namespace metareid
