#pragma once

// Episodic meta-learning with a differentiable inner step.
//
// Each iteration splits a P x K batch into a meta-train half (some domains) and
// a meta-test half (one held-out domain), takes one inner step
//     theta' = theta - alpha * grad L_mtr(theta)
// keeping theta' attached to theta, and updates theta with AdamW on
//     grad_theta [ L_mtr(theta) + L_mte(theta') ].
// With MLR on, the meta-test pre-norm features are mixed with Gaussian samples
// drawn from each meta-train domain's feature statistics before the head.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metareid/autodiff.hpp"
#include "metareid/data.hpp"
#include "metareid/losses.hpp"
#include "metareid/model.hpp"
#include "metareid/optim.hpp"

namespace metareid {

enum class InnerOptimizer { sgd_differentiable, adam_frozen_state };

struct TrainConfig {
  double inner_lr = 3.5e-4;  // alpha after warmup
  double outer_lr = 3.5e-4;  // beta after warmup
  double warmup_start_factor = 0.1;  // both rates start at factor * target
  std::size_t warmup_iters = 10;
  std::size_t total_iters = 1000;
  int identities_per_batch = 16;  // P
  int samples_per_identity = 4;   // K
  double weight_decay = 5e-4;
  double grad_clip = 10.0;
  bool mlr_enabled = true;
  InnerOptimizer inner_optimizer = InnerOptimizer::sgd_differentiable;
  double lambda_alpha = 1.0;  // lambda ~ Beta(lambda_alpha, lambda_beta)
  double lambda_beta = 1.0;
  std::optional<double> lambda_override;
  bool include_unmixed_meta_test = false;
  bool stats_ema = false;
  std::uint64_t seed = 0;
  LossConfig loss;
  ModelDims model;  // input and classes are taken from the data

  [[nodiscard]] std::size_t batch_size() const {
    return static_cast<std::size_t>(identities_per_batch * samples_per_identity);
  }
  /// Linear warmup over warmup_iters, constant afterwards. `iteration` is 1-based.
  [[nodiscard]] double lr_factor(std::size_t iteration) const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Episode split
// ---------------------------------------------------------------------------

struct EpisodeSplit {
  EpisodeBatch meta_train;
  EpisodeBatch meta_test;
  /// Set when the batch could not be split by domain and each identity's rows
  /// were halved instead.
  bool fallback = false;
};

EpisodeSplit split_episode(const EpisodeBatch& batch, std::mt19937_64& rng);

/// Empty when disjointness, coverage and >= 2 rows per identity per half hold.
std::vector<std::string> split_violations(const EpisodeBatch& batch, const EpisodeSplit& split);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Persistent moments for the adam_frozen_state inner step.
template <typename T>
struct InnerAdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
};

template <typename T>
struct InnerResult {
  std::vector<Var<T>> adapted;  // theta'
  InnerAdamState<T> state;      // moments after this step
};

/// theta' from one inner step. sgd_differentiable: theta - alpha * g with g
/// graph-connected. adam_frozen_state: Adam step where the previous moments and
/// the second-moment denominator are constants; the current gradient stays
/// connected.
template <typename T>
InnerResult<T> inner_update(std::span<const Var<T>> theta, const Var<T>& loss_mtr, double alpha,
                            InnerOptimizer mode, const InnerAdamState<T>& state = {},
                            bool differentiable = true);

/// One [rows, F] matrix per domain, elementwise N(mean, std^2).
template <typename T>
std::vector<Tensor<T>> sample_domain_features(std::span<const DomainStats<T>> stats,
                                              std::size_t rows, std::mt19937_64& rng);

/// lambda * features + (1 - lambda) * samples; samples are constants.
template <typename T>
Var<T> mix_features(const Var<T>& features, const Tensor<T>& samples, double lambda);

double draw_lambda(const TrainConfig& cfg, std::mt19937_64& rng);

/// Random draws consumed by one meta-test pass, recorded so a finite-difference
/// check can replay them.
template <typename T>
struct MlrDraws {
  std::vector<Tensor<T>> samples;
  std::vector<double> lambdas;
};

template <typename T>
using ScalarLossFn = std::function<Var<T>(std::span<const Var<T>> params)>;

template <typename T>
struct BilevelTerms {
  Var<T> loss_mtr;
  Var<T> loss_mte;
  Var<T> objective;  // loss_mtr + loss_mte
  InnerAdamState<T> inner_state;
};

/// L_mtr(theta) + L_mte(theta') for arbitrary loss callables.
template <typename T>
BilevelTerms<T> bilevel_objective(std::span<const Var<T>> theta, const ScalarLossFn<T>& mtr,
                                  const ScalarLossFn<T>& mte, double alpha, InnerOptimizer mode,
                                  const InnerAdamState<T>& inner_state = {},
                                  bool differentiable = true);

template <typename T>
struct MetaObjective {
  BilevelTerms<T> terms;
  std::vector<DomainStats<T>> domain_stats;
  MlrDraws<T> draws;
  Tensor<T> batch_mean;  // MLR-layer statistics of the meta-train pass
  Tensor<T> batch_var;
};

/// The full model objective for one split. Draws come from `frozen` if given,
/// else from `rng` (required when MLR is on and nothing is frozen).
/// With cfg.stats_ema and a `stats_store`, captured statistics are folded into
/// the store and sampling uses the stored values.
template <typename T>
MetaObjective<T> build_meta_objective(const ParamSet<Var<T>>& theta, const NormBuffers<T>& buffers,
                                      const EpisodeSplit& split, const TrainConfig& cfg,
                                      double inner_lr, const InnerAdamState<T>& inner_state,
                                      std::mt19937_64* rng, const MlrDraws<T>* frozen,
                                      bool differentiable = true,
                                      std::map<int, DomainStats<T>>* stats_store = nullptr);

template <typename T>
struct MetaGradient {
  std::vector<Tensor<T>> grads;  // ParamSet order
  double loss_mtr = 0.0;
  double loss_mte = 0.0;
  MetaObjective<T> objective;
};

template <typename T>
MetaGradient<T> compute_meta_gradient(const ModelParams<T>& params, const EpisodeSplit& split,
                                      const TrainConfig& cfg, double inner_lr,
                                      const InnerAdamState<T>& inner_state, std::mt19937_64* rng,
                                      const MlrDraws<T>* frozen = nullptr,
                                      std::map<int, DomainStats<T>>* stats_store = nullptr);

/// Objective value only, for finite differences over flattened parameters.
template <typename T>
T meta_objective_value(const ModelParams<T>& params, const EpisodeSplit& split,
                       const TrainConfig& cfg, double inner_lr,
                       const InnerAdamState<T>& inner_state, const MlrDraws<T>& frozen);

template <typename T>
Tensor<T> flatten(const ParamSet<Tensor<T>>& weights);

template <typename T>
ParamSet<Tensor<T>> unflatten(const Tensor<T>& flat, const ParamSet<Tensor<T>>& like);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct StepReport {
  std::size_t iteration = 0;
  double loss_mtr = 0.0;
  std::optional<double> loss_mte;  // absent for baseline steps
  double grad_norm = 0.0;          // before clipping
  double lr = 0.0;                 // outer rate used
  double inner_lr = 0.0;
  std::vector<double> lambdas;
  bool skipped = false;
  bool fallback_split = false;
  std::size_t split_violations = 0;
};

template <typename T>
struct TrainState {
  ModelParams<T> params;
  AdamState<T> outer;
  InnerAdamState<T> inner;
  std::mt19937_64 sampler_rng;
  std::mt19937_64 mlr_rng;
  std::map<int, DomainStats<T>> stats_store;
  std::size_t iteration = 0;
  int consecutive_skips = 0;
  std::size_t skipped_total = 0;
};

inline constexpr int kMaxConsecutiveSkips = 5;

template <typename T>
TrainState<T> make_train_state(const ModelDims& dims, const TrainConfig& cfg);

/// One meta iteration on a sampled batch. Non-finite losses or gradients skip
/// the update; more than kMaxConsecutiveSkips in a row throws TrainingAborted.
template <typename T>
StepReport meta_step(TrainState<T>& state, const EpisodeBatch& batch, const TrainConfig& cfg);

/// Plain ERM step on the whole batch with the total loss.
template <typename T>
StepReport erm_step(TrainState<T>& state, const EpisodeBatch& batch, const TrainConfig& cfg);

enum class TrainMode { meta, baseline };

template <typename T>
struct TrainResult {
  ModelParams<T> params;
  std::vector<StepReport> trace;
};

/// Model dims for a dataset: input and classes from the data, the rest from cfg.
ModelDims model_dims_for(const Dataset& data, const TrainConfig& cfg);

template <typename T>
TrainResult<T> train_loop(const Dataset& data, const TrainConfig& cfg, TrainMode mode,
                          const std::function<void(const StepReport&)>& on_step = {});

}  // namespace metareid
