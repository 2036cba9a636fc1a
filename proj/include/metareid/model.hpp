#pragma once

// Embedding network: a two-layer MLP trunk, the MLR normalization layer, a
// linear embedding head and a linear identity classifier.
//
//   x -> relu(x W0 + b0) -> (. W1 + b1) = F   (pre-norm features)
//     -> scale * standardize(F) + shift        (MLR layer)
//     -> . We = embedding -> . Wc = logits
//
// Per-domain statistics of F are what the meta-engine samples from.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "metareid/autodiff.hpp"
#include "metareid/tensor.hpp"

namespace metareid {

struct ModelDims {
  std::size_t input = 32;
  std::size_t hidden = 64;
  std::size_t feature = 64;
  std::size_t embed = 32;
  std::size_t classes = 32;
};

/// All learnable arrays, generic over the holder (Tensor for storage, Var
/// while building a graph).
template <typename V>
struct ParamSet {
  V trunk0_w;
  V trunk0_b;
  V trunk1_w;
  V trunk1_b;
  V norm_scale;
  V norm_shift;
  V embed_w;
  V classifier_w;

  static constexpr std::size_t kCount = 8;
  static constexpr std::array<std::string_view, kCount> kNames = {
      "trunk0.weight", "trunk0.bias", "trunk1.weight", "trunk1.bias",
      "mlr.scale",     "mlr.shift",   "embed.weight",  "classifier.weight"};

  std::array<V*, kCount> refs() {
    return {&trunk0_w, &trunk0_b, &trunk1_w, &trunk1_b,
            &norm_scale, &norm_shift, &embed_w, &classifier_w};
  }
  std::array<const V*, kCount> refs() const {
    return {&trunk0_w, &trunk0_b, &trunk1_w, &trunk1_b,
            &norm_scale, &norm_shift, &embed_w, &classifier_w};
  }

  std::vector<V> to_vector() const {
    std::vector<V> out;
    for (const V* v : refs()) out.push_back(*v);
    return out;
  }

  static ParamSet from_vector(std::span<const V> values) {
    ParamSet out;
    auto slots = out.refs();
    for (std::size_t i = 0; i < kCount; ++i) *slots[i] = values[i];
    return out;
  }

  template <typename F>
  auto map(F&& f) const {
    using U = decltype(f(trunk0_w));
    ParamSet<U> out;
    auto dst = out.refs();
    auto src = refs();
    for (std::size_t i = 0; i < kCount; ++i) *dst[i] = f(*src[i]);
    return out;
  }
};

/// Running statistics used by the MLR layer in eval mode. Not learnable.
template <typename T>
struct NormBuffers {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

template <typename T>
struct ModelParams {
  ParamSet<Tensor<T>> weights;
  NormBuffers<T> buffers;

  [[nodiscard]] ModelDims dims() const;
  [[nodiscard]] bool all_finite() const;
  bool operator==(const ModelParams&) const;
};

enum class Mode { train, eval };

template <typename T>
struct DomainStats {
  int domain_id = 0;
  Tensor<T> mean;
  /// Population standard deviation, floored at kStdFloor.
  Tensor<T> std;
  std::size_t sample_count = 0;
};

template <typename T>
struct HeadOutput {
  Var<T> embeddings;
  Var<T> logits;
  /// Batch statistics of the normalized input (train mode only).
  Tensor<T> batch_mean;
  Tensor<T> batch_var;
};

template <typename T>
struct ForwardOutput {
  Var<T> pre_norm_features;
  Var<T> embeddings;
  Var<T> logits;
  Tensor<T> batch_mean;
  Tensor<T> batch_var;
  std::vector<DomainStats<T>> domain_stats;
};

inline constexpr double kNormEps = 1e-7;
inline constexpr double kStdFloor = 1e-5;
inline constexpr double kRunningMomentum = 0.1;

template <typename T>
ModelParams<T> init_params(const ModelDims& dims, std::uint64_t seed);

template <typename T>
ParamSet<Var<T>> as_leaves(const ParamSet<Tensor<T>>& weights);

template <typename T>
ParamSet<Var<T>> as_constants(const ParamSet<Tensor<T>>& weights);

template <typename T>
ParamSet<Tensor<T>> values_of(const ParamSet<Var<T>>& vars);

/// Trunk only: features [B,D] -> pre-norm features [B,F].
template <typename T>
Var<T> trunk(const ParamSet<Var<T>>& p, const Var<T>& features);

/// Resumes the network at the MLR layer input with externally supplied
/// pre-norm features (e.g. mixed with sampled domain features).
template <typename T>
HeadOutput<T> forward_mixed(const ParamSet<Var<T>>& p, const Var<T>& pre_norm, Mode mode,
                            const NormBuffers<T>& buffers);

/// Full forward pass. With `capture_domains`, also returns per-domain mean/std
/// of the pre-norm features (each present domain needs >= 2 rows).
template <typename T>
ForwardOutput<T> forward(const ParamSet<Var<T>>& p, const Var<T>& features, Mode mode,
                         const NormBuffers<T>& buffers,
                         std::optional<std::span<const int>> capture_domains = std::nullopt);

/// Per-domain statistics, ordered by ascending domain id.
template <typename T>
std::vector<DomainStats<T>> capture_domain_stats(const Tensor<T>& pre_norm,
                                                 std::span<const int> domains);

/// Exponential moving average with kRunningMomentum.
template <typename T>
void update_running_stats(NormBuffers<T>& buffers, const Tensor<T>& batch_mean,
                          const Tensor<T>& batch_var);

}  // namespace metareid
