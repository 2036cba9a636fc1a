#include "metareid/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

namespace metareid {

template <typename T>
ModelDims ModelParams<T>::dims() const {
  ModelDims d;
  d.input = weights.trunk0_w.dim(0);
  d.hidden = weights.trunk0_w.dim(1);
  d.feature = weights.trunk1_w.dim(1);
  d.embed = weights.embed_w.dim(1);
  d.classes = weights.classifier_w.dim(1);
  return d;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
  for (const auto* w : weights.refs()) {
    if (!w->all_finite()) return false;
  }
  return buffers.running_mean.all_finite() && buffers.running_var.all_finite();
}

template <typename T>
bool ModelParams<T>::operator==(const ModelParams& other) const {
  auto a = weights.refs();
  auto b = other.weights.refs();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(*a[i] == *b[i])) return false;
  }
  return buffers.running_mean == other.buffers.running_mean &&
         buffers.running_var == other.buffers.running_var;
}

namespace {

template <typename T>
Tensor<T> glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> out(Shape{fan_in, fan_out});
  for (auto& v : out.data()) v = static_cast<T>(dist(rng));
  return out;
}

}  // namespace

template <typename T>
ModelParams<T> init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.input == 0 || dims.hidden == 0 || dims.feature == 0 || dims.embed == 0 ||
      dims.classes == 0) {
    throw std::invalid_argument("init_params: all model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  ModelParams<T> m;
  auto& w = m.weights;
  w.trunk0_w = glorot<T>(dims.input, dims.hidden, rng);
  w.trunk0_b = Tensor<T>::zeros({dims.hidden});
  w.trunk1_w = glorot<T>(dims.hidden, dims.feature, rng);
  w.trunk1_b = Tensor<T>::zeros({dims.feature});
  w.norm_scale = Tensor<T>::ones({dims.feature});
  w.norm_shift = Tensor<T>::zeros({dims.feature});
  w.embed_w = glorot<T>(dims.feature, dims.embed, rng);
  w.classifier_w = glorot<T>(dims.embed, dims.classes, rng);
  m.buffers.running_mean = Tensor<T>::zeros({dims.feature});
  m.buffers.running_var = Tensor<T>::ones({dims.feature});
  return m;
}

template <typename T>
ParamSet<Var<T>> as_leaves(const ParamSet<Tensor<T>>& weights) {
  return weights.map([](const Tensor<T>& t) { return Var<T>::leaf(t); });
}

template <typename T>
ParamSet<Var<T>> as_constants(const ParamSet<Tensor<T>>& weights) {
  return weights.map([](const Tensor<T>& t) { return Var<T>::constant(t); });
}

template <typename T>
ParamSet<Tensor<T>> values_of(const ParamSet<Var<T>>& vars) {
  return vars.map([](const Var<T>& v) { return v.value(); });
}

template <typename T>
Var<T> trunk(const ParamSet<Var<T>>& p, const Var<T>& features) {
  if (features.shape().size() != 2 || features.shape()[1] != p.trunk0_w.shape()[0]) {
    throw ShapeError("forward: expected features of shape [B," +
                     std::to_string(p.trunk0_w.shape()[0]) + "], got " +
                     shape_str(features.shape()));
  }
  auto h = relu(add(matmul(features, p.trunk0_w), p.trunk0_b));
  return add(matmul(h, p.trunk1_w), p.trunk1_b);
}

template <typename T>
HeadOutput<T> forward_mixed(const ParamSet<Var<T>>& p, const Var<T>& pre_norm, Mode mode,
                            const NormBuffers<T>& buffers) {
  const std::size_t feature_dim = p.norm_scale.shape()[0];
  if (pre_norm.shape().size() != 2 || pre_norm.shape()[1] != feature_dim) {
    throw ShapeError("forward_mixed: expected pre-norm features of shape [B," +
                     std::to_string(feature_dim) + "], got " + shape_str(pre_norm.shape()));
  }
  HeadOutput<T> out;
  Var<T> mu;
  Var<T> var;
  if (mode == Mode::train) {
    mu = mean_rows(pre_norm);
    var = var_rows(pre_norm);
    out.batch_mean = mu.value();
    out.batch_var = var.value();
  } else {
    mu = Var<T>::constant(buffers.running_mean);
    var = Var<T>::constant(buffers.running_var);
  }
  auto standardized = div(sub(pre_norm, mu), sqrt(add_scalar(var, kNormEps)));
  auto normed = add(mul(standardized, p.norm_scale), p.norm_shift);
  out.embeddings = matmul(normed, p.embed_w);
  out.logits = matmul(out.embeddings, p.classifier_w);
  return out;
}

template <typename T>
std::vector<DomainStats<T>> capture_domain_stats(const Tensor<T>& pre_norm,
                                                 std::span<const int> domains) {
  if (pre_norm.rank() != 2 || domains.size() != pre_norm.dim(0)) {
    throw ShapeError("capture_domain_stats: " + std::to_string(domains.size()) +
                     " domain labels for features of shape " + shape_str(pre_norm.shape()));
  }
  const std::size_t dim = pre_norm.dim(1);
  std::map<int, std::vector<std::size_t>> rows_by_domain;
  for (std::size_t i = 0; i < domains.size(); ++i) rows_by_domain[domains[i]].push_back(i);

  std::vector<DomainStats<T>> stats;
  for (const auto& [domain, rows] : rows_by_domain) {
    if (rows.size() < 2) {
      throw std::invalid_argument("capture_domain_stats: domain " + std::to_string(domain) +
                                  " has " + std::to_string(rows.size()) +
                                  " sample(s), need at least 2");
    }
    // Accumulate in double regardless of T; rows are visited in index order.
    std::vector<double> mean(dim, 0.0);
    std::vector<double> sq(dim, 0.0);
    for (std::size_t r : rows) {
      for (std::size_t d = 0; d < dim; ++d) mean[d] += static_cast<double>(pre_norm(r, d));
    }
    const double n = static_cast<double>(rows.size());
    for (auto& m : mean) m /= n;
    for (std::size_t r : rows) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double c = static_cast<double>(pre_norm(r, d)) - mean[d];
        sq[d] += c * c;
      }
    }
    DomainStats<T> s;
    s.domain_id = domain;
    s.sample_count = rows.size();
    s.mean = Tensor<T>(Shape{dim});
    s.std = Tensor<T>(Shape{dim});
    for (std::size_t d = 0; d < dim; ++d) {
      s.mean[d] = static_cast<T>(mean[d]);
      s.std[d] = static_cast<T>(std::max(std::sqrt(sq[d] / n), kStdFloor));
    }
    stats.push_back(std::move(s));
  }
  return stats;
}

template <typename T>
ForwardOutput<T> forward(const ParamSet<Var<T>>& p, const Var<T>& features, Mode mode,
                         const NormBuffers<T>& buffers,
                         std::optional<std::span<const int>> capture_domains) {
  ForwardOutput<T> out;
  out.pre_norm_features = trunk(p, features);
  if (capture_domains) {
    out.domain_stats = capture_domain_stats(out.pre_norm_features.value(), *capture_domains);
  }
  auto head = forward_mixed(p, out.pre_norm_features, mode, buffers);
  out.embeddings = std::move(head.embeddings);
  out.logits = std::move(head.logits);
  out.batch_mean = std::move(head.batch_mean);
  out.batch_var = std::move(head.batch_var);
  return out;
}

template <typename T>
void update_running_stats(NormBuffers<T>& buffers, const Tensor<T>& batch_mean,
                          const Tensor<T>& batch_var) {
  if (batch_mean.shape() != buffers.running_mean.shape() ||
      batch_var.shape() != buffers.running_var.shape()) {
    throw ShapeError("update_running_stats: statistics shape mismatch");
  }
  const T keep = static_cast<T>(1.0 - kRunningMomentum);
  const T take = static_cast<T>(kRunningMomentum);
  for (std::size_t i = 0; i < batch_mean.numel(); ++i) {
    buffers.running_mean[i] = keep * buffers.running_mean[i] + take * batch_mean[i];
    buffers.running_var[i] = keep * buffers.running_var[i] + take * batch_var[i];
  }
}

#define METAREID_INSTANTIATE(T)                                                                \
  template struct ModelParams<T>;                                                              \
  template ModelParams<T> init_params<T>(const ModelDims&, std::uint64_t);                     \
  template ParamSet<Var<T>> as_leaves<T>(const ParamSet<Tensor<T>>&);                          \
  template ParamSet<Var<T>> as_constants<T>(const ParamSet<Tensor<T>>&);                       \
  template ParamSet<Tensor<T>> values_of<T>(const ParamSet<Var<T>>&);                          \
  template Var<T> trunk<T>(const ParamSet<Var<T>>&, const Var<T>&);                            \
  template HeadOutput<T> forward_mixed<T>(const ParamSet<Var<T>>&, const Var<T>&, Mode,        \
                                          const NormBuffers<T>&);                              \
  template ForwardOutput<T> forward<T>(const ParamSet<Var<T>>&, const Var<T>&, Mode,           \
                                       const NormBuffers<T>&,                                  \
                                       std::optional<std::span<const int>>);                   \
  template std::vector<DomainStats<T>> capture_domain_stats<T>(const Tensor<T>&,               \
                                                               std::span<const int>);          \
  template void update_running_stats<T>(NormBuffers<T>&, const Tensor<T>&, const Tensor<T>&);

METAREID_INSTANTIATE(float)
METAREID_INSTANTIATE(double)
#undef METAREID_INSTANTIATE

}  // namespace metareid
