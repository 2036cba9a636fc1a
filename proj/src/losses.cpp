#include "metareid/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "metareid/errors.hpp"

namespace metareid {

void LossConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ValidationError("loss: margin must be finite and >= 0, got " +
                                std::to_string(margin));
  }
}

template <typename T>
HardMining mine_batch_hard(const Tensor<T>& distances, std::span<const int> ids) {
  const std::size_t n = ids.size();
  if (distances.rank() != 2 || distances.dim(0) != n || distances.dim(1) != n) {
    throw ShapeError("triplet_batch_hard: distance matrix " + shape_str(distances.shape()) +
                     " does not match " + std::to_string(n) + " labels");
  }
  HardMining mined;
  mined.positive.resize(n);
  mined.negative.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    bool has_pos = false;
    bool has_neg = false;
    T best_pos{};
    T best_neg{};
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const T d = distances(a, j);
      if (ids[j] == ids[a]) {
        if (!has_pos || d > best_pos) {
          best_pos = d;
          mined.positive[a] = j;
          has_pos = true;
        }
      } else if (!has_neg || d < best_neg) {
        best_neg = d;
        mined.negative[a] = j;
        has_neg = true;
      }
    }
    if (!has_pos) {
      throw std::invalid_argument("triplet_batch_hard: identity " + std::to_string(ids[a]) +
                                  " has no positive sample in the batch");
    }
    if (!has_neg) {
      throw std::invalid_argument("triplet_batch_hard: batch contains a single identity");
    }
  }
  return mined;
}

template <typename T>
Var<T> triplet_batch_hard(const Var<T>& embeddings, std::span<const int> ids, double margin) {
  if (embeddings.shape().size() != 2 || embeddings.shape()[0] != ids.size()) {
    throw ShapeError("triplet_batch_hard: embeddings " + shape_str(embeddings.shape()) + " vs " +
                     std::to_string(ids.size()) + " labels");
  }
  auto dist = pairwise_dist(embeddings);
  HardMining mined = mine_batch_hard(dist.value(), ids);
  std::vector<std::size_t> anchors(ids.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) anchors[i] = i;
  auto d_ap = gather(dist, anchors, std::move(mined.positive));
  auto d_an = gather(dist, std::move(anchors), std::move(mined.negative));
  return mean(relu(add_scalar(sub(d_ap, d_an), margin)));
}

template <typename T>
Var<T> id_cross_entropy(const Var<T>& logits, std::span<const int> ids) {
  if (logits.shape().size() != 2 || logits.shape()[0] != ids.size()) {
    throw ShapeError("id_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(ids.size()) + " labels");
  }
  const std::size_t classes = logits.shape()[1];
  std::vector<std::size_t> rows(ids.size());
  std::vector<std::size_t> cols(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= classes) {
      throw std::invalid_argument("id_cross_entropy: label " + std::to_string(ids[i]) +
                                  " outside [0, " + std::to_string(classes) + ")");
    }
    rows[i] = i;
    cols[i] = static_cast<std::size_t>(ids[i]);
  }
  auto picked = gather(logits, std::move(rows), std::move(cols));
  return mean(sub(logsumexp_rows(logits), picked));
}

template <typename T>
Var<T> total_loss(const Var<T>& embeddings, const Var<T>& logits, std::span<const int> ids,
                  const LossConfig& cfg) {
  auto triplet = triplet_batch_hard(embeddings, ids, cfg.margin);
  if (cfg.mode == LossMode::triplet_only) return triplet;
  return add(id_cross_entropy(logits, ids), triplet);
}

#define METAREID_INSTANTIATE(T)                                                          \
  template HardMining mine_batch_hard<T>(const Tensor<T>&, std::span<const int>);         \
  template Var<T> triplet_batch_hard<T>(const Var<T>&, std::span<const int>, double);     \
  template Var<T> id_cross_entropy<T>(const Var<T>&, std::span<const int>);               \
  template Var<T> total_loss<T>(const Var<T>&, const Var<T>&, std::span<const int>,       \
                                const LossConfig&);

METAREID_INSTANTIATE(float)
METAREID_INSTANTIATE(double)
#undef METAREID_INSTANTIATE

}  // namespace metareid
