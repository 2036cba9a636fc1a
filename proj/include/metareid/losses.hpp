#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "metareid/autodiff.hpp"
#include "metareid/model.hpp"

namespace metareid {

enum class LossMode { total, triplet_only };

struct LossConfig {
  double margin = 0.3;
  LossMode mode = LossMode::total;

  void validate() const;
};

/// Hardest positive / negative per anchor. Ties go to the lowest index.
struct HardMining {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

/// Mines on a [B,B] distance matrix. Throws if an identity has no positive or
/// an anchor has no negative.
template <typename T>
HardMining mine_batch_hard(const Tensor<T>& distances, std::span<const int> ids);

/// mean_a max(d(a, hardest p) - d(a, hardest n) + margin, 0), Euclidean d.
template <typename T>
Var<T> triplet_batch_hard(const Var<T>& embeddings, std::span<const int> ids, double margin);

/// mean_i -log softmax(logits_i)[ids_i], via log-sum-exp.
template <typename T>
Var<T> id_cross_entropy(const Var<T>& logits, std::span<const int> ids);

/// L_ID + L_triplet, or L_triplet alone in triplet_only mode.
template <typename T>
Var<T> total_loss(const Var<T>& embeddings, const Var<T>& logits, std::span<const int> ids,
                  const LossConfig& cfg);

template <typename T>
Var<T> total_loss(const ForwardOutput<T>& out, std::span<const int> ids, const LossConfig& cfg) {
  return total_loss(out.embeddings, out.logits, ids, cfg);
}

}  // namespace metareid
