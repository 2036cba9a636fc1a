#pragma once

// Retrieval evaluation: distance matrix, CMC rank-k and mean average precision.
//
// For each query the gallery is ranked by ascending distance, ties broken by
// gallery index. Queries without a true match in the gallery are excluded from
// every statistic and counted in EvalReport::excluded_queries.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "metareid/data.hpp"
#include "metareid/model.hpp"
#include "metareid/tensor.hpp"

namespace metareid {

struct DistanceMatrix {
  Tensor<double> values;          // [Q, G]
  std::size_t zero_norm_rows = 0;  // rows left unnormalized
};

/// Euclidean distances between rows of `query` [Q, E] and `gallery` [G, E],
/// after L2-normalizing every row when `normalize` is set.
DistanceMatrix distance_matrix(const Tensor<double>& query, const Tensor<double>& gallery,
                               bool normalize = true);

struct EvalReport {
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = fraction with first match at rank <= k, k = 1..G
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  std::vector<double> per_query_ap;  // evaluated queries, in query order
  std::size_t num_queries = 0;       // evaluated queries
  std::size_t num_gallery = 0;
  std::size_t excluded_queries = 0;
};

enum class Execution { serial, parallel };

/// With `exclude_same_index`, gallery item i is dropped from query i's ranking
/// (query and gallery are the same set).
EvalReport evaluate(const Tensor<double>& distances, std::span<const int> query_ids,
                    std::span<const int> gallery_ids, bool exclude_same_index = false,
                    Execution exec = Execution::parallel);

/// CMC value at rank k, saturating at the gallery size.
double cmc_at(const EvalReport& report, std::size_t k);

/// Eval-mode embeddings for the given dataset rows.
template <typename T>
Tensor<double> embed_rows(const ModelParams<T>& params, const Dataset& data,
                          std::span<const std::size_t> rows);

struct RetrievalResult {
  EvalReport report;
  std::size_t zero_norm_rows = 0;
};

/// Query rows against gallery rows of the held-out domain.
template <typename T>
RetrievalResult evaluate_holdout(const ModelParams<T>& params, const Dataset& data,
                                 bool normalize = true);

/// Train rows against themselves with the self-match removed.
template <typename T>
RetrievalResult evaluate_on_train(const ModelParams<T>& params, const Dataset& data,
                                  bool normalize = true);

}  // namespace metareid
