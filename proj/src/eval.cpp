#include "metareid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

#include "metareid/autodiff.hpp"
#include "metareid/kernels.hpp"

namespace metareid {

namespace {

std::size_t normalize_rows(Tensor<double>& x) {
  std::size_t zero = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    if (sq == 0.0) {
      ++zero;
      continue;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : row) v *= inv;
  }
  return zero;
}

struct QueryResult {
  bool has_match = false;
  double ap = 0.0;
  std::size_t first_match = 0;  // 0-based rank
};

QueryResult evaluate_query(std::span<const double> dist, int qid, std::span<const int> gallery_ids,
                           std::optional<std::size_t> skip) {
  std::vector<std::size_t> order;
  order.reserve(dist.size());
  for (std::size_t g = 0; g < dist.size(); ++g) {
    if (skip && *skip == g) continue;
    order.push_back(g);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  QueryResult out;
  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (gallery_ids[order[pos]] != qid) continue;
    if (hits == 0) out.first_match = pos;
    ++hits;
    precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
  }
  if (hits == 0) return out;
  out.has_match = true;
  out.ap = precision_sum / static_cast<double>(hits);
  return out;
}

}  // namespace

DistanceMatrix distance_matrix(const Tensor<double>& query, const Tensor<double>& gallery,
                               bool normalize) {
  if (query.rank() != 2 || gallery.rank() != 2 || query.dim(1) != gallery.dim(1)) {
    throw ShapeError("distance_matrix: query " + shape_str(query.shape()) + " vs gallery " +
                     shape_str(gallery.shape()));
  }
  DistanceMatrix out;
  Tensor<double> q = query;
  Tensor<double> g = gallery;
  if (normalize) out.zero_norm_rows = normalize_rows(q) + normalize_rows(g);
  const std::size_t nq = q.dim(0);
  const std::size_t ng = g.dim(0);
  out.values = Tensor<double>(Shape{nq, ng});
  kernels::cross_sqdist<double>(q.data(), g.data(), out.values.data(), nq, ng, q.dim(1));
  for (double& v : out.values.data()) v = std::sqrt(std::max(v, 0.0));
  return out;
}

EvalReport evaluate(const Tensor<double>& distances, std::span<const int> query_ids,
                    std::span<const int> gallery_ids, bool exclude_same_index, Execution exec) {
  if (query_ids.empty()) throw std::invalid_argument("evaluate: empty query set");
  if (gallery_ids.empty()) throw std::invalid_argument("evaluate: empty gallery set");
  if (distances.rank() != 2 || distances.dim(0) != query_ids.size() ||
      distances.dim(1) != gallery_ids.size()) {
    throw ShapeError("evaluate: distances " + shape_str(distances.shape()) + " for " +
                     std::to_string(query_ids.size()) + " queries and " +
                     std::to_string(gallery_ids.size()) + " gallery items");
  }
  const std::size_t nq = query_ids.size();
  std::vector<QueryResult> results(nq);
  auto run = [&](std::size_t q) {
    std::optional<std::size_t> skip;
    if (exclude_same_index) skip = q;
    results[q] = evaluate_query(distances.row(q), query_ids[q], gallery_ids, skip);
  };
  if (exec == Execution::parallel) {
    const auto n = static_cast<std::int64_t>(nq);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t q = 0; q < n; ++q) run(static_cast<std::size_t>(q));
  } else {
    for (std::size_t q = 0; q < nq; ++q) run(q);
  }

  EvalReport report;
  report.num_gallery = gallery_ids.size() - (exclude_same_index ? 1 : 0);
  const std::size_t ranks = std::max<std::size_t>(report.num_gallery, 1);
  std::vector<std::size_t> first_counts(ranks, 0);
  for (const auto& r : results) {
    if (!r.has_match) {
      ++report.excluded_queries;
      continue;
    }
    report.per_query_ap.push_back(r.ap);
    ++first_counts[r.first_match];
  }
  report.num_queries = report.per_query_ap.size();
  report.cmc.assign(ranks, 0.0);
  if (report.num_queries == 0) return report;
  double sum = 0.0;
  for (double ap : report.per_query_ap) sum += ap;
  report.mAP = sum / static_cast<double>(report.num_queries);
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < ranks; ++k) {
    cumulative += first_counts[k];
    report.cmc[k] = static_cast<double>(cumulative) / static_cast<double>(report.num_queries);
  }
  report.rank1 = cmc_at(report, 1);
  report.rank5 = cmc_at(report, 5);
  report.rank10 = cmc_at(report, 10);
  return report;
}

double cmc_at(const EvalReport& report, std::size_t k) {
  if (report.cmc.empty() || k == 0) return 0.0;
  return report.cmc[std::min(k, report.cmc.size()) - 1];
}

template <typename T>
Tensor<double> embed_rows(const ModelParams<T>& params, const Dataset& data,
                          std::span<const std::size_t> rows) {
  NoGradGuard no_grad;
  auto p = as_constants(params.weights);
  auto x = Var<T>::constant(data.features_of<T>(rows));
  auto out = forward(p, x, Mode::eval, params.buffers);
  return out.embeddings.value().template cast<double>();
}

template <typename T>
RetrievalResult evaluate_holdout(const ModelParams<T>& params, const Dataset& data,
                                 bool normalize) {
  const auto q_rows = data.rows_with(SplitTag::query);
  const auto g_rows = data.rows_with(SplitTag::gallery);
  if (q_rows.empty() || g_rows.empty()) {
    throw std::invalid_argument("evaluate_holdout: dataset has no query or gallery rows");
  }
  auto dm = distance_matrix(embed_rows(params, data, q_rows), embed_rows(params, data, g_rows),
                            normalize);
  std::vector<int> qids;
  std::vector<int> gids;
  for (auto r : q_rows) qids.push_back(data.ids[r]);
  for (auto r : g_rows) gids.push_back(data.ids[r]);
  return {evaluate(dm.values, qids, gids), dm.zero_norm_rows};
}

template <typename T>
RetrievalResult evaluate_on_train(const ModelParams<T>& params, const Dataset& data,
                                  bool normalize) {
  const auto rows = data.rows_with(SplitTag::train);
  if (rows.size() < 2) throw std::invalid_argument("evaluate_on_train: fewer than 2 train rows");
  auto emb = embed_rows(params, data, rows);
  auto dm = distance_matrix(emb, emb, normalize);
  std::vector<int> ids;
  for (auto r : rows) ids.push_back(data.ids[r]);
  return {evaluate(dm.values, ids, ids, true), dm.zero_norm_rows / 2};
}

#define METAREID_INSTANTIATE(T)                                                                \
  template Tensor<double> embed_rows<T>(const ModelParams<T>&, const Dataset&,                 \
                                        std::span<const std::size_t>);                         \
  template RetrievalResult evaluate_holdout<T>(const ModelParams<T>&, const Dataset&, bool);   \
  template RetrievalResult evaluate_on_train<T>(const ModelParams<T>&, const Dataset&, bool);

METAREID_INSTANTIATE(float)
METAREID_INSTANTIATE(double)
#undef METAREID_INSTANTIATE

}  // namespace metareid
