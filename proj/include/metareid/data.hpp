#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "metareid/errors.hpp"
#include "metareid/tensor.hpp"

namespace metareid {

enum class SplitTag : std::uint8_t { train, query, gallery };

/// Labelled feature rows. Rows of the held-out domain are tagged query (the
/// first row of each identity in file order) or gallery; all others are train.
struct Dataset {
  std::size_t dim = 0;
  std::vector<int> ids;
  std::vector<int> domains;
  std::vector<SplitTag> tags;
  std::vector<double> features;  // row-major, size() * dim

  [[nodiscard]] std::size_t size() const { return ids.size(); }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  [[nodiscard]] std::vector<std::size_t> rows_with(SplitTag tag) const;
  [[nodiscard]] int num_identities() const;  // max id + 1
  [[nodiscard]] int num_domains() const;     // max domain + 1

  template <typename T>
  [[nodiscard]] Tensor<T> features_of(std::span<const std::size_t> rows) const {
    Tensor<T> out(Shape{rows.size(), dim});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = row(rows[i]);
      for (std::size_t d = 0; d < dim; ++d) out(i, d) = static_cast<T>(src[d]);
    }
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

/// Re-derives split tags. The held-out domain defaults to the largest domain id.
void assign_split_tags(Dataset& data, std::optional<int> holdout_domain = std::nullopt);

struct GenSpec {
  int identities = 32;
  int domains = 4;
  std::size_t dim = 32;
  int samples = 4;  // per identity per domain
  double shift = 1.0;
  double noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthetic multi-domain identities. Each domain rescales (U[0.5,1.5]) and
/// shifts (shift * N(0,I)) the upper half of the coordinates; the lower half
/// is left domain-invariant. The last domain is held out.
Dataset generate(const GenSpec& spec);

void write_csv(const Dataset& data, std::ostream& os);
Dataset read_csv(std::istream& is, std::optional<int> holdout_domain = std::nullopt);
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path,
                 std::optional<int> holdout_domain = std::nullopt);

/// One sampled mini-batch. `rows` are indices into the source dataset.
struct EpisodeBatch {
  Tensor<double> features;
  std::vector<int> ids;
  std::vector<int> domains;
  std::vector<std::size_t> rows;

  [[nodiscard]] std::size_t size() const { return ids.size(); }
  /// Sub-batch with the given positions (not dataset rows), in that order.
  [[nodiscard]] EpisodeBatch select(std::span<const std::size_t> positions) const;
};

/// P identities drawn without replacement from the train split, K rows each,
/// spread across as many domains as allow >= 2 rows per (identity, domain).
EpisodeBatch sample_pk_batch(const Dataset& data, int p, int k, std::mt19937_64& rng);

/// Gathers arbitrary dataset rows into a batch.
EpisodeBatch make_batch(const Dataset& data, std::span<const std::size_t> rows);

}  // namespace metareid
