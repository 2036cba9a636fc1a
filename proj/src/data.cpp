#include "metareid/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

namespace metareid {

std::vector<std::size_t> Dataset::rows_with(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) out.push_back(i);
  }
  return out;
}

int Dataset::num_identities() const {
  return ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
}

int Dataset::num_domains() const {
  return domains.empty() ? 0 : *std::max_element(domains.begin(), domains.end()) + 1;
}

void assign_split_tags(Dataset& data, std::optional<int> holdout_domain) {
  const int holdout = holdout_domain.value_or(data.num_domains() - 1);
  data.tags.assign(data.size(), SplitTag::train);
  std::set<int> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.domains[i] != holdout) continue;
    data.tags[i] = seen.insert(data.ids[i]).second ? SplitTag::query : SplitTag::gallery;
  }
}

void GenSpec::validate() const {
  if (identities < 2) throw ValidationError("gen: identities must satisfy M >= 2");
  if (domains < 2) throw ValidationError("gen: domains must satisfy C >= 2");
  if (samples < 2) throw ValidationError("gen: samples per identity must satisfy K >= 2");
  if (dim < 1) throw ValidationError("gen: feature dimension must be >= 1");
  if (!(shift >= 0.0) || !std::isfinite(shift)) {
    throw ValidationError("gen: domain shift scale must satisfy s >= 0");
  }
  if (!(noise > 0.0) || !std::isfinite(noise)) {
    throw ValidationError("gen: within-class noise must satisfy sigma_n > 0");
  }
}

Dataset generate(const GenSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(0.5, 1.5);

  const std::size_t dim = spec.dim;
  const std::size_t invariant = dim / 2;

  std::vector<double> prototypes(static_cast<std::size_t>(spec.identities) * dim);
  for (auto& v : prototypes) v = unit(rng);

  std::vector<double> scales(static_cast<std::size_t>(spec.domains) * dim, 1.0);
  std::vector<double> shifts(static_cast<std::size_t>(spec.domains) * dim, 0.0);
  for (int c = 0; c < spec.domains; ++c) {
    for (std::size_t d = invariant; d < dim; ++d) {
      scales[static_cast<std::size_t>(c) * dim + d] = scale_dist(rng);
      shifts[static_cast<std::size_t>(c) * dim + d] = spec.shift * unit(rng);
    }
  }

  Dataset data;
  data.dim = dim;
  const std::size_t total =
      static_cast<std::size_t>(spec.identities) * static_cast<std::size_t>(spec.domains) *
      static_cast<std::size_t>(spec.samples);
  data.ids.reserve(total);
  data.domains.reserve(total);
  data.features.reserve(total * dim);
  for (int c = 0; c < spec.domains; ++c) {
    const double* a = scales.data() + static_cast<std::size_t>(c) * dim;
    const double* t = shifts.data() + static_cast<std::size_t>(c) * dim;
    for (int m = 0; m < spec.identities; ++m) {
      const double* p = prototypes.data() + static_cast<std::size_t>(m) * dim;
      for (int k = 0; k < spec.samples; ++k) {
        data.ids.push_back(m);
        data.domains.push_back(c);
        for (std::size_t d = 0; d < dim; ++d) {
          const double x = p[d] + spec.noise * unit(rng);
          data.features.push_back(d < invariant ? x : a[d] * x + t[d]);
        }
      }
    }
  }
  assign_split_tags(data);
  return data;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_csv(const Dataset& data, std::ostream& os) {
  os << "id,domain";
  for (std::size_t d = 0; d < data.dim; ++d) os << ",f" << d;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.ids[i] << ',' << data.domains[i];
    for (double v : data.row(i)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
      os << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    os << '\n';
  }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

[[noreturn]] void csv_fail(std::size_t line_no, const std::string& what) {
  throw ValidationError("csv line " + std::to_string(line_no) + ": " + what);
}

int parse_label(std::string_view field, std::size_t line_no, const char* name) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    csv_fail(line_no, std::string("malformed ") + name + " '" + std::string(field) + "'");
  }
  if (v < 0) csv_fail(line_no, std::string("negative ") + name + " " + std::to_string(v));
  if (v > 0x7fffffff) csv_fail(line_no, std::string(name) + " out of range");
  return static_cast<int>(v);
}

double parse_feature(std::string_view field, std::size_t line_no, std::size_t column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    csv_fail(line_no, "malformed feature f" + std::to_string(column) + " '" + std::string(field) +
                          "'");
  }
  if (!std::isfinite(v)) {
    csv_fail(line_no, "non-finite feature f" + std::to_string(column));
  }
  return v;
}

}  // namespace

Dataset read_csv(std::istream& is, std::optional<int> holdout_domain) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("csv line 1: missing header");
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "domain") {
    csv_fail(1, "malformed header, expected 'id,domain,f0,...'");
  }
  Dataset data;
  data.dim = header.size() - 2;
  for (std::size_t d = 0; d < data.dim; ++d) {
    if (header[d + 2] != "f" + std::to_string(d)) {
      csv_fail(1, "malformed header, expected column 'f" + std::to_string(d) + "', got '" +
                      std::string(header[d + 2]) + "'");
    }
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() && is.peek() == std::char_traits<char>::eof()) break;
    const auto fields = split_fields(line);
    if (fields.size() != data.dim + 2) {
      csv_fail(line_no, "expected " + std::to_string(data.dim + 2) + " fields, got " +
                            std::to_string(fields.size()));
    }
    data.ids.push_back(parse_label(fields[0], line_no, "id"));
    data.domains.push_back(parse_label(fields[1], line_no, "domain"));
    for (std::size_t d = 0; d < data.dim; ++d) {
      data.features.push_back(parse_feature(fields[d + 2], line_no, d));
    }
  }
  if (data.ids.empty()) throw ValidationError("csv: no rows");
  assign_split_tags(data, holdout_domain);
  return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open '" + path.string() + "' for writing");
  write_csv(data, os);
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Dataset load_csv(const std::filesystem::path& path, std::optional<int> holdout_domain) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open '" + path.string() + "'");
  return read_csv(is, holdout_domain);
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

EpisodeBatch EpisodeBatch::select(std::span<const std::size_t> positions) const {
  EpisodeBatch out;
  const std::size_t dim = features.rank() == 2 ? features.dim(1) : 0;
  out.features = Tensor<double>(Shape{positions.size(), dim});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const std::size_t p = positions[i];
    auto src = features.row(p);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.ids.push_back(ids[p]);
    out.domains.push_back(domains[p]);
    out.rows.push_back(rows[p]);
  }
  return out;
}

EpisodeBatch make_batch(const Dataset& data, std::span<const std::size_t> rows) {
  EpisodeBatch out;
  out.features = data.features_of<double>(rows);
  for (std::size_t r : rows) {
    out.ids.push_back(data.ids[r]);
    out.domains.push_back(data.domains[r]);
    out.rows.push_back(r);
  }
  return out;
}

EpisodeBatch sample_pk_batch(const Dataset& data, int p, int k, std::mt19937_64& rng) {
  if (p < 2 || k < 2) throw ValidationError("sampler: need P >= 2 and K >= 2");

  // identity -> domain -> train rows
  std::map<int, std::map<int, std::vector<std::size_t>>> cells;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.tags[i] == SplitTag::train) cells[data.ids[i]][data.domains[i]].push_back(i);
  }
  std::vector<int> eligible;
  for (const auto& [id, by_domain] : cells) {
    std::size_t n = 0;
    for (const auto& [dom, rows] : by_domain) n += rows.size();
    if (n >= static_cast<std::size_t>(k)) eligible.push_back(id);
  }
  if (eligible.size() < static_cast<std::size_t>(p)) {
    throw ValidationError("sampler: need " + std::to_string(p) + " identities with >= " +
                          std::to_string(k) + " train rows, found " +
                          std::to_string(eligible.size()));
  }

  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(static_cast<std::size_t>(p));

  std::vector<std::size_t> picked;
  picked.reserve(static_cast<std::size_t>(p * k));
  const auto want = static_cast<std::size_t>(k);
  constexpr int kMaxRetries = 100;
  for (int id : eligible) {
    const auto& by_domain = cells.at(id);
    std::vector<int> usable;
    for (const auto& [dom, rows] : by_domain) {
      if (rows.size() >= 2) usable.push_back(dom);
    }
    const std::size_t spread = std::max<std::size_t>(1, std::min(usable.size(), want / 2));

    bool done = false;
    for (int attempt = 0; attempt < kMaxRetries && !done; ++attempt) {
      std::shuffle(usable.begin(), usable.end(), rng);
      std::vector<std::size_t> chosen;
      bool ok = !usable.empty();
      for (std::size_t j = 0; ok && j < spread; ++j) {
        const std::size_t quota = want / spread + (j < want % spread ? 1 : 0);
        std::vector<std::size_t> pool = by_domain.at(usable[j]);
        if (pool.size() < quota) {
          ok = false;
          break;
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota));
      }
      if (ok) {
        picked.insert(picked.end(), chosen.begin(), chosen.end());
        done = true;
      }
    }
    if (!done) {
      throw ValidationError("sampler: could not draw " + std::to_string(k) +
                            " rows with >= 2 per domain for identity " + std::to_string(id) +
                            " after " + std::to_string(kMaxRetries) + " retries");
    }
  }
  return make_batch(data, picked);
}

}  // namespace metareid
