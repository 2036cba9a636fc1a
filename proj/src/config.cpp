#include "metareid/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

namespace metareid {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ValidationError("config: key '" + std::string(key) + "' expects " + expected + ", got '" +
                        std::string(value) + "'");
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    bad_value(key, value, std::is_floating_point_v<N> ? "a number" : "an integer");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename N>
std::string fmt_int(N v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Entry {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

#define DOUBLE_ENTRY(name, field)                                                        \
  {name,                                                                                 \
   {[](const RunConfig& c) { return format_double(c.field); },                           \
    [](RunConfig& c, std::string_view k, std::string_view v) {                           \
      c.field = parse_number<double>(k, v);                                              \
    }}}
#define INT_ENTRY(name, field, type)                                                     \
  {name,                                                                                 \
   {[](const RunConfig& c) { return fmt_int(c.field); },                                 \
    [](RunConfig& c, std::string_view k, std::string_view v) {                           \
      c.field = parse_number<type>(k, v);                                                \
    }}}
#define BOOL_ENTRY(name, field)                                                          \
  {name,                                                                                 \
   {[](const RunConfig& c) { return fmt_bool(c.field); },                                \
    [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_bool(k, v); }}}

const std::vector<std::pair<std::string, Entry>>& table() {
  static const std::vector<std::pair<std::string, Entry>> entries = {
      {"mode",
       {[](const RunConfig& c) { return std::string(c.mode == TrainMode::meta ? "meta" : "baseline"); },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "meta") c.mode = TrainMode::meta;
          else if (v == "baseline") c.mode = TrainMode::baseline;
          else bad_value(k, v, "meta or baseline");
        }}},
      {"precision",
       {[](const RunConfig& c) { return std::string(c.precision == Precision::f32 ? "f32" : "f64"); },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "f32") c.precision = Precision::f32;
          else if (v == "f64") c.precision = Precision::f64;
          else bad_value(k, v, "f32 or f64");
        }}},
      INT_ENTRY("seed", train.seed, std::uint64_t),
      INT_ENTRY("iters", train.total_iters, std::size_t),
      DOUBLE_ENTRY("inner_lr", train.inner_lr),
      DOUBLE_ENTRY("outer_lr", train.outer_lr),
      DOUBLE_ENTRY("warmup_start_factor", train.warmup_start_factor),
      INT_ENTRY("warmup_iters", train.warmup_iters, std::size_t),
      INT_ENTRY("identities_per_batch", train.identities_per_batch, int),
      INT_ENTRY("samples_per_identity", train.samples_per_identity, int),
      DOUBLE_ENTRY("weight_decay", train.weight_decay),
      DOUBLE_ENTRY("grad_clip", train.grad_clip),
      BOOL_ENTRY("mlr", train.mlr_enabled),
      {"inner_optimizer",
       {[](const RunConfig& c) {
          return std::string(c.train.inner_optimizer == InnerOptimizer::sgd_differentiable
                                 ? "sgd_differentiable"
                                 : "adam_frozen_state");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "sgd_differentiable") c.train.inner_optimizer = InnerOptimizer::sgd_differentiable;
          else if (v == "adam_frozen_state") c.train.inner_optimizer = InnerOptimizer::adam_frozen_state;
          else bad_value(k, v, "sgd_differentiable or adam_frozen_state");
        }}},
      DOUBLE_ENTRY("lambda_alpha", train.lambda_alpha),
      DOUBLE_ENTRY("lambda_beta", train.lambda_beta),
      {"lambda_override",
       {[](const RunConfig& c) {
          return c.train.lambda_override ? format_double(*c.train.lambda_override) : std::string("none");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "none") c.train.lambda_override.reset();
          else c.train.lambda_override = parse_number<double>(k, v);
        }}},
      BOOL_ENTRY("unmixed_meta_test", train.include_unmixed_meta_test),
      BOOL_ENTRY("stats_ema", train.stats_ema),
      INT_ENTRY("hidden_dim", train.model.hidden, std::size_t),
      INT_ENTRY("feature_dim", train.model.feature, std::size_t),
      INT_ENTRY("embed_dim", train.model.embed, std::size_t),
      DOUBLE_ENTRY("margin", train.loss.margin),
      {"loss",
       {[](const RunConfig& c) {
          return std::string(c.train.loss.mode == LossMode::total ? "total" : "triplet_only");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "total") c.train.loss.mode = LossMode::total;
          else if (v == "triplet_only") c.train.loss.mode = LossMode::triplet_only;
          else bad_value(k, v, "total or triplet_only");
        }}},
      INT_ENTRY("gen.identities", gen.identities, int),
      INT_ENTRY("gen.domains", gen.domains, int),
      INT_ENTRY("gen.dim", gen.dim, std::size_t),
      INT_ENTRY("gen.samples", gen.samples, int),
      DOUBLE_ENTRY("gen.shift", gen.shift),
      DOUBLE_ENTRY("gen.noise", gen.noise),
      INT_ENTRY("gen.seed", gen.seed, std::uint64_t),
      BOOL_ENTRY("eval.normalize", normalize),
      {"eval.holdout_domain",
       {[](const RunConfig& c) {
          return c.holdout_domain ? fmt_int(*c.holdout_domain) : std::string("auto");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "auto") c.holdout_domain.reset();
          else c.holdout_domain = parse_number<int>(k, v);
        }}},
  };
  return entries;
}

#undef DOUBLE_ENTRY
#undef INT_ENTRY
#undef BOOL_ENTRY

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& [name, entry] : table()) {
    if (name == key) {
      entry.set(*this, key, trim(value));
      return;
    }
  }
  throw ValidationError("config: unknown key '" + std::string(key) + "'");
}

void RunConfig::apply_text(std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, entry] : table()) {
    out += name;
    out += '=';
    out += entry.get(*this);
    out += '\n';
  }
  return out;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  cfg.apply_text(text);
  return cfg;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, entry] : table()) out.push_back(name);
    return out;
  }();
  return names;
}

std::optional<Precision> precision_from_env() {
  const char* raw = std::getenv("REID_PRECISION");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string_view v(raw);
  if (v == "f32") return Precision::f32;
  if (v == "f64") return Precision::f64;
  throw ValidationError("REID_PRECISION must be f32 or f64, got '" + std::string(v) + "'");
}

}  // namespace metareid
