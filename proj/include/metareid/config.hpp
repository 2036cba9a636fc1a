#pragma once

// key=value run configuration. Blank lines and lines starting with '#' are
// ignored; unknown keys and malformed values raise ValidationError.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metareid/data.hpp"
#include "metareid/meta.hpp"

namespace metareid {

enum class Precision { f32, f64 };

struct RunConfig {
  TrainConfig train;
  TrainMode mode = TrainMode::meta;
  GenSpec gen;
  bool normalize = true;
  std::optional<int> holdout_domain;
  Precision precision = Precision::f32;

  /// Sets one entry; throws ValidationError naming the key on failure.
  void set(std::string_view key, std::string_view value);
  /// Applies every entry of a key=value document.
  void apply_text(std::string_view text);
  /// Every key with its resolved value, one per line, in a fixed order.
  [[nodiscard]] std::string to_text() const;

  static RunConfig parse(std::string_view text);
  static const std::vector<std::string>& keys();
};

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

/// REID_PRECISION, if set; throws ValidationError on anything but f32/f64.
std::optional<Precision> precision_from_env();

}  // namespace metareid
