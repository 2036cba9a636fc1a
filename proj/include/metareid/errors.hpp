#pragma once

#include <stdexcept>

namespace metareid {

/// Bad user input: configuration values, malformed files, incompatible data.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training gave up after too many consecutive non-finite iterations.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metareid
