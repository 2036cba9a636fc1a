#pragma once

// Self-contained gradient checks against central finite differences at 64-bit.

#include <cstdint>
#include <string>
#include <vector>

#include "metareid/meta.hpp"

namespace metareid {

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::size_t refined = 0;  // finite-difference coordinates that needed a smaller step
};

/// First- and second-order checks of every differentiable op on random inputs.
std::vector<CheckResult> check_op_suite(std::uint64_t seed, double tolerance);

struct QuadraticMetaGradient {
  double meta = 0.0;         // d/dtheta [L(theta) + L(theta - alpha L'(theta))]
  double first_order = 0.0;  // L'(theta) + L'(theta') with theta' treated as a constant
};

/// L(theta) = theta^2 / 2 on both halves.
QuadraticMetaGradient quadratic_meta_gradient(double theta, double alpha);

/// A small seeded model, batch split and frozen MLR draws for checking the full
/// bilevel objective.
struct MetaCheckInstance {
  ModelParams<double> params;
  EpisodeSplit split;
  TrainConfig cfg;
  MlrDraws<double> draws;
  InnerAdamState<double> inner_state;
};

MetaCheckInstance make_meta_check_instance(std::uint64_t seed, bool mlr = true);

/// Analytic meta-gradient against kink-aware central differences of the
/// composite objective.
CheckResult check_meta_gradient(const MetaCheckInstance& inst, double tolerance,
                                const std::string& name);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  int instances = 20;
};

std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opts);

}  // namespace metareid
