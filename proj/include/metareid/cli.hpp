#pragma once

// Command-line surface: gen-data, train, eval, gradcheck, experiment.
// Exit codes: 0 ok, 1 check failure, 2 validation error, 3 runtime abort.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "metareid/config.hpp"
#include "metareid/eval.hpp"

namespace metareid {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitAbort = 3;

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One JSON object per line: iter, L_mtr, L_mte (null for baseline steps),
/// grad_norm, lr, inner_lr, lambdas, skipped.
std::string metrics_record(const StepReport& report, bool baseline);

std::string report_json(const EvalReport& report);

/// Trains with cfg.precision and evaluates on the held-out query/gallery split.
EvalReport train_and_evaluate(const Dataset& data, const RunConfig& cfg);

enum class Arm { baseline, meta, meta_mlr };
std::string_view arm_name(Arm arm);

struct ExperimentOptions {
  RunConfig base;  // train settings shared by every arm
  int seeds = 9;
  std::uint64_t seed_base = 1;
};

struct ArmRun {
  Arm arm = Arm::baseline;
  std::uint64_t seed = 0;
  EvalReport report;
};

/// Every arm on every seed, ordered arm-major. Runs execute concurrently when
/// OpenMP is available; results do not depend on scheduling.
std::vector<ArmRun> run_experiment(const Dataset& data, const ExperimentOptions& opts);

struct SummaryRow {
  std::string arm;
  std::string statistic;  // mean, max, median, min
  double mAP = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<ArmRun>& runs);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& os);

/// Mean of the two middle values for even counts.
double median_of(std::vector<double> values);

}  // namespace metareid
