#include "metareid/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "metareid/checkpoint.hpp"
#include "metareid/errors.hpp"
#include "metareid/gradcheck.hpp"

namespace metareid {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// Defaults, then REID_PRECISION, then the config file.
RunConfig base_config(const std::string& config_path) {
  RunConfig cfg;
  if (auto p = precision_from_env()) cfg.precision = *p;
  if (!config_path.empty()) cfg.apply_text(read_file(config_path));
  return cfg;
}

template <typename T>
int train_with(const Dataset& data, const RunConfig& cfg, const fs::path& dir, std::ostream& out,
               std::ostream& err) {
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw ValidationError("cannot write metrics in '" + dir.string() + "'");
  const bool baseline = cfg.mode == TrainMode::baseline;
  std::size_t skipped = 0;
  TrainResult<T> result;
  try {
    result = train_loop<T>(data, cfg.train, cfg.mode, [&](const StepReport& r) {
      metrics << metrics_record(r, baseline) << '\n';
      skipped += r.skipped ? 1 : 0;
    });
  } catch (const TrainingAborted& e) {
    metrics.flush();
    err << "error: " << e.what() << '\n';
    return kExitAbort;
  }
  save_checkpoint(to_checkpoint(result.params), dir / "checkpoint.bin");
  out << "trained " << cfg.train.total_iters << " iterations (" << skipped << " skipped) -> "
      << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

template <typename T>
RetrievalResult eval_with(const Checkpoint& ckpt, const Dataset& data, bool normalize,
                          bool on_train) {
  const auto params = params_from_checkpoint<T>(ckpt);
  return on_train ? evaluate_on_train(params, data, normalize)
                  : evaluate_holdout(params, data, normalize);
}

int cmd_gen_data(const GenSpec& spec, const std::string& out_path, std::ostream& out) {
  spec.validate();
  const Dataset data = generate(spec);
  save_csv(data, out_path);
  out << "wrote " << data.size() << " rows (" << data.rows_with(SplitTag::train).size()
      << " train) to " << out_path << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string out_dir;
  std::string config;
  std::optional<std::size_t> iters;
  std::optional<std::uint64_t> seed;
  std::optional<int> holdout;
  bool no_mlr = false;
  bool baseline = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = base_config(a.config);
  if (a.iters) cfg.train.total_iters = *a.iters;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.holdout) cfg.holdout_domain = *a.holdout;
  if (a.no_mlr) cfg.train.mlr_enabled = false;
  if (a.baseline) cfg.mode = TrainMode::baseline;
  cfg.train.validate();

  const Dataset data = load_csv(a.data, cfg.holdout_domain);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_file(dir / "config.txt", cfg.to_text());
  return cfg.precision == Precision::f64 ? train_with<double>(data, cfg, dir, out, err)
                                         : train_with<float>(data, cfg, dir, out, err);
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::optional<int> holdout;
  bool no_normalize = false;
  bool on_train = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset data = load_csv(a.data, a.holdout);
  const auto& first = ckpt.at("trunk0.weight");
  if (first.dims.size() != 2) throw ValidationError("checkpoint: trunk0.weight must be rank 2");
  if (first.dims[0] != data.dim) {
    throw ValidationError("dimension mismatch: checkpoint expects D=" +
                          std::to_string(first.dims[0]) + ", data has D=" +
                          std::to_string(data.dim));
  }
  const bool normalize = !a.no_normalize;
  const RetrievalResult r = first.dtype == DType::f64
                                ? eval_with<double>(ckpt, data, normalize, a.on_train)
                                : eval_with<float>(ckpt, data, normalize, a.on_train);
  if (r.zero_norm_rows > 0) {
    err << "warning: " << r.zero_norm_rows << " zero-norm embedding row(s) left unnormalized\n";
  }
  if (r.report.excluded_queries > 0) {
    err << "warning: " << r.report.excluded_queries
        << " query row(s) without a gallery match were excluded\n";
  }
  const std::string text = report_json(r.report);
  if (a.out.empty()) {
    out << text << '\n';
  } else {
    write_file(a.out, text + "\n");
    out << "mAP=" << r.report.mAP << " rank1=" << r.report.rank1 << " rank5=" << r.report.rank5
        << " rank10=" << r.report.rank10 << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
  if (!(opts.tolerance > 0.0)) throw ValidationError("gradcheck: tolerance must be > 0");
  if (opts.instances < 0) throw ValidationError("gradcheck: instances must be >= 0");
  const auto results = run_gradcheck(opts);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.pass) ++failed;
    out << (r.pass ? "PASS " : "FAIL ") << r.name << " max_rel_err=" << r.max_rel_error
        << " tol=" << r.tolerance;
    if (r.refined > 0) out << " refined_steps=" << r.refined;
    out << '\n';
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitCheckFailed;
}

struct ExperimentArgs {
  std::string out;
  std::string runs_out;
  std::string data;
  std::string config;
  std::optional<std::size_t> iters;
  int seeds = 9;
  std::uint64_t seed_base = 1;
  std::uint64_t data_seed = 0;
  double shift = 1.0;
};

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
  ExperimentOptions opts;
  opts.base = base_config(a.config);
  if (a.iters) opts.base.train.total_iters = *a.iters;
  opts.seeds = a.seeds;
  opts.seed_base = a.seed_base;
  if (opts.seeds < 1) throw ValidationError("experiment: seeds must be >= 1");
  opts.base.train.validate();

  Dataset data;
  if (a.data.empty()) {
    GenSpec spec = opts.base.gen;
    spec.seed = a.data_seed;
    spec.shift = a.shift;
    spec.validate();
    data = generate(spec);
  } else {
    data = load_csv(a.data, opts.base.holdout_domain);
  }

  const auto runs = run_experiment(data, opts);
  const auto rows = summarize(runs);
  std::ostringstream csv;
  write_summary_csv(rows, csv);
  if (a.out.empty()) {
    out << csv.str();
  } else {
    write_file(a.out, csv.str());
    out << csv.str();
  }
  if (!a.runs_out.empty()) {
    std::ostringstream per_run;
    per_run << "arm,seed,mAP,rank1,rank5,rank10\n";
    for (const auto& r : runs) {
      per_run << arm_name(r.arm) << ',' << r.seed << ',' << format_double(r.report.mAP) << ','
              << format_double(r.report.rank1) << ',' << format_double(r.report.rank5) << ','
              << format_double(r.report.rank10) << '\n';
    }
    write_file(a.runs_out, per_run.str());
  }
  return kExitOk;
}

}  // namespace

std::string metrics_record(const StepReport& r, bool baseline) {
  json j;
  j["iter"] = r.iteration;
  j["L_mtr"] = r.loss_mtr;
  if (baseline || !r.loss_mte) {
    j["L_mte"] = nullptr;
  } else {
    j["L_mte"] = *r.loss_mte;
  }
  j["grad_norm"] = r.grad_norm;
  j["lr"] = r.lr;
  j["inner_lr"] = r.inner_lr;
  j["lambdas"] = r.lambdas;
  j["skipped"] = r.skipped;
  return j.dump();
}

std::string report_json(const EvalReport& report) {
  json j;
  j["mAP"] = report.mAP;
  j["rank1"] = report.rank1;
  j["rank5"] = report.rank5;
  j["rank10"] = report.rank10;
  j["num_queries"] = report.num_queries;
  j["num_gallery"] = report.num_gallery;
  j["excluded_queries"] = report.excluded_queries;
  j["cmc"] = report.cmc;
  j["per_query_ap"] = report.per_query_ap;
  return j.dump(2);
}

EvalReport train_and_evaluate(const Dataset& data, const RunConfig& cfg) {
  if (cfg.precision == Precision::f64) {
    auto result = train_loop<double>(data, cfg.train, cfg.mode);
    return evaluate_holdout(result.params, data, cfg.normalize).report;
  }
  auto result = train_loop<float>(data, cfg.train, cfg.mode);
  return evaluate_holdout(result.params, data, cfg.normalize).report;
}

std::string_view arm_name(Arm arm) {
  switch (arm) {
    case Arm::baseline: return "baseline";
    case Arm::meta: return "meta";
    case Arm::meta_mlr: return "meta+mlr";
  }
  return "?";
}

std::vector<ArmRun> run_experiment(const Dataset& data, const ExperimentOptions& opts) {
  std::vector<ArmRun> runs;
  for (Arm arm : {Arm::baseline, Arm::meta, Arm::meta_mlr}) {
    for (int s = 0; s < opts.seeds; ++s) {
      runs.push_back({arm, opts.seed_base + static_cast<std::uint64_t>(s), {}});
    }
  }
  std::vector<std::exception_ptr> failures(runs.size());
  const auto n = static_cast<std::int64_t>(runs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& run = runs[static_cast<std::size_t>(i)];
    try {
      RunConfig cfg = opts.base;
      cfg.train.seed = run.seed;
      cfg.mode = run.arm == Arm::baseline ? TrainMode::baseline : TrainMode::meta;
      cfg.train.mlr_enabled = run.arm == Arm::meta_mlr;
      run.report = train_and_evaluate(data, cfg);
    } catch (...) {
      failures[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return runs;
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median_of: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<SummaryRow> summarize(const std::vector<ArmRun>& runs) {
  std::vector<SummaryRow> rows;
  for (Arm arm : {Arm::baseline, Arm::meta, Arm::meta_mlr}) {
    std::vector<double> metric[4];
    for (const auto& r : runs) {
      if (r.arm != arm) continue;
      metric[0].push_back(r.report.mAP);
      metric[1].push_back(r.report.rank1);
      metric[2].push_back(r.report.rank5);
      metric[3].push_back(r.report.rank10);
    }
    if (metric[0].empty()) continue;
    using Stat = double (*)(const std::vector<double>&);
    const std::pair<const char*, Stat> stats[] = {
        {"mean",
         [](const std::vector<double>& v) {
           return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
         }},
        {"max", [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }},
        {"median", [](const std::vector<double>& v) { return median_of(v); }},
        {"min", [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }},
    };
    for (const auto& [name, fn] : stats) {
      rows.push_back({std::string(arm_name(arm)), name, fn(metric[0]), fn(metric[1]),
                      fn(metric[2]), fn(metric[3])});
    }
  }
  return rows;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& os) {
  os << "arm,statistic,mAP,rank1,rank5,rank10\n";
  for (const auto& r : rows) {
    os << r.arm << ',' << r.statistic << ',' << format_double(r.mAP) << ','
       << format_double(r.rank1) << ',' << format_double(r.rank5) << ','
       << format_double(r.rank10) << '\n';
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Meta-learned re-identification embeddings on synthetic multi-domain data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenSpec gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
  gen_cmd->add_option("--out", gen_out, "Output CSV path")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--ids", gen.identities, "Identities M");
  gen_cmd->add_option("--domains", gen.domains, "Domains C (the last is held out)");
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension D");
  gen_cmd->add_option("--samples", gen.samples, "Samples per identity per domain K");
  gen_cmd->add_option("--shift", gen.shift, "Domain shift scale s");
  gen_cmd->add_option("--noise", gen.noise, "Within-class noise sigma_n");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint + metrics");
  train_cmd->add_option("--data", train.data, "Dataset CSV")->required();
  train_cmd->add_option("--out-dir", train.out_dir, "Run directory")->required();
  train_cmd->add_option("--config", train.config, "key=value config file");
  train_cmd->add_option("--iters", train.iters, "Training iterations");
  train_cmd->add_option("--seed", train.seed, "Training seed");
  train_cmd->add_option("--holdout-domain", train.holdout, "Held-out domain id");
  train_cmd->add_flag("--no-mlr", train.no_mlr, "Disable feature mixing");
  train_cmd->add_flag("--baseline", train.baseline, "Plain ERM training");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out retrieval");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset CSV")->required();
  eval_cmd->add_option("--out", ev.out, "JSON report path (stdout if omitted)");
  eval_cmd->add_option("--holdout-domain", ev.holdout, "Held-out domain id");
  eval_cmd->add_flag("--no-normalize", ev.no_normalize, "Use raw embedding distances");
  eval_cmd->add_flag("--on-train", ev.on_train, "Train rows as query and gallery, self-match removed");

  GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Check gradients against finite differences");
  gc_cmd->add_option("--seed", gc.seed, "Instance seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Max relative error");
  gc_cmd->add_option("--instances", gc.instances, "Full-model instances");

  ExperimentArgs ex;
  auto* ex_cmd = app.add_subcommand("experiment", "baseline / meta / meta+mlr over several seeds");
  ex_cmd->add_option("--out", ex.out, "Summary CSV path");
  ex_cmd->add_option("--runs-out", ex.runs_out, "Per-run CSV path");
  ex_cmd->add_option("--data", ex.data, "Dataset CSV (generated if omitted)");
  ex_cmd->add_option("--config", ex.config, "key=value config file");
  ex_cmd->add_option("--iters", ex.iters, "Training iterations per run");
  ex_cmd->add_option("--seeds", ex.seeds, "Seeds per arm");
  ex_cmd->add_option("--seed-base", ex.seed_base, "First training seed");
  ex_cmd->add_option("--data-seed", ex.data_seed, "Generator seed");
  ex_cmd->add_option("--shift", ex.shift, "Domain shift scale s");

  std::vector<const char*> argv = {"metareid"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, gen_out, out);
    if (*train_cmd) return cmd_train(train, out, err);
    if (*eval_cmd) return cmd_eval(ev, out, err);
    if (*gc_cmd) return cmd_gradcheck(gc, out);
    if (*ex_cmd) return cmd_experiment(ex, out);
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << '\n';
    return kExitAbort;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitAbort;
  }
  return kExitValidation;
}

}  // namespace metareid
