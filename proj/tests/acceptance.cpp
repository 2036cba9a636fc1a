// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metareid/checkpoint.hpp"
#include "metareid/cli.hpp"
#include "metareid/gradcheck.hpp"
#include "metareid/meta.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace metareid;
using V = Var<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "; failed: ";
      else detail << ", ";
      detail << what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

oracle::Matrix to_rows(const Tensor<double>& t) {
  oracle::Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t(i, j);
  }
  return m;
}

// 1. Meta-gradient against central finite differences on 20 seeded instances.
void gradient_oracle_suite(Outcome& o) {
  const auto start = Clock::now();
  double worst = 0.0;
  int passed = 0;
  constexpr int kInstances = 20;
  for (int i = 0; i < kInstances; ++i) {
    auto inst = make_meta_check_instance(static_cast<std::uint64_t>(i), i % 2 == 0);
    if (inst.cfg.inner_optimizer != InnerOptimizer::sgd_differentiable) {
      o.require(false, "instance uses a non-differentiable inner step");
    }
    auto r = check_meta_gradient(inst, 1e-4, "instance");
    worst = std::max(worst, r.max_rel_error);
    passed += r.pass ? 1 : 0;
  }
  const double elapsed = seconds_since(start);
  o.detail << passed << "/" << kInstances << " instances, max_rel_err=" << worst
           << " (tol 1e-4), " << elapsed << " s";
  o.require(passed == kInstances && worst < 1e-4, "relative error");
  o.require(elapsed < 60.0, "runtime >= 60 s");
}

// 2. Scalar quadratic bilevel case, through the generic bilevel objective.
void closed_form_bilevel(Outcome& o) {
  const auto start = Clock::now();
  auto theta = V::leaf(Tensor<double>::scalar(1.0));
  const std::vector<V> params = {theta};
  ScalarLossFn<double> half = [](std::span<const V> p) { return scale(mul(p[0], p[0]), 0.5); };
  auto outer_grad = [&](bool differentiable) {
    auto terms = bilevel_objective<double>(params, half, half, 0.1,
                                           InnerOptimizer::sgd_differentiable, {},
                                           differentiable);
    return grad<double>(terms.objective, params)[0].value().item();
  };
  const double meta = outer_grad(true);
  const double naive = outer_grad(false);
  const double elapsed = seconds_since(start);
  o.detail << "outer_grad=" << meta << " (oracle " << oracle::quadratic_meta_gradient(1.0, 0.1)
           << "), first_order=" << naive << ", " << elapsed << " s";
  o.require(std::abs(meta - 1.81) <= 1e-10, "meta gradient != 1.81");
  o.require(std::abs(meta - oracle::quadratic_meta_gradient(1.0, 0.1)) <= 1e-10, "oracle mismatch");
  o.require(std::abs(naive - 1.9) <= 1e-10 && std::abs(meta - naive) > 1e-3,
            "not distinguishable from first order");
  o.require(elapsed < 1.0, "runtime >= 1 s");
}

std::vector<int> random_ids(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_ids(2, 5), per(2, 4);
  std::vector<int> ids;
  const int m = n_ids(rng);
  for (int id = 0; id < m; ++id) {
    const int k = per(rng);
    for (int j = 0; j < k && ids.size() < 16; ++j) ids.push_back(id);
  }
  if (ids.size() >= 2 && ids[ids.size() - 1] != ids[ids.size() - 2]) ids.pop_back();
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

// 3. Triplet loss exact against all-triplets mining; cross-entropy against naive softmax.
void loss_oracles(Outcome& o) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> margin(0.0, 1.0);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto ids = random_ids(rng);
    auto x = testutil::random_tensor({ids.size(), static_cast<std::size_t>(dim(rng))}, rng);
    const double m = margin(rng);
    const double got = triplet_batch_hard(V::constant(x), ids, m).item();
    exact += got == oracle::triplet_all_triplets(to_rows(x), ids, m) ? 1 : 0;
  }
  double worst_ce = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto z = testutil::random_tensor({3, 5}, rng, -3.0, 3.0);
    std::uniform_int_distribution<int> label(0, 4);
    const std::vector<int> ids = {label(rng), label(rng), label(rng)};
    worst_ce = std::max(worst_ce, std::abs(id_cross_entropy(V::constant(z), ids).item() -
                                           oracle::naive_cross_entropy(to_rows(z), ids)));
  }
  o.detail << "triplet exact on " << exact << "/100 batches, cross-entropy max_abs_err="
           << worst_ce << " (tol 1e-10)";
  o.require(exact == 100, "triplet mismatch");
  o.require(worst_ce <= 1e-10, "cross-entropy error");
}

// 4. Retrieval metrics exact against brute force, plus the hand-checked case.
void metric_oracles(Outcome& o) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> size(1, 20);
  std::uniform_int_distribution<int> id(0, 4), level(0, 5);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nq = size(rng), ng = size(rng);
    Tensor<double> dist(Shape{nq, ng});
    std::vector<int> qids(nq), gids(ng);
    for (auto& q : qids) q = id(rng);
    for (auto& g : gids) g = id(rng);
    for (auto& v : dist.data()) v = level(rng) * 0.25;
    const auto want = oracle::brute_force_retrieval(to_rows(dist), qids, gids);
    const auto got = evaluate(dist, qids, gids);
    const bool same = got.per_query_ap == want.ap && got.excluded_queries == want.excluded &&
                      (want.ap.empty() ? got.num_queries == 0
                                       : got.cmc == want.cmc && got.mAP == want.mAP);
    exact += same ? 1 : 0;
  }
  auto hand = Tensor<double>::matrix(1, 3, {0.1, 0.2, 0.3});
  const std::vector<int> q = {1};
  const std::vector<int> g = {2, 1, 1};
  const double ap = evaluate(hand, q, g).per_query_ap.at(0);
  o.detail << "exact on " << exact << "/100 instances, hand case AP=" << ap;
  o.require(exact == 100, "brute-force mismatch");
  o.require(std::abs(ap - 0.58333) < 5e-6 && std::abs(ap - 7.0 / 12.0) < 1e-15, "hand case");
}

Dataset small_dataset(std::uint64_t seed) {
  GenSpec g;
  g.identities = 8;
  g.domains = 4;
  g.dim = 8;
  g.samples = 4;
  g.seed = seed;
  return generate(g);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.identities_per_batch = 4;
  cfg.samples_per_identity = 4;
  cfg.model = ModelDims{0, 16, 8, 6, 0};
  cfg.inner_lr = 0.05;
  cfg.outer_lr = 1e-3;
  return cfg;
}

// 5. Collapse identities.
void collapse_identities(Outcome& o) {
  // (a) alpha = 0, no mixing: meta gradient is the gradient of L(batch_mtr) + L(batch_mte).
  double worst_a = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto data = small_dataset(seed);
    auto cfg = small_config();
    cfg.mlr_enabled = false;
    cfg.seed = seed;
    auto state = make_train_state<double>(model_dims_for(data, cfg), cfg);
    auto batch = sample_pk_batch(data, cfg.identities_per_batch, cfg.samples_per_identity,
                                 state.sampler_rng);
    auto split = split_episode(batch, state.sampler_rng);
    const auto& params = state.params;
    auto mg = compute_meta_gradient<double>(params, split, cfg, 0.0, {}, nullptr);
    auto theta = as_leaves(params.weights);
    auto loss_of = [&](const EpisodeBatch& half) {
      auto out = forward(theta, V::constant(half.features), Mode::train, params.buffers);
      return total_loss(out, half.ids, cfg.loss);
    };
    auto total = add(loss_of(split.meta_train), loss_of(split.meta_test));
    auto plain = grad<double>(total, theta.to_vector(), {.allow_unused = true});
    for (std::size_t k = 0; k < plain.size(); ++k) {
      const auto& p = plain[k].value();
      for (std::size_t i = 0; i < p.numel(); ++i) {
        worst_a = std::max(worst_a, std::abs(mg.grads[k][i] - p[i]));
      }
    }
  }
  // (b) lambda = 1 against MLR off, 32-bit, full trace.
  auto data = small_dataset(1);
  auto cfg = small_config();
  cfg.total_iters = 200;
  auto unit = cfg;
  unit.lambda_override = 1.0;
  unit.include_unmixed_meta_test = false;
  auto off = cfg;
  off.mlr_enabled = false;
  auto a = train_loop<float>(data, unit, TrainMode::meta);
  auto b = train_loop<float>(data, off, TrainMode::meta);
  double worst_b = a.trace.size() == b.trace.size() ? 0.0 : INFINITY;
  for (std::size_t t = 0; t < std::min(a.trace.size(), b.trace.size()); ++t) {
    worst_b = std::max(worst_b, std::abs(a.trace[t].loss_mtr - b.trace[t].loss_mtr));
    worst_b = std::max(worst_b, std::abs(*a.trace[t].loss_mte - *b.trace[t].loss_mte));
  }
  // (c) beta = 0: parameters bitwise unchanged.
  auto frozen = small_config();
  frozen.outer_lr = 0.0;
  frozen.total_iters = 50;
  auto init = make_train_state<float>(model_dims_for(data, frozen), frozen).params.weights;
  auto after = train_loop<float>(data, frozen, TrainMode::meta).params.weights;
  bool bitwise = true;
  for (std::size_t k = 0; k < init.kCount; ++k) {
    bitwise = bitwise && *init.refs()[k] == *after.refs()[k];
  }
  o.detail << "(a) max_abs_diff=" << worst_a << " (tol 1e-8); (b) max_trace_diff=" << worst_b
           << " over " << a.trace.size() << " iters (tol 1e-5, f32); (c) "
           << (bitwise ? "bitwise unchanged" : "weights moved");
  o.require(worst_a <= 1e-8, "(a)");
  o.require(worst_b <= 1e-5, "(b)");
  o.require(bitwise, "(c)");
}

// Independent split audit: the halves partition the batch, every identity keeps
// a positive in each half, and the meta-test domain is absent from meta-train.
std::vector<std::string> audit_split(const EpisodeBatch& batch, const EpisodeSplit& split) {
  std::vector<std::string> problems;
  std::vector<std::size_t> all = batch.rows, joined = split.meta_train.rows;
  joined.insert(joined.end(), split.meta_test.rows.begin(), split.meta_test.rows.end());
  std::sort(all.begin(), all.end());
  std::sort(joined.begin(), joined.end());
  if (all != joined) problems.push_back("coverage");
  std::set<std::size_t> tr(split.meta_train.rows.begin(), split.meta_train.rows.end());
  for (auto r : split.meta_test.rows) {
    if (tr.count(r)) problems.push_back("overlap");
  }
  for (const EpisodeBatch* half : {&split.meta_train, &split.meta_test}) {
    std::map<int, int> n;
    for (int id : half->ids) ++n[id];
    for (const auto& [id, c] : n) {
      if (c < 2) problems.push_back("identity without positive");
    }
  }
  if (!split.fallback) {
    std::set<int> test_domains(split.meta_test.domains.begin(), split.meta_test.domains.end());
    if (test_domains.size() != 1) problems.push_back("meta-test spans several domains");
    for (int d : split.meta_train.domains) {
      if (test_domains.count(d)) problems.push_back("domain in both halves");
    }
  }
  return problems;
}

// 6. Split invariants on every iteration of a 1000-iteration run.
void split_invariants(Outcome& o) {
  auto data = generate(GenSpec{});
  TrainConfig cfg;
  cfg.total_iters = 1000;
  auto state = make_train_state<float>(model_dims_for(data, cfg), cfg);
  std::size_t violations = 0, reported = 0, fallbacks = 0;
  for (std::size_t t = 0; t < cfg.total_iters; ++t) {
    auto batch = sample_pk_batch(data, cfg.identities_per_batch, cfg.samples_per_identity,
                                 state.sampler_rng);
    auto rng_copy = state.sampler_rng;
    violations += audit_split(batch, split_episode(batch, rng_copy)).size();
    auto report = meta_step(state, batch, cfg);
    reported += report.split_violations;
    fallbacks += report.fallback_split ? 1 : 0;
  }
  o.detail << cfg.total_iters << " iterations, audit violations=" << violations
           << ", reported violations=" << reported << ", fallback splits=" << fallbacks;
  o.require(violations == 0 && reported == 0, "violations");
}

// 7. Directional ablation: 3 arms x 9 seeds on the default generator, 3 generator seeds.
void directional_ablation(Outcome& o) {
  const auto start = Clock::now();
  int map_wins = 0;
  bool rank1_ok = true;
  for (std::uint64_t data_seed = 0; data_seed < 3; ++data_seed) {
    GenSpec spec;
    spec.seed = data_seed;
    auto data = generate(spec);
    ExperimentOptions opts;
    opts.seeds = 9;
    auto runs = run_experiment(data, opts);
    std::map<Arm, std::vector<double>> rank1, map;
    for (const auto& r : runs) {
      rank1[r.arm].push_back(r.report.rank1);
      map[r.arm].push_back(r.report.mAP);
    }
    const double r_base = median_of(rank1[Arm::baseline]);
    const double r_meta = median_of(rank1[Arm::meta]);
    const double r_mlr = median_of(rank1[Arm::meta_mlr]);
    const double m_base = median_of(map[Arm::baseline]);
    const double m_meta = median_of(map[Arm::meta]);
    const double m_mlr = median_of(map[Arm::meta_mlr]);
    const bool rank1_here = r_meta >= r_base && r_mlr >= r_base;
    const bool map_here = m_mlr >= m_base && m_mlr >= m_meta;
    rank1_ok = rank1_ok && rank1_here;
    map_wins += map_here ? 1 : 0;
    std::printf("  gen seed %llu: median rank1 baseline=%.4f meta=%.4f meta+mlr=%.4f | "
                "median mAP baseline=%.4f meta=%.4f meta+mlr=%.4f\n",
                static_cast<unsigned long long>(data_seed), r_base, r_meta, r_mlr, m_base,
                m_meta, m_mlr);
  }
  const double elapsed = seconds_since(start);
  o.detail << "rank1 ordering " << (rank1_ok ? "holds" : "violated") << " on all gen seeds, "
           << "meta+mlr best median mAP on " << map_wins << "/3, " << elapsed << " s";
  o.require(rank1_ok, "median rank1 below baseline");
  o.require(map_wins >= 2, "meta+mlr not best in >= 2 of 3");
}

// 8. Determinism and formats.
void determinism_and_formats(Outcome& o) {
  testutil::TempDir dir("acceptance");
  std::ostringstream out, err;
  const auto data = dir.file("data.csv");
  bool ok = run_cli({"gen-data", "--out", data, "--seed", "11"}, out, err) == kExitOk;
  for (const char* run : {"a", "b"}) {
    ok = ok && run_cli({"train", "--data", data, "--out-dir", dir.file(run), "--iters", "100",
                        "--seed", "5"},
                       out, err) == kExitOk;
  }
  const bool metrics_same = ok && !testutil::read_file(dir.path() / "a" / "metrics.jsonl").empty() &&
                            testutil::read_file(dir.path() / "a" / "metrics.jsonl") ==
                                testutil::read_file(dir.path() / "b" / "metrics.jsonl");
  bool ckpt_same = false;
  if (ok) {
    const auto path = dir.path() / "a" / "checkpoint.bin";
    const auto ckpt = load_checkpoint(path);
    const auto again = dir.path() / "again.bin";
    save_checkpoint(to_checkpoint(params_from_checkpoint<float>(ckpt)), again);
    ckpt_same = testutil::read_file(path) == testutil::read_file(again);
  }
  auto dataset = generate(GenSpec{});
  dataset.features[0] = 0.1 + 0.2;
  dataset.features[1] = -1e-300;
  save_csv(dataset, dir.file("rt.csv"));
  const bool csv_same = load_csv(dir.file("rt.csv")) == dataset;
  o.detail << "metrics " << (metrics_same ? "byte-identical" : "differ") << ", checkpoint "
           << (ckpt_same ? "byte-identical" : "differs") << ", csv "
           << (csv_same ? "value-exact" : "differs");
  if (!ok) o.detail << " (cli: " << err.str() << ")";
  o.require(metrics_same, "metrics");
  o.require(ckpt_same, "checkpoint");
  o.require(csv_same, "csv");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"gradient oracle suite", gradient_oracle_suite},
      {"closed-form bilevel case", closed_form_bilevel},
      {"loss oracles", loss_oracles},
      {"metric oracles", metric_oracles},
      {"collapse identities", collapse_identities},
      {"split invariants", split_invariants},
      {"directional ablation", directional_ablation},
      {"determinism and formats", determinism_and_formats},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " ("
              << criteria[i].first << "): " << o.detail.str() << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
