#include "bilevel/experiment/runner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace bilevel {

namespace {

constexpr std::uint64_t kSaltX1 = 0x7831000000000000ULL;

std::uint64_t evals_per_iteration(Variant v, int K) {
  const auto k = static_cast<std::uint64_t>(K);
  return v == Variant::BiAdam ? k + 2 : 2 * k + 3;
}

std::string csv_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

unsigned thread_cap(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BILEVEL_OPT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

std::string format_double(double v) { return fmt::format("{}", v); }

BuiltTask build_task(const RunConfig& config) {
  BuiltTask bt;
  if (config.task == TaskKind::Quadratic) {
    const QuadraticParams& q = config.quadratic;
    SpectrumSpec sp;
    sp.mu = q.mu;
    sp.L_g = q.L_g;
    sp.isotropic = q.isotropic;
    sp.family_size = q.hessian_family;
    sp.spread = q.hessian_spread;
    QuadraticSpec spec = random_quadratic({q.d, q.p}, sp, q.coupling, q.c_reg, q.noise_sigma, config.task_seed);
    spec.y_radius = q.y_radius;
    auto task = std::make_shared<QuadraticTask>(build_quadratic(std::move(spec)));
    bt.oracles = task->oracles;
    bt.reference = task->reference;
    bt.quadratic = task;
  } else {
    const HyperCleaningParams& h = config.hypercleaning;
    Dataset train = h.train_csv.empty() ? make_blobs(h.n_train, h.features, h.separation, config.task_seed)
                                        : load_csv(h.train_csv);
    Dataset val = h.val_csv.empty() ? make_blobs(h.n_val, h.features, h.separation, config.task_seed + 1)
                                    : load_csv(h.val_csv);
    CorruptedDataset noisy = corrupt_labels(train, h.corruption, config.task_seed);
    auto task = std::make_shared<HyperCleaningTask>(build_hypercleaning(std::move(noisy.data), std::move(val), h.C_reg, h.batch));
    bt.oracles = task->oracles;
    bt.reference = task->reference;
    bt.hypercleaning = task;
    bt.corrupted_mask = std::move(noisy.mask);
  }
  bt.x1 = Vector::Zero(bt.oracles.dim_x);
  if (config.x1_norm > 0.0) {
    std::mt19937_64 eng(splitmix64(config.task_seed ^ kSaltX1));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < bt.x1.size(); ++i) bt.x1[i] = nd(eng);
    bt.x1 *= config.x1_norm / bt.x1.norm();
  }
  bt.y1 = Vector::Zero(bt.oracles.dim_y);
  return bt;
}

SolverConfig solver_config_for(const RunConfig& config, const BuiltTask& task, std::uint64_t seed) {
  SolverConfig s = config.solver;
  s.seed = seed;
  s.x1 = task.x1;
  s.y1 = task.y1;
  if (config.oracle_budget) {
    const auto budget = static_cast<long>(*config.oracle_budget);
    auto T_for = [&](int K) {
      const long init = K + 2;
      return std::max(0L, (budget - init) / static_cast<long>(evals_per_iteration(s.variant, K)));
    };
    if (s.K) {
      s.T = T_for(*s.K);
    } else {
      // Smallest K meeting its own floor at the T the budget then allows.
      int K = 1;
      while (K < choose_K(task.oracles.constants, std::max(1L, T_for(K)))) ++K;
      s.K = K;
      s.T = T_for(K);
    }
  }
  if (config.theory_box) {
    const auto [b_l, b_u] = inner_bounds(config);
    const TheoremCheck box = theorem_box_parameters(task.oracles.constants, s.variant, s.k, std::max(1L, s.T), s.rho, b_l, b_u);
    s.c1 = box.c1;
    s.c2 = box.c2;
    s.m = box.m;
    s.lambda = box.lambda;
    s.gamma = box.gamma;
    if (!s.K) s.K = box.K;
  }
  return s.resolved(task.oracles.constants);
}

std::pair<double, double> inner_bounds(const RunConfig& config) {
  const double rho = config.solver.rho;
  if (config.b_u) return {rho, std::max(rho, *config.b_u)};
  if (config.solver.b_max) return {rho, *config.solver.b_max + rho};
  return {rho, rho};
}

std::vector<Violation> check_theory(const RunConfig& config, const BuiltTask& task) {
  const SolverConfig s = solver_config_for(config, task, config.solver.seed);
  const auto [b_l, b_u] = inner_bounds(config);
  TheoremCheck p;
  p.variant = s.variant;
  p.k = s.k;
  p.m = s.m;
  p.c1 = s.c1;
  p.c2 = s.c2;
  p.lambda = s.lambda;
  p.gamma = s.gamma;
  p.K = *s.K;
  p.T = std::max(1L, s.T);
  p.rho = s.rho;
  p.b_l = b_l;
  p.b_u = b_u;
  return validate_theorem(task.oracles.constants, p);
}

void enforce_theory(const RunConfig& config, const BuiltTask& task) {
  const auto v = check_theory(config, task);
  if (v.empty()) return;
  std::string msg = "theorem conditions violated:";
  for (const auto& e : v) msg += "\n  " + e.key + ": " + e.message;
  throw ContractViolation(msg);
}

void write_trace(std::ostream& os, const std::vector<IterationRecord>& records) {
  os << kTraceHeader << '\n';
  for (const auto& r : records) {
    os << r.t << ',' << csv_opt(r.eta) << ',' << csv_opt(r.alpha) << ',' << csv_opt(r.beta) << ','
       << csv_opt(r.grad_mapping_norm) << ',' << csv_opt(r.step_norm_x) << ',' << csv_opt(r.dist_y_star) << ','
       << csv_opt(r.metric_m) << ',' << csv_opt(r.surrogate_error) << ',' << csv_opt(r.objective) << ','
       << csv_opt(r.lyapunov) << ',' << r.keys_drawn << ',' << r.oracle_evals << ','
       << (r.wall_time_ns ? std::to_string(*r.wall_time_ns) : std::string()) << '\n';
  }
}

void write_summary(std::ostream& os, const std::vector<SeedSummary>& rows) {
  os << "seed,status,iterations,oracle_evals,final_objective,final_metric_m,mean_metric_m,final_grad_mapping_norm,"
        "mean_grad_mapping_norm,final_grad_norm,weight_auc,output_index,realized_b_max,message\n";
  for (const auto& r : rows) {
    os << r.seed << ',' << r.status << ',' << r.iterations << ',' << r.oracle_evals << ',' << csv_opt(r.final_objective)
       << ',' << csv_opt(r.final_metric_m) << ',' << csv_opt(r.mean_metric_m) << ','
       << csv_opt(r.final_grad_mapping_norm) << ',' << csv_opt(r.mean_grad_mapping_norm) << ','
       << csv_opt(r.final_grad_norm) << ',' << csv_opt(r.weight_auc) << ',' << r.output_index << ','
       << format_double(r.realized_b_max) << ',' << csv_escape(r.message) << '\n';
  }
}

namespace {

std::optional<double> mean_of(const std::vector<IterationRecord>& recs, std::optional<double> IterationRecord::*field) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : recs) {
    if (r.t >= 1 && (r.*field)) {
      acc += *(r.*field);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

SeedSummary run_one(const RunConfig& config, const BuiltTask& task, std::uint64_t seed, const std::filesystem::path& trace) {
  SeedSummary sum;
  sum.seed = seed;
  std::vector<IterationRecord> recs;
  try {
    const SolverConfig s = solver_config_for(config, task, seed);
    try {
      RunResult res = run(task.oracles, s, &task.reference, [&](const IterationRecord& r) { recs.push_back(r); });
      sum.output_index = res.output_index;
      sum.realized_b_max = res.realized_b_max;
      if (task.reference.grad_F) sum.final_grad_norm = task.reference.grad_F(res.final_state.x).norm();
      if (task.hypercleaning) {
        std::vector<bool> clean(task.corrupted_mask.size());
        std::transform(task.corrupted_mask.begin(), task.corrupted_mask.end(), clean.begin(), [](bool c) { return !c; });
        const bool both = std::find(clean.begin(), clean.end(), true) != clean.end() &&
                          std::find(clean.begin(), clean.end(), false) != clean.end();
        if (both) sum.weight_auc = roc_auc(res.final_state.x, clean);
      }
    } catch (const DivergedError& e) {
      recs.push_back(e.record());
      sum.status = "diverged";
      sum.message = e.what();
    }
  } catch (const std::exception& e) {
    sum.status = "error";
    sum.message = e.what();
  }
  if (!recs.empty()) {
    const auto& last = recs.back();
    sum.iterations = last.t;
    sum.oracle_evals = last.oracle_evals;
    sum.final_objective = last.objective;
    sum.final_metric_m = last.metric_m;
    sum.final_grad_mapping_norm = last.grad_mapping_norm;
    sum.mean_metric_m = mean_of(recs, &IterationRecord::metric_m);
    sum.mean_grad_mapping_norm = mean_of(recs, &IterationRecord::grad_mapping_norm);
  }
  std::ofstream f(trace, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + trace.string());
  write_trace(f, recs);
  if (!f) throw std::runtime_error("write failed for " + trace.string());
  return sum;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir, bool enforce,
                                unsigned threads) {
  const BuiltTask task = build_task(config);
  if (enforce) enforce_theory(config, task);
  std::filesystem::create_directories(out_dir);

  const auto n = static_cast<std::size_t>(config.repeats);
  std::vector<SeedSummary> rows(n);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string io_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const std::uint64_t seed = config.solver.seed + i;
      try {
        rows[i] = run_one(config, task, seed, out_dir / ("trace_" + std::to_string(seed) + ".csv"));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (io_error.empty()) io_error = e.what();
      }
    }
  };
  const unsigned nt = std::min<unsigned>(thread_cap(threads), static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < nt; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (!io_error.empty()) throw std::runtime_error(io_error);

  std::ofstream f(out_dir / "summary.csv", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (out_dir / "summary.csv").string());
  write_summary(f, rows);

  ExperimentResult res;
  res.seeds = std::move(rows);
  res.exit_status = std::all_of(res.seeds.begin(), res.seeds.end(), [](const SeedSummary& s) { return s.status == "ok"; }) ? 0 : 1;
  return res;
}

std::vector<BiasRow> bias_scan(const RunConfig& config, const std::vector<int>& K_list) {
  if (config.task != TaskKind::Quadratic) throw ContractViolation("bias-scan: only the quadratic task has an exact surrogate");
  const BuiltTask task = build_task(config);
  if (!task.oracles.deterministic) {
    throw ContractViolation("bias-scan: task oracles are stochastic; set noise_sigma = 0 and hessian_family = 1");
  }
  const ProblemOracles& pop = *task.reference.population;
  const double theta = config.solver.theta.value_or(1.0 / pop.constants.L_g);
  const Vector exact = task.reference.surrogate(task.x1, task.y1);
  std::vector<BiasRow> rows;
  for (int K : K_list) {
    detail::require(K >= 1, "bias-scan: K must be >= 1");
    const double measured = (exact - expected_neumann(pop, task.x1, task.y1, theta, K)).norm();
    rows.push_back({K, measured, bias_bound(pop.constants, K)});
  }
  return rows;
}

void write_bias_scan(std::ostream& os, const std::vector<BiasRow>& rows) {
  os << "K,measured_bias,bound\n";
  for (const auto& r : rows) os << r.K << ',' << format_double(r.measured) << ',' << format_double(r.bound) << '\n';
}

}  // namespace bilevel
