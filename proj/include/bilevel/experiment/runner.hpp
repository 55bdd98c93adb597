#pragma once

#include "bilevel/experiment/config.hpp"
#include "bilevel/tasks/hypercleaning.hpp"
#include "bilevel/tasks/quadratic.hpp"
#include "bilevel/theory.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

namespace bilevel {

/// A task instance as the runner sees it: stochastic oracles, reference and start point.
struct BuiltTask {
  ProblemOracles oracles;
  TaskReference reference;
  Vector x1;
  Vector y1;
  std::shared_ptr<const QuadraticTask> quadratic;
  std::shared_ptr<const HyperCleaningTask> hypercleaning;
  std::vector<bool> corrupted_mask;
};

BuiltTask build_task(const RunConfig& config);

/// Solver configuration for one seed with T derived from the oracle budget when set.
SolverConfig solver_config_for(const RunConfig& config, const BuiltTask& task, std::uint64_t seed);

/// Lower and upper bounds of B_t used for theorem checks: b_l = rho and b_u from the
/// config, else b_max + rho when capped, else rho (b_u is then only a lower estimate).
std::pair<double, double> inner_bounds(const RunConfig& config);

std::vector<Violation> check_theory(const RunConfig& config, const BuiltTask& task);
/// Throws ContractViolation listing every violated hypothesis.
void enforce_theory(const RunConfig& config, const BuiltTask& task);

inline constexpr const char* kTraceHeader =
    "t,eta,alpha,beta,grad_mapping_norm,step_norm_x,dist_y_star,metric_m,surrogate_error,objective,lyapunov,"
    "keys_drawn,oracle_evals,wall_time_ns";

void write_trace(std::ostream& os, const std::vector<IterationRecord>& records);

struct SeedSummary {
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | diverged | error
  std::string message;
  long iterations = 0;
  std::uint64_t oracle_evals = 0;
  std::optional<double> final_objective;
  std::optional<double> final_metric_m;
  std::optional<double> mean_metric_m;
  std::optional<double> final_grad_mapping_norm;
  std::optional<double> mean_grad_mapping_norm;
  std::optional<double> final_grad_norm;  // ||grad F(x_{T+1})|| when the task knows grad F
  std::optional<double> weight_auc;       // hyper-cleaning: AUC of sigmoid(z) for clean rows
  long output_index = 0;
  double realized_b_max = 0.0;
};

void write_summary(std::ostream& os, const std::vector<SeedSummary>& rows);

struct ExperimentResult {
  std::vector<SeedSummary> seeds;
  int exit_status = 0;
};

/// One trace per seed in seed..seed+repeats-1 plus summary.csv, all under out_dir.
/// Seeds run on up to `threads` threads (BILEVEL_OPT_THREADS when threads = 0).
ExperimentResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir, bool enforce = false,
                                unsigned threads = 0);

struct BiasRow {
  int K;
  double measured;
  double bound;
};

/// Measured ||surrogate - E_k[estimate]|| at (x1, y1) against the bias bound, per K.
/// Refuses tasks whose oracles are not deterministic.
std::vector<BiasRow> bias_scan(const RunConfig& config, const std::vector<int>& K_list);
void write_bias_scan(std::ostream& os, const std::vector<BiasRow>& rows);

/// Shortest round-trip decimal form used in every CSV.
std::string format_double(double v);

}  // namespace bilevel
