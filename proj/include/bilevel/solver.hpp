#pragma once

#include "bilevel/adaptive.hpp"
#include "bilevel/hypergrad.hpp"
#include "bilevel/reference.hpp"
#include "bilevel/variant.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace bilevel {

/// Which gradient feeds the outer adaptive accumulator.
/// Partial: grad_x f(x_t, y_t; xi_t) from a fresh key. Direction: the current estimate w_t.
enum class OuterMatrixGrad { Partial, Direction };

struct SolverConfig {
  Variant variant = Variant::BiAdam;
  double gamma = 0.1;
  double lambda = 0.1;
  double k = 1.0;
  double m = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  std::optional<int> K;         // none: choose_K(constants, T)
  std::optional<double> theta;  // none: 1 / L_g
  AdaptiveKind outer_kind = AdaptiveKind::Adam;
  AdaptiveKind inner_kind = AdaptiveKind::Norm;
  OuterMatrixGrad outer_grad = OuterMatrixGrad::Partial;
  double tau = 0.9;
  double rho = 0.1;
  std::optional<double> b_max;
  long T = 100;
  std::uint64_t seed = 0;
  std::optional<Vector> x1;  // default: zeros
  std::optional<Vector> y1;  // default: zeros
  bool record_wall_time = false;
  bool keep_iterates = false;

  /// Structural checks, including eta_0 <= 1 and alpha_1, beta_1 <= 1.
  void validate() const;
  /// Copy with K and theta filled in from the problem constants.
  [[nodiscard]] SolverConfig resolved(const ProblemConstants& c) const;
};

struct Schedule {
  double eta;
  double alpha_next;
  double beta_next;
};

/// eta_t = k/(m+t)^{1/2}, alpha = c1 eta, beta = c2 eta for BiAdam;
/// eta_t = k/(m+t)^{1/3}, alpha = c1 eta^2, beta = c2 eta^2 for VR-BiAdam.
Schedule schedule(const SolverConfig& config, long t);

/// coef * fresh + (1 - coef) * prev.
Vector direction_update_momentum(const Vector& prev, const Vector& fresh, double coef);

/// fresh_new + (1 - coef) * (prev - fresh_old); both fresh values share one sample batch.
Vector direction_update_storm(const Vector& prev, const Vector& fresh_new, const Vector& fresh_old, double coef);

struct SolverState {
  long t = 1;
  Vector x;
  Vector y;
  Vector w;
  Vector v;
  AdaptiveState outer;
  AdaptiveState inner;
  std::uint64_t keys_drawn = 0;
  std::uint64_t oracle_evals = 0;
};

struct IterationRecord {
  long t = 0;
  std::optional<double> eta;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> grad_mapping_norm;
  std::optional<double> step_norm_x;
  std::optional<double> dist_y_star;
  std::optional<double> metric_m;
  std::optional<double> surrogate_error;
  std::optional<double> objective;
  std::optional<double> lyapunov;
  std::uint64_t keys_drawn = 0;
  std::uint64_t oracle_evals = 0;
  std::optional<std::int64_t> wall_time_ns;
};

/// Raised when an iterate or estimate becomes non-finite or exceeds 1e12 in norm.
class DivergedError : public NumericalFailure {
 public:
  DivergedError(const std::string& what, IterationRecord rec) : NumericalFailure(what), record_(std::move(rec)) {}
  [[nodiscard]] const IterationRecord& record() const { return record_; }

 private:
  IterationRecord record_;
};

/// Initial estimators for both variants: v_1 = grad_y g(x_1, y_1; zeta_1), w_1 = estimate at (x_1, y_1).
SolverState initialize(const ProblemOracles& oracles, const SolverConfig& config);

struct StepResult {
  SolverState state;
  IterationRecord record;
  Vector x_tilde;
};

/// One full iteration. `config` must be resolved. Diagnostics needing ground truth are
/// filled only when `reference` provides them.
StepResult step(const ProblemOracles& oracles, const SolverConfig& config, const SolverState& state,
                const TaskReference* reference = nullptr);

struct RunResult {
  std::vector<IterationRecord> records;  // t = 0 (initialization) then t = 1..T
  SolverState final_state;
  long output_index = 0;      // uniformly drawn iterate index in [1, T]; 0 when T = 0
  double realized_b_max = 0;  // max inner accumulator over the run, before the +rho offset
  std::vector<Vector> xs;     // x_1..x_{T+1} when keep_iterates
  std::vector<Vector> ys;
};

/// Initialization plus T steps. `sink`, when given, sees every record as it is produced,
/// so a caller keeps the trace prefix if a later step throws DivergedError.
RunResult run(const ProblemOracles& oracles, const SolverConfig& config, const TaskReference* reference = nullptr,
              const std::function<void(const IterationRecord&)>& sink = {});

/// Replays the outer direction recursion of `config.variant` along a fixed path
/// (xs[0..T], ys[0..T]) with the run's sample keys, returning w at the end of the path.
Vector replay_outer_estimate(const ProblemOracles& oracles, const SolverConfig& config, const std::vector<Vector>& xs,
                             const std::vector<Vector>& ys);

}  // namespace bilevel
