#include "bilevel/solver.hpp"

#include "bilevel/theory.hpp"

#include <chrono>
#include <cmath>

namespace bilevel {

namespace {

constexpr std::uint64_t kSlotAdaptiveXi = 0;
constexpr std::uint64_t kSlotAdaptiveZeta = 1;
constexpr std::uint64_t kSlotInnerGrad = 2;
constexpr std::uint64_t kSlotOutputIndex = 7;
constexpr double kDivergence = 1e12;

double exponent(Variant v) { return v == Variant::BiAdam ? 0.5 : 1.0 / 3.0; }

double eta_at(const SolverConfig& c, double t) { return c.k / std::pow(c.m + t, exponent(c.variant)); }

bool blown(const Vector& z) { return !z.allFinite() || z.norm() > kDivergence; }

std::uint64_t estimator_evals(int K) { return static_cast<std::uint64_t>(K) + 1; }

}  // namespace

void SolverConfig::validate() const {
  detail::require(gamma > 0.0 && std::isfinite(gamma), "gamma must be positive");
  detail::require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
  detail::require(k > 0.0 && std::isfinite(k), "k must be positive");
  detail::require(m >= 1.0 && std::isfinite(m), "m must be >= 1");
  detail::require(c1 > 0.0 && std::isfinite(c1), "c1 must be positive");
  detail::require(c2 > 0.0 && std::isfinite(c2), "c2 must be positive");
  detail::require(T >= 0, "T must be >= 0");
  detail::require(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
  detail::require(rho > 0.0 && std::isfinite(rho), "rho must be positive");
  if (K) detail::require(*K >= 1, "K must be >= 1");
  if (theta) detail::require(*theta > 0.0, "theta must be positive");
  if (b_max) detail::require(*b_max >= 0.0, "b_max must be >= 0");
  detail::require(outer_kind != AdaptiveKind::Norm, "outer_adaptive: norm is only defined for the inner matrix");
  detail::require(inner_kind != AdaptiveKind::Adam, "inner_adaptive: adam is only defined for the outer matrix");
  const double eta0 = eta_at(*this, 0.0);
  detail::require(eta0 <= 1.0, "schedule infeasible: eta_0 = k/m^(1/" + std::string(variant == Variant::BiAdam ? "2" : "3") +
                                   ") must be <= 1");
  const double scale = variant == Variant::BiAdam ? eta0 : eta0 * eta0;
  detail::require(c1 * scale <= 1.0, "schedule infeasible: c1 makes alpha_1 > 1; raise m");
  detail::require(c2 * scale <= 1.0, "schedule infeasible: c2 makes beta_1 > 1; raise m");
}

SolverConfig SolverConfig::resolved(const ProblemConstants& c) const {
  SolverConfig out = *this;
  if (!out.K) out.K = choose_K(c, std::max<long>(T, 1));
  if (!out.theta) out.theta = 1.0 / c.L_g;
  return out;
}

Schedule schedule(const SolverConfig& config, long t) {
  detail::require(t >= 1, "schedule: t must be >= 1");
  const double eta = eta_at(config, static_cast<double>(t));
  const double s = config.variant == Variant::BiAdam ? eta : eta * eta;
  return {eta, config.c1 * s, config.c2 * s};
}

Vector direction_update_momentum(const Vector& prev, const Vector& fresh, double coef) {
  detail::require(coef > 0.0 && coef <= 1.0, "direction_update_momentum: coef must lie in (0,1]");
  return coef * fresh + (1.0 - coef) * prev;
}

Vector direction_update_storm(const Vector& prev, const Vector& fresh_new, const Vector& fresh_old, double coef) {
  detail::require(coef > 0.0 && coef <= 1.0, "direction_update_storm: coef must lie in (0,1]");
  return fresh_new + (1.0 - coef) * (prev - fresh_old);
}

SolverState initialize(const ProblemOracles& oracles, const SolverConfig& config) {
  detail::require(config.K.has_value() && config.theta.has_value(), "initialize: config must be resolved");
  SolverState s;
  s.t = 1;
  s.x = config.x1.value_or(Vector::Zero(oracles.dim_x));
  s.y = config.y1.value_or(Vector::Zero(oracles.dim_y));
  detail::require_dim(s.x.size(), oracles.dim_x, "initialize(x1)");
  detail::require_dim(s.y.size(), oracles.dim_y, "initialize(y1)");
  detail::require(oracles.set_x.contains(s.x), "initialize: x1 must lie in the outer set");
  detail::require(oracles.set_y.contains(s.y), "initialize: y1 must lie in the inner set");
  s.outer = AdaptiveState::make(oracles.dim_x, config.outer_kind, config.tau, config.rho);
  s.inner = AdaptiveState::make(0, config.inner_kind, config.tau, config.rho, config.b_max);
  const auto batch = HypergradBatch::draw(config.seed, 1, *config.K, *config.theta);
  s.v = oracles.grad_g_y(s.x, s.y, derive_key(config.seed, 1, kSlotInnerGrad));
  s.w = estimate_neumann(oracles, s.x, s.y, batch);
  s.keys_drawn = static_cast<std::uint64_t>(*config.K) + 2;
  s.oracle_evals = estimator_evals(*config.K) + 1;
  return s;
}

namespace {

// Ground-truth columns for the state at time t; step-dependent fields come from the caller.
void fill_reference(IterationRecord& rec, const SolverState& s, const TaskReference& ref) {
  if (ref.objective) rec.objective = ref.objective(s.x, s.y);
  if (ref.y_star) rec.dist_y_star = (s.y - ref.y_star(s.x)).norm();
  if (ref.surrogate) {
    rec.surrogate_error = (s.w - ref.surrogate(s.x, s.y)).norm();
  } else if (ref.cg_surrogate && ref.population) {
    rec.surrogate_error = (s.w - exact_hypergradient(*ref.population, s.x, s.y)).norm();
  }
}

}  // namespace

StepResult step(const ProblemOracles& oracles, const SolverConfig& config, const SolverState& state,
                const TaskReference* reference) {
  detail::require(config.K.has_value() && config.theta.has_value(), "step: config must be resolved");
  const int K = *config.K;
  const long t = state.t;
  const Schedule sch = schedule(config, t);
  const SolverState& s = state;

  StepResult out;
  SolverState& n = out.state;
  n = s;

  // Adaptive matrices from fresh keys.
  Vector outer_grad;
  if (config.outer_kind == AdaptiveKind::Identity) {
    outer_grad = Vector::Zero(oracles.dim_x);
  } else if (config.outer_grad == OuterMatrixGrad::Direction) {
    outer_grad = s.w;
  } else {
    outer_grad = oracles.grad_f_x(s.x, s.y, derive_key(config.seed, static_cast<std::uint64_t>(t), kSlotAdaptiveXi));
  }
  OuterUpdate ou = update_outer_matrix(s.outer, outer_grad, s.w);
  const Vector inner_grad = config.inner_kind == AdaptiveKind::Identity
                                ? Vector::Zero(oracles.dim_y)
                                : oracles.grad_g_y(s.x, s.y, derive_key(config.seed, static_cast<std::uint64_t>(t), kSlotAdaptiveZeta));
  InnerUpdate iu = update_inner_scalar(s.inner, inner_grad, s.v);
  n.outer = std::move(ou.state);
  n.inner = std::move(iu.state);

  // Generalized projections and interpolation.
  out.x_tilde = generalized_project(oracles.set_x, s.x, s.w, ou.A_diag, config.gamma);
  n.x = s.x + sch.eta * (out.x_tilde - s.x);
  const Vector y_tilde =
      generalized_project(oracles.set_y, s.y, s.v, Vector::Constant(oracles.dim_y, iu.b_scalar), config.lambda);
  n.y = s.y + sch.eta * (y_tilde - s.y);

  // Fresh batch for the direction estimates at the new iterate.
  const auto tag = static_cast<std::uint64_t>(t + 1);
  const auto batch = HypergradBatch::draw(config.seed, tag, K, *config.theta);
  const SampleKey kz = derive_key(config.seed, tag, kSlotInnerGrad);
  const Vector gy_new = oracles.grad_g_y(n.x, n.y, kz);
  const Vector est_new = estimate_neumann(oracles, n.x, n.y, batch);
  if (config.variant == Variant::BiAdam) {
    n.v = direction_update_momentum(s.v, gy_new, sch.alpha_next);
    n.w = direction_update_momentum(s.w, est_new, sch.beta_next);
    n.oracle_evals += static_cast<std::uint64_t>(K) + 2;
  } else {
    const Vector gy_old = oracles.grad_g_y(s.x, s.y, kz);
    const Vector est_old = estimate_neumann(oracles, s.x, s.y, batch);
    n.v = direction_update_storm(s.v, gy_new, gy_old, sch.alpha_next);
    n.w = direction_update_storm(s.w, est_new, est_old, sch.beta_next);
    n.oracle_evals += 2 * static_cast<std::uint64_t>(K) + 3;
  }
  n.keys_drawn += static_cast<std::uint64_t>(K) + 2;
  n.t = t + 1;

  IterationRecord& rec = out.record;
  rec.t = t;
  rec.eta = sch.eta;
  rec.alpha = sch.alpha_next;
  rec.beta = sch.beta_next;
  rec.step_norm_x = (out.x_tilde - s.x).norm() / config.gamma;
  rec.keys_drawn = n.keys_drawn;
  rec.oracle_evals = n.oracle_evals;

  if (reference) {
    const TaskReference& ref = *reference;
    fill_reference(rec, s, ref);
    if (ref.grad_F) {
      rec.grad_mapping_norm = gradient_mapping_norm(oracles.set_x, s.x, ref.grad_F(s.x), ou.A_diag, config.gamma);
    }
    if (ref.constants_known && rec.dist_y_star && rec.surrogate_error) {
      const ProblemConstants& c = oracles.constants;
      DerivedConstants dc;
      dc.L0 = std::sqrt(L0_squared(c));
      rec.metric_m = *rec.step_norm_x + (std::sqrt(2.0) * *rec.surrogate_error + dc.L0 * *rec.dist_y_star) / config.rho;
      if (ref.population && rec.objective) {
        const ProblemOracles& pop = *ref.population;
        LyapunovInput li;
        li.F = *rec.objective;
        li.dist_y_star = *rec.dist_y_star;
        li.err_v = (s.v - pop.grad_g_y(s.x, s.y, SampleKey{})).norm();
        li.err_w = (s.w - expected_neumann(pop, s.x, s.y, *config.theta, K)).norm();
        const double eta_prev = eta_at(config, static_cast<double>(t - 1));
        rec.lyapunov = lyapunov(config.variant, li, dc, c, iu.b_scalar, config.gamma, config.lambda, config.rho, eta_prev);
      }
    }
  }

  if (blown(n.x) || blown(n.y) || blown(n.w) || blown(n.v)) {
    throw DivergedError("solver diverged at iteration " + std::to_string(t), rec);
  }
  return out;
}

RunResult run(const ProblemOracles& oracles, const SolverConfig& config, const TaskReference* reference,
              const std::function<void(const IterationRecord&)>& sink) {
  oracles.validate();
  const SolverConfig cfg = config.resolved(oracles.constants);
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&]() -> std::optional<std::int64_t> {
    if (!cfg.record_wall_time) return std::nullopt;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  };

  RunResult res;
  SolverState s = initialize(oracles, cfg);
  IterationRecord init;
  init.t = 0;
  init.keys_drawn = s.keys_drawn;
  init.oracle_evals = s.oracle_evals;
  if (reference) fill_reference(init, s, *reference);
  init.wall_time_ns = elapsed();
  res.records.reserve(static_cast<std::size_t>(cfg.T) + 1);
  if (sink) sink(init);
  res.records.push_back(init);
  if (cfg.keep_iterates) {
    res.xs.push_back(s.x);
    res.ys.push_back(s.y);
  }

  for (long t = 1; t <= cfg.T; ++t) {
    StepResult st = step(oracles, cfg, s, reference);
    st.record.wall_time_ns = elapsed();
    if (sink) sink(st.record);
    res.records.push_back(std::move(st.record));
    s = std::move(st.state);
    if (cfg.keep_iterates) {
      res.xs.push_back(s.x);
      res.ys.push_back(s.y);
    }
  }
  res.realized_b_max = s.inner.realized_b_max;
  res.final_state = std::move(s);
  if (cfg.T >= 1) {
    res.output_index =
        1 + static_cast<long>(uniform_index(derive_key(cfg.seed, 0, kSlotOutputIndex), static_cast<std::uint64_t>(cfg.T)));
  }
  return res;
}

Vector replay_outer_estimate(const ProblemOracles& oracles, const SolverConfig& config, const std::vector<Vector>& xs,
                             const std::vector<Vector>& ys) {
  detail::require(!xs.empty() && xs.size() == ys.size(), "replay_outer_estimate: need matching non-empty paths");
  const SolverConfig cfg = config.resolved(oracles.constants);
  cfg.validate();
  const int K = *cfg.K;
  Vector w = estimate_neumann(oracles, xs[0], ys[0], HypergradBatch::draw(cfg.seed, 1, K, *cfg.theta));
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const long t = static_cast<long>(i);
    const Schedule sch = schedule(cfg, t);
    const auto batch = HypergradBatch::draw(cfg.seed, static_cast<std::uint64_t>(t + 1), K, *cfg.theta);
    const Vector est_new = estimate_neumann(oracles, xs[i], ys[i], batch);
    if (cfg.variant == Variant::BiAdam) {
      w = direction_update_momentum(w, est_new, sch.beta_next);
    } else {
      w = direction_update_storm(w, est_new, estimate_neumann(oracles, xs[i - 1], ys[i - 1], batch), sch.beta_next);
    }
  }
  return w;
}

}  // namespace bilevel
