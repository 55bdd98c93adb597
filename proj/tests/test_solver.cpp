#include "bilevel/solver.hpp"
#include "bilevel/theory.hpp"
#include "bilevel/tasks/quadratic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace bilevel;

namespace {

// 2x2 instance with hand-checkable algebra.
QuadraticSpec small_spec() {
  QuadraticSpec s;
  s.Q.resize(2, 2);
  s.Q << 2.0, 0.5, 0.5, 1.0;
  s.P.resize(2, 2);
  s.P << 1.0, -0.5, 0.25, 2.0;
  s.q = Vector::Zero(2);
  s.q << 0.1, -0.2;
  s.r.resize(2);
  s.r << 0.3, -0.7;
  s.c_reg = 0.5;
  return s;
}

QuadraticTask noisy_task(double sigma = 0.1, int family = 2) {
  SpectrumSpec sp;
  sp.mu = 1;
  sp.L_g = 5;
  sp.family_size = family;
  return build_quadratic(random_quadratic({4, 3}, sp, 0.5, 1.0, sigma, 12));
}

SolverConfig base_config(Variant v = Variant::BiAdam) {
  SolverConfig c;
  c.variant = v;
  c.K = 3;
  c.k = 1;
  c.m = 4;
  c.c1 = 1;
  c.c2 = 1;
  c.gamma = 0.5;
  c.lambda = 0.1;
  c.rho = 1.0;
  c.T = 50;
  c.seed = 9;
  return c;
}

void expect_same(const IterationRecord& a, const IterationRecord& b) {
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.eta, b.eta);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.grad_mapping_norm, b.grad_mapping_norm);
  EXPECT_EQ(a.step_norm_x, b.step_norm_x);
  EXPECT_EQ(a.dist_y_star, b.dist_y_star);
  EXPECT_EQ(a.metric_m, b.metric_m);
  EXPECT_EQ(a.surrogate_error, b.surrogate_error);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.lyapunov, b.lyapunov);
  EXPECT_EQ(a.keys_drawn, b.keys_drawn);
  EXPECT_EQ(a.oracle_evals, b.oracle_evals);
}

}  // namespace

TEST(Schedule, BiAdamExample) {
  SolverConfig c;
  c.variant = Variant::BiAdam;
  c.k = 1;
  c.m = 1;
  c.c1 = 0.6;
  c.c2 = 0.8;
  const Schedule s = schedule(c, 3);
  EXPECT_DOUBLE_EQ(s.eta, 0.5);
  EXPECT_DOUBLE_EQ(s.alpha_next, 0.3);
  EXPECT_DOUBLE_EQ(s.beta_next, 0.4);
}

TEST(Schedule, VRExample) {
  SolverConfig c;
  c.variant = Variant::VRBiAdam;
  c.k = 1;
  c.m = 7;
  c.c1 = 2;
  c.c2 = 3;
  const Schedule s = schedule(c, 1);
  EXPECT_NEAR(s.eta, 0.5, 1e-15);
  EXPECT_NEAR(s.alpha_next, 0.5, 1e-15);
  EXPECT_NEAR(s.beta_next, 0.75, 1e-15);
  EXPECT_THROW(schedule(c, 0), ContractViolation);
}

TEST(DirectionUpdates, MomentumExamples) {
  const Vector p = Vector::Constant(1, 2.0), f = Vector::Constant(1, 4.0);
  EXPECT_EQ(direction_update_momentum(p, f, 1.0), f);
  EXPECT_DOUBLE_EQ(direction_update_momentum(p, f, 0.5)[0], 3.0);
  EXPECT_EQ(direction_update_momentum(p, p, 0.3), p);
  EXPECT_THROW(direction_update_momentum(p, f, 0.0), ContractViolation);
  EXPECT_THROW(direction_update_momentum(p, f, 1.5), ContractViolation);
}

TEST(DirectionUpdates, StormExamples) {
  const Vector prev = Vector::Constant(1, 2.0), g = Vector::Constant(1, 5.0), old = Vector::Constant(1, 3.0);
  EXPECT_EQ(direction_update_storm(prev, g, old, 1.0), g);
  EXPECT_DOUBLE_EQ(direction_update_storm(prev, g, g, 0.25)[0], 5.0 + 0.75 * (2.0 - 5.0));
  EXPECT_EQ(direction_update_storm(old, g, old, 0.4), g);
  EXPECT_THROW(direction_update_storm(prev, g, old, 0.0), ContractViolation);
}

TEST(SolverConfig, ValidationMessages) {
  SolverConfig c = base_config();
  EXPECT_NO_THROW(c.validate());
  c.gamma = -1;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = base_config();
  c.m = 1;
  c.k = 2;  // eta_0 = 2
  try {
    c.validate();
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("schedule infeasible"), std::string::npos);
  }
  c = base_config();
  c.c1 = 3;  // alpha_1 = 3/2
  EXPECT_THROW(c.validate(), ContractViolation);
  c = base_config();
  c.outer_kind = AdaptiveKind::Norm;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = base_config();
  c.inner_kind = AdaptiveKind::Adam;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(SolverConfig, ResolvedFillsAutoValues) {
  const QuadraticTask t = noisy_task();
  SolverConfig c = base_config();
  c.K.reset();
  c.T = 100;
  const SolverConfig r = c.resolved(t.oracles.constants);
  EXPECT_EQ(*r.K, choose_K(t.oracles.constants, 100));
  EXPECT_DOUBLE_EQ(*r.theta, 1.0 / t.oracles.constants.L_g);
}

TEST(Step, HandComputedNeumannOneStep) {
  // K = 1, identity matrices, eta_1 = k/sqrt(m+1) = 1 and alpha = beta = 1.
  const QuadraticSpec s = small_spec();
  const QuadraticTask t = build_quadratic(s);
  ASSERT_TRUE(t.oracles.deterministic);
  SolverConfig c;
  c.variant = Variant::BiAdam;
  c.K = 1;
  c.k = 2;
  c.m = 3;
  c.c1 = 1;
  c.c2 = 1;
  c.gamma = 0.3;
  c.lambda = 0.2;
  c.rho = 0.5;
  c.outer_kind = AdaptiveKind::Identity;
  c.inner_kind = AdaptiveKind::Identity;
  Vector x1(2), y1(2);
  x1 << 1.0, -2.0;
  y1 << 0.5, 0.25;
  c.x1 = x1;
  c.y1 = y1;
  c = c.resolved(t.oracles.constants);
  const double theta = *c.theta;

  auto grad_g_y = [&](const Vector& x, const Vector& y) { return Vector(s.Q * y - s.P * x - s.q); };
  auto neumann1 = [&](const Vector& x, const Vector& y) { return Vector(s.c_reg * x + theta * s.P.transpose() * (y - s.r)); };

  const SolverState s1 = initialize(t.oracles, c);
  EXPECT_LE((s1.v - grad_g_y(x1, y1)).norm(), 1e-15);
  EXPECT_LE((s1.w - neumann1(x1, y1)).norm(), 1e-15);

  const StepResult st = step(t.oracles, c, s1);
  const Vector x2 = x1 - (c.gamma / c.rho) * neumann1(x1, y1);
  const Vector y2 = y1 - (c.lambda / c.rho) * grad_g_y(x1, y1);
  EXPECT_LE((st.state.x - x2).norm(), 1e-14);
  EXPECT_LE((st.state.y - y2).norm(), 1e-14);
  EXPECT_LE((st.state.v - grad_g_y(x2, y2)).norm(), 1e-14);
  EXPECT_LE((st.state.w - neumann1(x2, y2)).norm(), 1e-14);
  EXPECT_DOUBLE_EQ(*st.record.eta, 1.0);
  EXPECT_EQ(st.state.t, 2);
  EXPECT_NEAR(*st.record.step_norm_x, neumann1(x1, y1).norm() / c.rho, 1e-14);
}

TEST(Step, ZeroDirectionKeepsX) {
  const QuadraticTask t = noisy_task();
  const SolverConfig c = base_config().resolved(t.oracles.constants);
  SolverState s = initialize(t.oracles, c);
  s.x = Vector::Constant(4, 0.3);
  s.w = Vector::Zero(4);
  const StepResult st = step(t.oracles, c, s);
  EXPECT_EQ(st.state.x, s.x);
  EXPECT_EQ(st.x_tilde, s.x);
}

TEST(Step, TinyEtaLeavesIteratesAndMovesEstimators) {
  const QuadraticTask t = noisy_task();
  SolverConfig c = base_config().resolved(t.oracles.constants);
  c.k = 1e-300;
  c.x1 = Vector::Constant(4, 0.5);
  c.y1 = Vector::Constant(3, -0.5);
  const SolverState s = initialize(t.oracles, c);
  const StepResult st = step(t.oracles, c, s);
  EXPECT_EQ(st.state.x, s.x);
  EXPECT_EQ(st.state.y, s.y);
  EXPECT_EQ(st.state.w, s.w);  // beta = c2 * eta vanishes too
  c.c2 = 1e300;                // beta = 1 despite eta ~ 0
  const StepResult st2 = step(t.oracles, c, s);
  EXPECT_NE(st2.state.w, s.w);
  EXPECT_EQ(st2.state.x, s.x);
}

TEST(Run, ZeroIterationsGivesInitRecord) {
  const QuadraticTask t = noisy_task();
  SolverConfig c = base_config();
  c.T = 0;
  const RunResult r = run(t.oracles, c, &t.reference);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].t, 0);
  EXPECT_EQ(r.output_index, 0);
  EXPECT_FALSE(r.records[0].eta.has_value());
  EXPECT_TRUE(r.records[0].objective.has_value());
  EXPECT_TRUE(r.records[0].dist_y_star.has_value());
  EXPECT_TRUE(r.records[0].surrogate_error.has_value());
}

TEST(Run, DeterministicInSeed) {
  const QuadraticTask t = noisy_task();
  for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
    const SolverConfig c = base_config(v);
    const RunResult a = run(t.oracles, c, &t.reference);
    const RunResult b = run(t.oracles, c, &t.reference);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) expect_same(a.records[i], b.records[i]);
    EXPECT_EQ(a.final_state.x, b.final_state.x);
    EXPECT_EQ(a.output_index, b.output_index);
    SolverConfig other = c;
    other.seed = c.seed + 1;
    EXPECT_NE(run(t.oracles, other).final_state.x, a.final_state.x);
  }
}

TEST(Run, CountersPerIteration) {
  const QuadraticTask t = noisy_task();
  for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
    SolverConfig c = base_config(v);
    c.T = 7;
    const RunResult r = run(t.oracles, c);
    const std::uint64_t K = 3;
    const std::uint64_t per = v == Variant::BiAdam ? K + 2 : 2 * K + 3;
    for (const IterationRecord& rec : r.records) {
      const auto tt = static_cast<std::uint64_t>(rec.t);
      EXPECT_EQ(rec.keys_drawn, (K + 2) * (tt + 1));
      EXPECT_EQ(rec.oracle_evals, (K + 2) + per * tt);
    }
  }
}

TEST(Run, OutputIndexInRange) {
  const QuadraticTask t = noisy_task();
  SolverConfig c = base_config();
  c.T = 5;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    c.seed = seed;
    const long i = run(t.oracles, c).output_index;
    EXPECT_GE(i, 1);
    EXPECT_LE(i, 5);
  }
}

TEST(Run, IteratesStayFeasible) {
  QuadraticSpec s = random_quadratic({3, 3}, SpectrumSpec{}, 2.0, 0.1, 0.5, 4);
  s.set_x = ConstraintSet::box(Vector::Constant(3, -0.2), Vector::Constant(3, 0.3));
  s.set_y = ConstraintSet::ball(Vector::Zero(3), 0.25);
  const QuadraticTask t = build_quadratic(s);
  for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
    SolverConfig c = base_config(v);
    c.gamma = 2.0;
    c.lambda = 2.0;
    c.rho = 0.1;
    c.T = 200;
    c.keep_iterates = true;
    const RunResult r = run(t.oracles, c, &t.reference);
    ASSERT_EQ(r.xs.size(), 201u);
    for (std::size_t i = 0; i < r.xs.size(); ++i) {
      EXPECT_TRUE(t.oracles.set_x.contains(r.xs[i], 1e-12));
      EXPECT_TRUE(t.oracles.set_y.contains(r.ys[i], 1e-12));
    }
  }
}

TEST(Run, RejectsInfeasibleStart) {
  QuadraticSpec s = random_quadratic({2, 2}, SpectrumSpec{}, 1.0, 0.1, 0.0, 4);
  s.set_x = ConstraintSet::box(Vector::Constant(2, 1.0), Vector::Constant(2, 2.0));
  const QuadraticTask t = build_quadratic(s);
  EXPECT_THROW(run(t.oracles, base_config()), ContractViolation);  // default x1 = 0
}

TEST(Run, RecordsCarryConsistentMetrics) {
  const QuadraticTask t = noisy_task();
  SolverConfig c = base_config();
  c.record_wall_time = true;
  const RunResult r = run(t.oracles, c, &t.reference);
  const double L0 = std::sqrt(L0_squared(t.oracles.constants));
  for (std::size_t i = 1; i < r.records.size(); ++i) {
    const IterationRecord& rec = r.records[i];
    ASSERT_TRUE(rec.metric_m && rec.lyapunov && rec.grad_mapping_norm && rec.wall_time_ns);
    EXPECT_NEAR(*rec.metric_m, *rec.step_norm_x + (std::sqrt(2.0) * *rec.surrogate_error + L0 * *rec.dist_y_star) / c.rho,
                1e-12 * *rec.metric_m);
    EXPECT_GE(*rec.lyapunov, *rec.objective);
  }
  const RunResult bare = run(t.oracles, c);
  EXPECT_FALSE(bare.records[1].metric_m.has_value());
  EXPECT_FALSE(bare.records[1].objective.has_value());
}

TEST(Run, DeterministicDescent) {
  SpectrumSpec sp;
  sp.mu = 1;
  sp.L_g = 4;
  const QuadraticTask t = build_quadratic(random_quadratic({5, 5}, sp, 1.0, 1.0, 0.0, 3));
  SolverConfig c = base_config();
  c.K = 20;
  c.T = 2000;
  c.gamma = 0.3;
  c.lambda = 0.15;
  c.x1 = Vector::Constant(5, 2.0);
  const RunResult r = run(t.oracles, c, &t.reference);
  EXPECT_LT(t.grad_F(r.final_state.x).norm(), 1e-2 * t.grad_F(*c.x1).norm());
}

TEST(Run, DivergenceCarriesRecordAndPrefix) {
  const QuadraticTask t = noisy_task(0.1, 1);
  SolverConfig c = base_config();
  c.lambda = 50.0;  // inner step far beyond 2/L_g
  c.rho = 0.1;
  c.inner_kind = AdaptiveKind::Identity;
  c.T = 1000;
  std::vector<IterationRecord> seen;
  try {
    run(t.oracles, c, &t.reference, [&](const IterationRecord& r) { seen.push_back(r); });
    FAIL() << "expected divergence";
  } catch (const DivergedError& e) {
    EXPECT_GE(e.record().t, 1);
    ASSERT_FALSE(seen.empty());
    EXPECT_EQ(seen.back().t, e.record().t - 1);
  }
}

TEST(Replay, ReproducesRunEstimate) {
  const QuadraticTask t = noisy_task();
  for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
    SolverConfig c = base_config(v);
    c.T = 30;
    c.keep_iterates = true;
    const RunResult r = run(t.oracles, c);
    EXPECT_LE((replay_outer_estimate(t.oracles, c, r.xs, r.ys) - r.final_state.w).norm(), 1e-14);
  }
}

TEST(Replay, StormCancelsOnStaticPathWithDeterministicOracles) {
  // Unchanged iterates: STORM keeps the initial exact estimate.
  const QuadraticTask t = build_quadratic(small_spec());
  SolverConfig c = base_config(Variant::VRBiAdam);
  c.K = 1;
  const std::vector<Vector> xs(10, Vector::Constant(2, 0.4)), ys(10, Vector::Constant(2, -0.1));
  c.x1 = xs[0];
  c.y1 = ys[0];
  const Vector w = replay_outer_estimate(t.oracles, c, xs, ys);
  EXPECT_LE((w - initialize(t.oracles, c.resolved(t.oracles.constants)).w).norm(), 1e-14);
}
