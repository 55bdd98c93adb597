#include "bilevel/hypergrad.hpp"
#include "bilevel/theory.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace bilevel;

namespace {

ProblemConstants unit_constants() {
  ProblemConstants c;
  c.L_f = c.L_g = c.mu = c.C_fy = c.C_gxy = c.L_gxy = c.L_gyy = 1.0;
  return c;
}

ProblemConstants sample_constants(std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(0.1, 3.0);
  ProblemConstants c;
  c.mu = u(eng);
  c.L_g = c.mu * (1.0 + u(eng));
  c.L_f = u(eng);
  c.C_fy = u(eng);
  c.C_gxy = u(eng);
  c.L_gxy = u(eng);
  c.L_gyy = u(eng);
  return c;
}

// Second, independent transcription of the closed forms.
struct Reference {
  double kappa, Ly, L, L0sq, LKsq, L1sq, L2sq;
};

Reference reference(const ProblemConstants& c, int K) {
  const double Lf = c.L_f, Lg = c.L_g, mu = c.mu, Cfy = c.C_fy, Cgxy = c.C_gxy, Lgxy = c.L_gxy, Lgyy = c.L_gyy;
  Reference r{};
  r.kappa = Cgxy / mu;
  const double tail = Cfy * (Lgxy / mu + Lgyy * Cgxy / (mu * mu));
  r.Ly = Lf + Lf * Cgxy / mu + tail;
  r.L = Lf + (Lf + r.Ly) * Cgxy / mu + tail;
  r.L0sq = 8 * (Lf * Lf + Lgxy * Lgxy * Cfy * Cfy / (mu * mu) + Lgyy * Lgyy * Cgxy * Cgxy * Cfy * Cfy / std::pow(mu, 4) +
                Lf * Lf * Cgxy * Cgxy / (mu * mu));
  const double D = 2 * mu * Lg - mu * mu;
  r.LKsq = 2 * Lf * Lf + 6 * Cgxy * Cgxy * Lf * Lf * K / D + 6 * Cfy * Cfy * Lgxy * Lgxy * K / D +
           6 * Cgxy * Cgxy * Lf * Lf * std::pow(K, 3) * Lgyy * Lgyy / ((Lg - mu) * (Lg - mu) * D);
  r.L1sq = 12 * Lg * Lg * mu * mu / (125 * r.L0sq) + 2 * r.L0sq / 3;
  r.L2sq = Lg * Lg + r.LKsq;
  return r;
}

void expect_rel(double got, double want, double tol) { EXPECT_LE(std::abs(got - want), tol * std::abs(want)) << got << " vs " << want; }

}  // namespace

TEST(DerivedConstants, UnitConstantsL0) {
  EXPECT_DOUBLE_EQ(L0_squared(unit_constants()), 32.0);
}

TEST(DerivedConstants, VanishingTermsL0) {
  ProblemConstants c = unit_constants();
  c.C_fy = 0;
  c.L_gxy = c.L_gyy = 0;
  c.L_f = 1.5;
  c.C_gxy = 2.0;
  c.mu = 0.5;
  EXPECT_DOUBLE_EQ(L0_squared(c), 8 * 1.5 * 1.5 * (1 + 4.0 / 0.25));
}

TEST(DerivedConstants, Kappa) {
  ProblemConstants c = unit_constants();
  c.C_gxy = 3;
  c.mu = 2;
  c.L_g = 4;
  EXPECT_DOUBLE_EQ(kappa(c), 1.5);
}

TEST(DerivedConstants, SingularAtMuEqualsLg) {
  EXPECT_THROW(derived_constants(unit_constants(), 3), SingularityError);
  EXPECT_THROW(LK_squared(unit_constants(), 3), SingularityError);
}

TEST(DerivedConstants, MatchesDuplicateImplementation) {
  std::mt19937_64 eng(12);
  for (int i = 0; i < 200; ++i) {
    const ProblemConstants c = sample_constants(eng);
    const int K = 1 + i % 40;
    const DerivedConstants d = derived_constants(c, K);
    const Reference r = reference(c, K);
    expect_rel(d.kappa, r.kappa, 1e-14);
    expect_rel(d.L_y, r.Ly, 1e-14);
    expect_rel(d.L, r.L, 1e-14);
    expect_rel(d.L0 * d.L0, r.L0sq, 1e-14);
    expect_rel(d.L_K * d.L_K, r.LKsq, 1e-14);
    expect_rel(d.L1 * d.L1, r.L1sq, 1e-14);
    expect_rel(d.L2 * d.L2, r.L2sq, 1e-14);
    EXPECT_EQ(d.K, K);
  }
}

TEST(DerivedConstants, RejectsInvalidConstants) {
  ProblemConstants c = unit_constants();
  c.L_g = 2;
  c.mu = 3;
  EXPECT_THROW(derived_constants(c, 1), ContractViolation);
  c.mu = 1;
  EXPECT_THROW(derived_constants(c, 0), ContractViolation);
}

TEST(ParamBox, BiAdamFloorsWithL0Squared32) {
  DerivedConstants dc;
  dc.L0 = std::sqrt(32.0);
  dc.L1 = std::sqrt(12.0 / (125 * 32) + 64.0 / 3);
  dc.L = 1;
  dc.kappa = 1;
  BoxRequest req;
  req.variant = Variant::BiAdam;
  req.m = 1e6;
  req.b_l = 0.6;
  req.b_u = 1.0;
  const ParamBox box = theorem_parameter_box(dc, unit_constants(), req);
  EXPECT_NEAR(box.c1_min, 125.0 * 32 / 6, 1e-10);
  EXPECT_NEAR(box.c1_min, 666.67, 5e-3);
  EXPECT_DOUBLE_EQ(box.c2_min, 4.5);
  ASSERT_TRUE(box.c_max.has_value());
  EXPECT_DOUBLE_EQ(*box.c_max, 1000.0);
  EXPECT_DOUBLE_EQ(box.lambda_max, 0.1);  // b_l / (6 L_g)
}

TEST(ParamBox, VRFloorsForUnitK) {
  DerivedConstants dc;
  dc.L0 = std::sqrt(32.0);
  dc.L2 = 2;
  dc.L = 1;
  dc.kappa = 1;
  BoxRequest req;
  req.variant = Variant::VRBiAdam;
  req.k = 1;
  req.m = 1e12;
  const ParamBox box = theorem_parameter_box(dc, unit_constants(), req);
  EXPECT_DOUBLE_EQ(box.c2_min, 31.0 / 6.0);
  EXPECT_DOUBLE_EQ(box.c1_min, 2.0 / 3.0 + 125.0 * 32 / 6);
  EXPECT_FALSE(box.c_max.has_value());
  EXPECT_DOUBLE_EQ(box.m_min, std::pow(box.c1_min, 3));
}

TEST(ParamBox, InfeasibleMNamesC1) {
  ProblemConstants c = unit_constants();
  c.L_g = 2;
  const DerivedConstants dc = derived_constants(c, 3);
  for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
    BoxRequest req;
    req.variant = v;
    req.m = 4;
    try {
      theorem_parameter_box(dc, c, req);
      FAIL() << "expected InfeasibleBox";
    } catch (const InfeasibleBox& e) {
      EXPECT_EQ(e.constraint(), "c1");
    }
  }
}

TEST(ParamBox, GammaMonotoneInBuAndRho) {
  std::mt19937_64 eng(4);
  for (int i = 0; i < 50; ++i) {
    const ProblemConstants c = sample_constants(eng);
    const DerivedConstants dc = derived_constants(c, 5);
    for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
      BoxRequest req;
      req.variant = v;
      req.m = 1e30;
      req.b_l = 0.1;
      double prev = std::numeric_limits<double>::infinity();
      for (double b_u : {0.1, 0.5, 2.0, 10.0}) {
        req.b_u = b_u;
        const double g = theorem_parameter_box(dc, c, req).gamma_max;
        EXPECT_LE(g, prev);
        prev = g;
      }
      prev = 0.0;
      req.b_u = 1.0;
      for (double rho : {0.01, 0.1, 1.0, 10.0}) {
        req.rho = rho;
        const double g = theorem_parameter_box(dc, c, req).gamma_max;
        EXPECT_GE(g, prev);
        prev = g;
      }
    }
  }
}

TEST(ParamBox, GammaUsesClampedLambda) {
  ProblemConstants c = unit_constants();
  c.L_g = 2;
  const DerivedConstants dc = derived_constants(c, 2);
  BoxRequest req;
  req.m = 1e30;
  const ParamBox at_max = theorem_parameter_box(dc, c, req);
  req.lambda = 100.0 * at_max.lambda_max;
  EXPECT_DOUBLE_EQ(theorem_parameter_box(dc, c, req).gamma_max, at_max.gamma_max);
  req.lambda = 0.5 * at_max.lambda_max;
  EXPECT_LT(theorem_parameter_box(dc, c, req).gamma_max, at_max.gamma_max);
}

TEST(ValidateTheorem, BoxParametersPass) {
  ProblemConstants c = unit_constants();
  c.L_g = 10;
  c.C_gxy = 0.001;
  c.C_fy = 2;
  c.L_gxy = c.L_gyy = 0;
  for (Variant v : {Variant::BiAdam, Variant::VRBiAdam}) {
    const TheoremCheck p = theorem_box_parameters(c, v, 1.0, 1000, 10.0, 10.0, 15.0);
    EXPECT_TRUE(validate_theorem(c, p).empty()) << to_string(v);
    EXPECT_EQ(p.K, choose_K(c, 1000));
  }
}

TEST(ValidateTheorem, ReportsEachViolation) {
  ProblemConstants c = unit_constants();
  c.L_g = 10;
  c.C_gxy = 0.5;
  TheoremCheck p = theorem_box_parameters(c, Variant::BiAdam, 1.0, 1000, 1.0, 1.0, 1.0);
  TheoremCheck bad = p;
  bad.c2 = 1.0;
  bad.gamma = 10 * p.gamma;
  bad.lambda = 10 * p.lambda;
  bad.K = 1;
  std::vector<std::string> keys;
  for (const Violation& v : validate_theorem(c, bad)) keys.push_back(v.key);
  for (const char* k : {"c2", "gamma", "lambda", "K"}) {
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
  }
  bad = p;
  bad.gamma = -1;
  const auto v = validate_theorem(c, bad);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].key, "gamma");
  EXPECT_EQ(v[0].message, "gamma must be positive");
}

TEST(ValidateTheorem, VRWithSmallMNamesC1) {
  ProblemConstants c = unit_constants();
  c.L_g = 10;
  TheoremCheck p;
  p.variant = Variant::VRBiAdam;
  p.k = 1;
  p.m = 1;
  const auto v = validate_theorem(c, p);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].key, "c1");
}

TEST(Lyapunov, ZeroErrorsGiveF) {
  ProblemConstants c = unit_constants();
  c.L_g = 2;
  const DerivedConstants dc = derived_constants(c, 2);
  EXPECT_DOUBLE_EQ(lyapunov(Variant::BiAdam, {3.5, 0, 0, 0}, dc, c, 0.7, 0.1, 0.2, 0.3), 3.5);
}

TEST(Lyapunov, UnitCoefficients) {
  const ProblemConstants c = unit_constants();
  DerivedConstants dc;
  dc.L0 = std::sqrt(32.0);
  const double g = lyapunov(Variant::BiAdam, {2.0, 1, 1, 1}, dc, c, 1, 1, 1, 1);
  EXPECT_DOUBLE_EQ(g, 2.0 + 5 * 32 + 2);
}

TEST(Lyapunov, ThetaDividesEstimatorBracket) {
  const ProblemConstants c = unit_constants();
  DerivedConstants dc;
  dc.L0 = std::sqrt(32.0);
  const LyapunovInput s{2.0, 0.5, 0.3, 0.4};
  const double gamma = lyapunov(Variant::BiAdam, s, dc, c, 1.2, 0.3, 0.4, 0.5);
  EXPECT_DOUBLE_EQ(lyapunov(Variant::VRBiAdam, s, dc, c, 1.2, 0.3, 0.4, 0.5, 1.0), gamma);
  const double bracket = (0.3 / 0.5) * (0.3 * 0.3 + 0.4 * 0.4);
  EXPECT_NEAR(lyapunov(Variant::VRBiAdam, s, dc, c, 1.2, 0.3, 0.4, 0.5, 0.25), gamma + 3 * bracket, 1e-12);
  EXPECT_THROW(lyapunov(Variant::VRBiAdam, s, dc, c, 1.2, 0.3, 0.4, 0.5), ContractViolation);
}
