#include "bilevel/theory.hpp"

#include "bilevel/hypergrad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bilevel {

namespace {

double sq(double v) { return v * v; }

std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

double kappa(const ProblemConstants& c) { return c.C_gxy / c.mu; }

double L_y(const ProblemConstants& c) {
  return c.L_f + c.L_f * c.C_gxy / c.mu + c.C_fy * (c.L_gxy / c.mu + c.L_gyy * c.C_gxy / sq(c.mu));
}

double L_F(const ProblemConstants& c) {
  return c.L_f + (c.L_f + L_y(c)) * c.C_gxy / c.mu + c.C_fy * (c.L_gxy / c.mu + c.L_gyy * c.C_gxy / sq(c.mu));
}

double L0_squared(const ProblemConstants& c) {
  const double mu2 = sq(c.mu);
  return 8.0 * (sq(c.L_f) + sq(c.L_gxy) * sq(c.C_fy) / mu2 + sq(c.L_gyy) * sq(c.C_gxy) * sq(c.C_fy) / sq(mu2) +
                sq(c.L_f) * sq(c.C_gxy) / mu2);
}

double LK_squared(const ProblemConstants& c, int K) {
  detail::require(K >= 1, "LK_squared: K must be >= 1");
  if (c.mu == c.L_g) {
    throw SingularityError("L_K is undefined at mu = L_g: the (L_g - mu)^-2 factor diverges");
  }
  const double Kd = static_cast<double>(K);
  const double denom = 2.0 * c.mu * c.L_g - sq(c.mu);
  return 2.0 * sq(c.L_f) + 6.0 * sq(c.C_gxy) * sq(c.L_f) * Kd / denom + 6.0 * sq(c.C_fy) * sq(c.L_gxy) * Kd / denom +
         6.0 * sq(c.C_gxy) * sq(c.L_f) * Kd * Kd * Kd * sq(c.L_gyy) / (sq(c.L_g - c.mu) * denom);
}

double L1_squared(const ProblemConstants& c) {
  const double l0 = L0_squared(c);
  return 12.0 * sq(c.L_g) * sq(c.mu) / (125.0 * l0) + 2.0 * l0 / 3.0;
}

double L2_squared(const ProblemConstants& c, int K) { return sq(c.L_g) + LK_squared(c, K); }

DerivedConstants derived_constants(const ProblemConstants& c, int K) {
  c.validate();
  detail::require(K >= 1, "derived_constants: K must be >= 1");
  DerivedConstants d;
  d.K = K;
  d.kappa = kappa(c);
  d.L_y = L_y(c);
  d.L = L_F(c);
  d.L0 = std::sqrt(L0_squared(c));
  d.L_K = std::sqrt(LK_squared(c, K));
  d.L1 = std::sqrt(L1_squared(c));
  d.L2 = std::sqrt(L2_squared(c, K));
  return d;
}

int ParamBox::K_for(long T) const { return choose_K(constants, T); }

ParamBox theorem_parameter_box(const DerivedConstants& dc, const ProblemConstants& c, const BoxRequest& req) {
  detail::require(req.k > 0.0, "theorem_parameter_box: k must be positive");
  detail::require(req.m >= 1.0, "theorem_parameter_box: m must be >= 1");
  detail::require(req.rho > 0.0, "theorem_parameter_box: rho must be positive");
  detail::require(req.b_l > 0.0 && req.b_u >= req.b_l, "theorem_parameter_box: need 0 < b_l <= b_u");

  ParamBox box;
  box.variant = req.variant;
  box.constants = c;
  const double L0sq = sq(dc.L0);
  const double mu = c.mu;
  const double k = req.k;
  const double m = req.m;

  if (req.variant == Variant::BiAdam) {
    box.c1_min = 125.0 * L0sq / (6.0 * sq(mu));
    box.c2_min = 4.5;
    box.c_max = std::sqrt(m) / k;
    if (box.c1_min > *box.c_max) {
      throw InfeasibleBox("c1", "c1 >= " + fmt_num(box.c1_min) + " cannot hold together with c1 <= sqrt(m)/k = " +
                                    fmt_num(*box.c_max) + "; raise m to at least " + fmt_num(sq(box.c1_min * k)));
    }
    const double c1 = req.c1.value_or(box.c1_min);
    const double c2 = req.c2.value_or(box.c2_min);
    box.m_min = std::max({sq(k), sq(c1 * k), sq(c2 * k)});
    box.lambda_max = std::min(15.0 * req.b_l * L0sq / (4.0 * sq(dc.L1) * mu), req.b_l / (6.0 * c.L_g));
    const double lam = std::min(req.lambda.value_or(box.lambda_max), box.lambda_max);
    const double first = std::sqrt(6.0) * lam * mu * req.rho /
                         std::sqrt(6.0 * sq(dc.L1) * sq(lam) * sq(mu) + 125.0 * sq(req.b_u) * L0sq * sq(dc.kappa));
    box.gamma_max = std::min(first, std::sqrt(m) * req.rho / (4.0 * dc.L * k));
  } else {
    const double k3 = k * k * k;
    box.c1_min = 2.0 / (3.0 * k3) + 125.0 * L0sq / (6.0 * sq(mu));
    box.c2_min = 2.0 / (3.0 * k3) + 4.5;
    const double c1 = req.c1.value_or(box.c1_min);
    const double c2 = req.c2.value_or(box.c2_min);
    box.m_min = std::max({2.0, k3, std::pow(c1 * k, 3), std::pow(c2 * k, 3)});
    if (std::pow(box.c1_min * k, 3) > m) {
      throw InfeasibleBox("c1", "c1 >= " + fmt_num(box.c1_min) + " needs m >= (c1 k)^3 = " +
                                    fmt_num(std::pow(box.c1_min * k, 3)) + ", got m = " + fmt_num(m));
    }
    box.lambda_max = std::min(15.0 * req.b_l * L0sq / (16.0 * sq(dc.L2) * mu), req.b_l / (6.0 * c.L_g));
    const double lam = std::min(req.lambda.value_or(box.lambda_max), box.lambda_max);
    const double first =
        std::sqrt(6.0) * lam * mu * req.rho /
        (2.0 * std::sqrt(24.0 * sq(dc.L2) * sq(lam) * sq(mu) + 125.0 * sq(req.b_u) * L0sq * sq(dc.kappa)));
    box.gamma_max = std::min(first, std::cbrt(m) * req.rho / (4.0 * dc.L * k));
  }
  return box;
}

std::vector<Violation> validate_theorem(const ProblemConstants& c, const TheoremCheck& p) {
  std::vector<Violation> out;
  auto fail = [&](std::string key, std::string msg) { out.push_back({std::move(key), std::move(msg)}); };

  if (!(p.k > 0.0)) fail("k", "k must be positive");
  if (!(p.m >= 1.0)) fail("m", "m must be >= 1");
  if (!(p.rho > 0.0)) fail("rho", "rho must be positive");
  if (!(p.lambda > 0.0)) fail("lambda", "lambda must be positive");
  if (!(p.gamma > 0.0)) fail("gamma", "gamma must be positive");
  if (!out.empty()) return out;

  const DerivedConstants dc = derived_constants(c, std::max(1, p.K));
  BoxRequest req;
  req.variant = p.variant;
  req.k = p.k;
  req.m = p.m;
  req.rho = p.rho;
  req.b_l = p.b_l;
  req.b_u = p.b_u;
  req.c1 = p.c1;
  req.c2 = p.c2;
  req.lambda = p.lambda;

  ParamBox box;
  try {
    box = theorem_parameter_box(dc, c, req);
  } catch (const InfeasibleBox& e) {
    fail(e.constraint(), e.what());
    return out;
  }

  const bool bi = p.variant == Variant::BiAdam;
  if (p.c1 < box.c1_min) fail("c1", "c1 = " + fmt_num(p.c1) + " is below the minimum " + fmt_num(box.c1_min));
  if (p.c2 < box.c2_min) fail("c2", "c2 = " + fmt_num(p.c2) + " is below the minimum " + fmt_num(box.c2_min));
  if (box.c_max && p.c1 > *box.c_max) fail("c1", "c1 = " + fmt_num(p.c1) + " exceeds sqrt(m)/k = " + fmt_num(*box.c_max));
  if (box.c_max && p.c2 > *box.c_max) fail("c2", "c2 = " + fmt_num(p.c2) + " exceeds sqrt(m)/k = " + fmt_num(*box.c_max));
  if (p.m < box.m_min) {
    fail("m", "m = " + fmt_num(p.m) + " is below " + std::string(bi ? "max(k^2, (c1 k)^2, (c2 k)^2)" : "max(2, k^3, (c1 k)^3, (c2 k)^3)") +
                  " = " + fmt_num(box.m_min));
  }
  if (p.lambda > box.lambda_max) fail("lambda", "lambda = " + fmt_num(p.lambda) + " exceeds " + fmt_num(box.lambda_max));
  if (p.gamma > box.gamma_max) fail("gamma", "gamma = " + fmt_num(p.gamma) + " exceeds " + fmt_num(box.gamma_max));
  const int K_need = choose_K(c, p.T);
  if (p.K < K_need) fail("K", "K = " + std::to_string(p.K) + " is below (L_g/mu) log(C_gxy C_fy T/mu) = " + std::to_string(K_need));
  return out;
}

TheoremCheck theorem_box_parameters(const ProblemConstants& c, Variant variant, double k, long T, double rho,
                                    double b_l, double b_u) {
  TheoremCheck p;
  p.variant = variant;
  p.k = k;
  p.T = T;
  p.rho = rho;
  p.b_l = b_l;
  p.b_u = b_u;
  p.K = choose_K(c, T);
  const DerivedConstants dc = derived_constants(c, p.K);
  // First pass only fixes c1, c2; m is then raised to the floor they imply.
  const double L0sq = sq(dc.L0);
  if (variant == Variant::BiAdam) {
    p.c1 = 125.0 * L0sq / (6.0 * sq(c.mu));
    p.c2 = 4.5;
    p.m = std::max({sq(k), sq(p.c1 * k), sq(p.c2 * k)});
  } else {
    const double k3 = k * k * k;
    p.c1 = 2.0 / (3.0 * k3) + 125.0 * L0sq / (6.0 * sq(c.mu));
    p.c2 = 2.0 / (3.0 * k3) + 4.5;
    p.m = std::max({2.0, k3, std::pow(p.c1 * k, 3), std::pow(p.c2 * k, 3)});
  }
  BoxRequest req{variant, k, p.m, rho, b_l, b_u, p.c1, p.c2, std::nullopt};
  const ParamBox box = theorem_parameter_box(dc, c, req);
  p.lambda = box.lambda_max;
  p.gamma = box.gamma_max;
  return p;
}

double lyapunov(Variant variant, const LyapunovInput& s, const DerivedConstants& dc, const ProblemConstants& c,
                double b_t, double gamma, double lambda, double rho, std::optional<double> eta_prev) {
  const double track = 5.0 * b_t * sq(dc.L0) * gamma / (lambda * c.mu * rho) * sq(s.dist_y_star);
  double est = (gamma / rho) * (sq(s.err_v) + sq(s.err_w));
  if (variant == Variant::VRBiAdam) {
    detail::require(eta_prev.has_value() && *eta_prev > 0.0, "lyapunov: the VR-BiAdam potential needs eta_{t-1} > 0");
    est /= *eta_prev;
  }
  return s.F + track + est;
}

}  // namespace bilevel
