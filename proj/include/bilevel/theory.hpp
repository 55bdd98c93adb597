#pragma once

#include "bilevel/oracles.hpp"
#include "bilevel/variant.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bilevel {

double kappa(const ProblemConstants& c);
/// Lipschitz constant of y -> surrogate hypergradient.
double L_y(const ProblemConstants& c);
/// Smoothness of F.
double L_F(const ProblemConstants& c);
double L0_squared(const ProblemConstants& c);
/// Mean-squared Lipschitz constant of the K-term estimator. Throws SingularityError at mu = L_g.
double LK_squared(const ProblemConstants& c, int K);
double L1_squared(const ProblemConstants& c);
double L2_squared(const ProblemConstants& c, int K);

struct DerivedConstants {
  double kappa = 0.0;
  double L_y = 0.0;
  double L = 0.0;
  double L0 = 0.0;
  double L_K = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
  int K = 1;
};

DerivedConstants derived_constants(const ProblemConstants& c, int K);

/// Hypothesis bounds of the convergence theorem for one variant.
struct ParamBox {
  Variant variant = Variant::BiAdam;
  double c1_min = 0.0;
  double c2_min = 0.0;
  std::optional<double> c_max;  // sqrt(m)/k for BiAdam; none for VR-BiAdam
  double lambda_max = 0.0;
  double gamma_max = 0.0;       // evaluated at min(lambda, lambda_max)
  double m_min = 0.0;           // floor on m implied by k, c1, c2
  ProblemConstants constants;

  [[nodiscard]] int K_for(long T) const;
};

/// Raised when no admissible (c1, c2) exists for the given k and m.
class InfeasibleBox : public ContractViolation {
 public:
  explicit InfeasibleBox(std::string constraint, const std::string& what)
      : ContractViolation(what), constraint_(std::move(constraint)) {}
  [[nodiscard]] const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

struct BoxRequest {
  Variant variant = Variant::BiAdam;
  double k = 1.0;
  double m = 1.0;
  double rho = 0.1;
  double b_l = 0.1;
  double b_u = 0.1;
  std::optional<double> c1;      // defaults to c1_min when absent
  std::optional<double> c2;      // defaults to c2_min when absent
  std::optional<double> lambda;  // defaults to lambda_max when absent
};

ParamBox theorem_parameter_box(const DerivedConstants& dc, const ProblemConstants& c, const BoxRequest& req);

struct Violation {
  std::string key;
  std::string message;
};

/// Solver parameters checked against the theorem hypotheses.
struct TheoremCheck {
  Variant variant = Variant::BiAdam;
  double k = 1.0;
  double m = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double lambda = 1.0;
  double gamma = 1.0;
  int K = 1;
  long T = 1;
  double rho = 0.1;
  double b_l = 0.1;
  double b_u = 0.1;
};

/// Every violated hypothesis, keyed by the parameter name. Empty when all hold.
std::vector<Violation> validate_theorem(const ProblemConstants& c, const TheoremCheck& p);

/// Smallest admissible parameters: c1 = c1_min, c2 = c2_min, m = m_min, lambda = lambda_max,
/// gamma = gamma_max, K = choose_K(T). k is the caller's.
TheoremCheck theorem_box_parameters(const ProblemConstants& c, Variant variant, double k, long T, double rho,
                                    double b_l, double b_u);

struct LyapunovInput {
  double F = 0.0;
  double dist_y_star = 0.0;
  double err_v = 0.0;  // ||v_t - grad_y g(x_t, y_t)||
  double err_w = 0.0;  // ||w_t - surrogate(x_t, y_t) - R_t||
};

/// Gamma_t for BiAdam; Theta_t for VR-BiAdam, where the estimator bracket is divided by eta_prev.
double lyapunov(Variant variant, const LyapunovInput& s, const DerivedConstants& dc, const ProblemConstants& c,
                double b_t, double gamma, double lambda, double rho, std::optional<double> eta_prev = std::nullopt);

}  // namespace bilevel
