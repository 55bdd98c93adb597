#pragma once

#include "bilevel/constraint_set.hpp"
#include "bilevel/sample_key.hpp"
#include "bilevel/types.hpp"

#include <functional>

namespace bilevel {

/// Smoothness and boundedness constants of a bilevel instance.
struct ProblemConstants {
  double L_f = 1.0;    // Lipschitz constant of grad f
  double L_g = 1.0;    // smoothness of g in y
  double mu = 1.0;     // strong convexity of g in y
  double C_fy = 0.0;   // bound on ||grad_y f||
  double C_gxy = 0.0;  // bound on ||grad^2_xy g||
  double L_gxy = 0.0;  // Lipschitz constant of grad^2_xy g
  double L_gyy = 0.0;  // Lipschitz constant of grad^2_yy g
  double sigma = 0.0;  // oracle noise standard deviation bound

  /// Throws ContractViolation unless 0 < mu <= L_g, L_f > 0 and everything is finite and >= 0.
  void validate() const;
};

/// Stochastic first- and second-order oracles of
///   min_{x in X} F(x) = f(x, y*(x)),  y*(x) = argmin_{y in Y} g(x, y).
///
/// Every callable is a pure function of its arguments. When `deterministic` is set the
/// sample key is ignored and population quantities are returned.
struct ProblemOracles {
  using PartialFn = std::function<Vector(const Vector& x, const Vector& y, SampleKey)>;
  using HvpFn = std::function<Vector(const Vector& x, const Vector& y, const Vector& v, SampleKey)>;

  Eigen::Index dim_x = 0;
  Eigen::Index dim_y = 0;
  PartialFn grad_f_x;
  PartialFn grad_f_y;
  PartialFn grad_g_y;
  HvpFn hvp_g_xy;  // grad^2_xy g . v, maps R^p -> R^d
  HvpFn hvp_g_yy;  // grad^2_yy g . v, maps R^p -> R^p
  ConstraintSet set_x = ConstraintSet::unconstrained(1);
  ConstraintSet set_y = ConstraintSet::unconstrained(1);
  ProblemConstants constants;
  bool deterministic = false;

  /// Structural checks: dimensions, set sizes, callables present, constants valid.
  void validate() const;
};

}  // namespace bilevel
