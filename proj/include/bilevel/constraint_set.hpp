#pragma once

#include "bilevel/types.hpp"

#include <variant>

namespace bilevel {

struct Unconstrained {
  Eigen::Index dim = 0;
};

/// lower <= x <= upper elementwise; bounds may be infinite.
struct Box {
  Vector lower;
  Vector upper;
};

/// ||x - center|| <= radius.
struct Ball {
  Vector center;
  double radius = 1.0;
};

/// Closed convex feasible set for one block of variables.
class ConstraintSet {
 public:
  using Variant = std::variant<Unconstrained, Box, Ball>;

  static ConstraintSet unconstrained(Eigen::Index dim);
  static ConstraintSet box(Vector lower, Vector upper);
  static ConstraintSet ball(Vector center, double radius);

  [[nodiscard]] Eigen::Index dim() const;
  [[nodiscard]] const Variant& variant() const { return set_; }
  [[nodiscard]] bool is_unconstrained() const {
    return std::holds_alternative<Unconstrained>(set_);
  }
  /// Membership up to an absolute slack.
  [[nodiscard]] bool contains(const Vector& z, double slack = 1e-12) const;

 private:
  explicit ConstraintSet(Variant v) : set_(std::move(v)) {}
  Variant set_;
};

/// Euclidean projection onto the set.
Vector project(const ConstraintSet& set, const Vector& z);

/// argmin over the set of <direction, x> + (1/(2 gamma)) (x - center)^T diag(metric) (x - center).
///
/// Unconstrained and Box are solved in closed form (the objective is separable). A Ball
/// with a nonuniform metric has no closed form; the scalar multiplier of the ball
/// constraint is found by bisection to 1e-12. With a uniform metric rho the result is
/// exactly project(set, center - (gamma / rho) direction).
Vector generalized_project(const ConstraintSet& set, const Vector& center, const Vector& direction,
                           const Vector& metric_diag, double gamma);

/// (1/gamma) || x - generalized_project(set, x, g, metric, gamma) ||.
double gradient_mapping_norm(const ConstraintSet& set, const Vector& x, const Vector& g,
                             const Vector& metric_diag, double gamma);

}  // namespace bilevel
