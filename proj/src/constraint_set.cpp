#include "bilevel/constraint_set.hpp"

#include <algorithm>
#include <cmath>

namespace bilevel {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr int kBallBisectionMaxIter = 200;
constexpr double kBallBisectionTol = 1e-12;

bool is_uniform(const Vector& m) {
  if (m.size() == 0) return true;
  const double first = m[0];
  return (m.array() == first).all();
}

}  // namespace

ConstraintSet ConstraintSet::unconstrained(Eigen::Index dim) {
  detail::require(dim > 0, "ConstraintSet: dimension must be positive");
  return ConstraintSet(Unconstrained{dim});
}

ConstraintSet ConstraintSet::box(Vector lower, Vector upper) {
  detail::require(lower.size() > 0, "ConstraintSet::box: empty bounds");
  detail::require_dim(upper.size(), lower.size(), "ConstraintSet::box");
  detail::require((lower.array() <= upper.array()).all(), "ConstraintSet::box: lower > upper");
  detail::require(!lower.hasNaN() && !upper.hasNaN(), "ConstraintSet::box: NaN bound");
  return ConstraintSet(Box{std::move(lower), std::move(upper)});
}

ConstraintSet ConstraintSet::ball(Vector center, double radius) {
  detail::require(center.size() > 0, "ConstraintSet::ball: empty center");
  detail::require(center.allFinite(), "ConstraintSet::ball: non-finite center");
  detail::require(radius > 0.0 && std::isfinite(radius), "ConstraintSet::ball: radius must be positive");
  return ConstraintSet(Ball{std::move(center), radius});
}

Eigen::Index ConstraintSet::dim() const {
  return std::visit(overloaded{[](const Unconstrained& u) { return u.dim; },
                               [](const Box& b) { return b.lower.size(); },
                               [](const Ball& b) { return b.center.size(); }},
                    set_);
}

bool ConstraintSet::contains(const Vector& z, double slack) const {
  if (z.size() != dim()) return false;
  return std::visit(
      overloaded{[&](const Unconstrained&) { return z.allFinite(); },
                 [&](const Box& b) {
                   return ((z.array() >= b.lower.array() - slack) && (z.array() <= b.upper.array() + slack)).all();
                 },
                 [&](const Ball& b) { return (z - b.center).norm() <= b.radius + slack; }},
      set_);
}

Vector project(const ConstraintSet& set, const Vector& z) {
  detail::require_dim(z.size(), set.dim(), "project");
  return std::visit(overloaded{[&](const Unconstrained&) -> Vector { return z; },
                               [&](const Box& b) -> Vector { return z.cwiseMax(b.lower).cwiseMin(b.upper); },
                               [&](const Ball& b) -> Vector {
                                 const Vector offset = z - b.center;
                                 const double n = offset.norm();
                                 if (n <= b.radius) return z;
                                 return b.center + (b.radius / n) * offset;
                               }},
                    set.variant());
}

Vector generalized_project(const ConstraintSet& set, const Vector& center, const Vector& direction,
                           const Vector& metric_diag, double gamma) {
  const Eigen::Index n = set.dim();
  detail::require_dim(center.size(), n, "generalized_project(center)");
  detail::require_dim(direction.size(), n, "generalized_project(direction)");
  detail::require_dim(metric_diag.size(), n, "generalized_project(metric)");
  detail::require(gamma > 0.0 && std::isfinite(gamma), "generalized_project: gamma must be positive");
  detail::require((metric_diag.array() > 0.0).all() && metric_diag.allFinite(),
                  "generalized_project: metric entries must be positive");

  // Minimizer over R^n; written as c - (gamma / m) g so a uniform metric reproduces
  // project(c - (gamma / rho) g) bit for bit.
  const Vector free_min =
      center.array() - (gamma / metric_diag.array()) * direction.array();

  const auto* ball = std::get_if<Ball>(&set.variant());
  if (ball == nullptr || is_uniform(metric_diag)) return project(set, free_min);

  const Vector offset = free_min - ball->center;
  if (offset.norm() <= ball->radius) return free_min;

  // Stationarity with multiplier nu >= 0 on ||x - c0||^2 <= r^2 gives, per coordinate,
  // x_i - c0_i = w_i (u_i - c0_i) / (w_i + nu), with w = metric / gamma.
  const Vector weights = metric_diag / gamma;
  const Vector scaled = weights.cwiseProduct(offset);
  auto point_at = [&](double nu) -> Vector {
    return ball->center.array() + scaled.array() / (weights.array() + nu);
  };
  auto radius_at = [&](double nu) { return (scaled.array() / (weights.array() + nu)).matrix().norm(); };

  double lo = 0.0;
  double hi = scaled.norm() / ball->radius;  // radius_at(hi) <= r
  for (int it = 0; it < kBallBisectionMaxIter && hi - lo > kBallBisectionTol * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (radius_at(mid) > ball->radius) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Vector x = point_at(hi);
  // hi is on the feasible side; remove any last-ulp excess.
  const double excess = (x - ball->center).norm();
  if (excess > ball->radius) x = ball->center + (ball->radius / excess) * (x - ball->center);
  return x;
}

double gradient_mapping_norm(const ConstraintSet& set, const Vector& x, const Vector& g,
                             const Vector& metric_diag, double gamma) {
  return (x - generalized_project(set, x, g, metric_diag, gamma)).norm() / gamma;
}

}  // namespace bilevel
