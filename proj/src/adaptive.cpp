#include "bilevel/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bilevel {

AdaptiveKind parse_adaptive_kind(std::string_view s) {
  if (s == "adam") return AdaptiveKind::Adam;
  if (s == "norm") return AdaptiveKind::Norm;
  if (s == "adabelief") return AdaptiveKind::AdaBelief;
  if (s == "identity") return AdaptiveKind::Identity;
  throw ContractViolation("unknown adaptive kind '" + std::string(s) + "'");
}

std::string_view to_string(AdaptiveKind k) {
  switch (k) {
    case AdaptiveKind::Adam: return "adam";
    case AdaptiveKind::Norm: return "norm";
    case AdaptiveKind::AdaBelief: return "adabelief";
    case AdaptiveKind::Identity: return "identity";
  }
  return "?";
}

AdaptiveState AdaptiveState::make(Eigen::Index dim, AdaptiveKind kind, double tau, double rho,
                                  std::optional<double> b_max) {
  AdaptiveState s;
  s.a = Vector::Zero(dim);
  s.kind = kind;
  s.tau = tau;
  s.rho = rho;
  s.b_max = b_max;
  s.validate();
  return s;
}

void AdaptiveState::validate() const {
  detail::require(tau > 0.0 && tau < 1.0, "adaptive: tau must lie in (0,1)");
  detail::require(rho > 0.0 && std::isfinite(rho), "adaptive: rho must be positive");
  detail::require(a.allFinite() && (a.array() >= 0.0).all(), "adaptive: accumulator a must be finite and >= 0");
  detail::require(std::isfinite(b) && b >= 0.0, "adaptive: accumulator b must be finite and >= 0");
  if (b_max) detail::require(*b_max >= 0.0 && std::isfinite(*b_max), "adaptive: b_max must be finite and >= 0");
}

OuterUpdate update_outer_matrix(const AdaptiveState& state, const Vector& grad_sample, const std::optional<Vector>& w) {
  detail::require_dim(grad_sample.size(), state.a.size(), "update_outer_matrix");
  AdaptiveState next = state;
  next.t += 1;
  switch (state.kind) {
    case AdaptiveKind::Identity:
      return {std::move(next), Vector::Constant(state.a.size(), state.rho)};
    case AdaptiveKind::Norm:
      throw ContractViolation("update_outer_matrix: norm kind is only defined for the inner scalar");
    case AdaptiveKind::Adam:
      next.a = state.tau * state.a.array() + (1.0 - state.tau) * grad_sample.array().square();
      break;
    case AdaptiveKind::AdaBelief: {
      if (!w) throw ContractViolation("update_outer_matrix: adabelief requires w_t");
      detail::require_dim(w->size(), state.a.size(), "update_outer_matrix");
      next.a = state.tau * state.a.array() + (1.0 - state.tau) * (grad_sample - *w).array().square();
      break;
    }
  }
  Vector A = next.a.array().sqrt() + state.rho;
  return {std::move(next), std::move(A)};
}

InnerUpdate update_inner_scalar(const AdaptiveState& state, const Vector& grad_sample, const std::optional<Vector>& v) {
  AdaptiveState next = state;
  next.t += 1;
  double n = 0.0;
  switch (state.kind) {
    case AdaptiveKind::Identity:
      return {std::move(next), state.rho};
    case AdaptiveKind::Adam:
      throw ContractViolation("update_inner_scalar: adam kind is only defined for the outer matrix");
    case AdaptiveKind::Norm:
      n = grad_sample.norm();
      break;
    case AdaptiveKind::AdaBelief:
      if (!v) throw ContractViolation("update_inner_scalar: adabelief requires v_t");
      detail::require_dim(v->size(), grad_sample.size(), "update_inner_scalar");
      n = (grad_sample - *v).norm();
      break;
  }
  next.b = state.tau * state.b + (1.0 - state.tau) * n;
  if (state.b_max) next.b = std::min(next.b, *state.b_max);
  next.realized_b_max = std::max(next.realized_b_max, next.b);
  const double B = next.b + state.rho;
  return {std::move(next), B};
}

}  // namespace bilevel
