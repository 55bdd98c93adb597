#pragma once

#include "bilevel/types.hpp"

#include <optional>
#include <string_view>

namespace bilevel {

enum class AdaptiveKind { Adam, Norm, AdaBelief, Identity };

AdaptiveKind parse_adaptive_kind(std::string_view s);
std::string_view to_string(AdaptiveKind k);

/// Accumulators behind the adaptive matrices A_t = diag(sqrt(a) + rho) and B_t = (b + rho) I.
struct AdaptiveState {
  Vector a;        // outer accumulator, one entry per coordinate of x
  double b = 0.0;  // inner accumulator
  AdaptiveKind kind = AdaptiveKind::Adam;
  double tau = 0.9;
  double rho = 0.1;
  long t = 0;
  std::optional<double> b_max;  // optional cap on b; disabled by default
  double realized_b_max = 0.0;  // largest b seen so far, before the +rho offset

  static AdaptiveState make(Eigen::Index dim, AdaptiveKind kind, double tau, double rho,
                            std::optional<double> b_max = std::nullopt);
  void validate() const;
};

struct OuterUpdate {
  AdaptiveState state;
  Vector A_diag;
};

struct InnerUpdate {
  AdaptiveState state;
  double b_scalar;
};

/// Adam: a' = tau a + (1 - tau) g^2. AdaBelief: same with (g - w)^2. Identity: A = rho, a unchanged.
/// Norm kind is not defined for the outer matrix.
OuterUpdate update_outer_matrix(const AdaptiveState& state, const Vector& grad_sample,
                                const std::optional<Vector>& w = std::nullopt);

/// Norm: b' = tau b + (1 - tau) ||g||. AdaBelief: ||g - v||. Identity: B = rho.
/// Adam kind is not defined for the scalar inner matrix.
InnerUpdate update_inner_scalar(const AdaptiveState& state, const Vector& grad_sample,
                                const std::optional<Vector>& v = std::nullopt);

}  // namespace bilevel
