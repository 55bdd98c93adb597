#pragma once

#include "bilevel/reference.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bilevel {

/// g(x,y) = 1/2 y^T Q y - y^T (P x + q),   f(x,y) = 1/2 ||y - r||^2 + (c_reg/2) ||x||^2.
///
/// Inner Hessian samples are uniform draws from `hessian_family`, whose mean must be Q.
/// Gradient oracles add zero-mean Gaussian noise truncated at three standard deviations,
/// with per-coordinate std noise_sigma / sqrt(dim) so that E||noise||^2 <= noise_sigma^2.
struct QuadraticSpec {
  Matrix Q;
  std::vector<Matrix> hessian_family;  // empty means {Q}
  Matrix P;                            // p x d
  Vector q;
  Vector r;
  double c_reg = 0.0;
  double noise_sigma = 0.0;
  /// Iterates y are assumed to stay in ||y|| <= y_radius; C_fy = y_radius + ||r||.
  double y_radius = 1.0;
  /// Optional looser smoothness / convexity constants than the spectrum gives.
  std::optional<double> declared_L_g;
  std::optional<double> declared_mu;
  std::optional<ConstraintSet> set_x;
  std::optional<ConstraintSet> set_y;
};

struct SpectrumSpec {
  double mu = 1.0;
  double L_g = 10.0;
  /// Q = mu I with L_g only declared; otherwise eigenvalues are evenly spaced in [mu, L_g].
  bool isotropic = false;
  /// Number of Hessian samples. Members share Q's eigenvectors; interior eigenvalues are
  /// shifted by spread * (distance to the nearer end of [mu, L_g]) with zero-mean weights.
  int family_size = 1;
  double spread = 0.5;
};

struct QuadraticDims {
  Eigen::Index d = 1;
  Eigen::Index p = 1;
};

/// Random instance: Haar-ish eigenvectors, P scaled to spectral norm `coupling`,
/// q = 0, r a random unit vector. Deterministic in `seed`.
QuadraticSpec random_quadratic(QuadraticDims dims, const SpectrumSpec& spectrum, double coupling, double c_reg,
                               double noise_sigma, std::uint64_t seed);

namespace detail {
struct QuadraticModel;
}

struct QuadraticTask {
  std::shared_ptr<const detail::QuadraticModel> model;
  QuadraticSpec spec;
  ProblemOracles oracles;  // stochastic unless noise is 0 and the family is a singleton
  TaskReference reference;

  [[nodiscard]] Vector y_star(const Vector& x) const;
  [[nodiscard]] Vector grad_F(const Vector& x) const;
  [[nodiscard]] double F(const Vector& x) const;
  [[nodiscard]] Vector surrogate(const Vector& x, const Vector& y) const;
};

/// Validates the eigenvalue sandwich and family mean, then wires the oracles.
QuadraticTask build_quadratic(QuadraticSpec spec);

}  // namespace bilevel
