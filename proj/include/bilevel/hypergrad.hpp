#pragma once

#include "bilevel/oracles.hpp"

#include <vector>

namespace bilevel {

/// Samples for one Neumann-series hypergradient estimate.
///
/// `xi` feeds grad_x f and grad_y f, `zeta0` the cross Hessian, and `zetas[i-1]` the
/// i-th inner Hessian factor. `k_index` is the random truncation depth, drawn
/// independently of the keys.
struct HypergradBatch {
  SampleKey xi;
  SampleKey zeta0;
  std::vector<SampleKey> zetas;  // size K - 1
  int k_index = 0;
  int K = 1;
  double theta = 1.0;

  /// Draws a batch from (run_seed, tag): K + 1 sample keys and a uniform depth.
  static HypergradBatch draw(std::uint64_t run_seed, std::uint64_t tag, int K, double theta);

  void validate(double L_g) const;
};

/// grad_x f(x,y;xi) - grad^2_xy g(x,y;zeta0) [K theta prod_{i=1..k} (I - theta H_i)] grad_y f(x,y;xi).
/// The product is applied right to left with k Hessian-vector products.
Vector estimate_neumann(const ProblemOracles& oracles, const Vector& x, const Vector& y,
                        const HypergradBatch& batch);

/// Exact expectation over the depth k of estimate_neumann for deterministic oracles:
/// grad_x f - grad^2_xy g [theta sum_{k<K} (I - theta grad^2_yy g)^k] grad_y f.
Vector expected_neumann(const ProblemOracles& oracles, const Vector& x, const Vector& y, double theta, int K);

/// grad_x f - grad^2_xy g (grad^2_yy g)^{-1} grad_y f, with the inner system solved by
/// conjugate gradients on Hessian-vector products. Equals grad F(x) at y = y*(x).
Vector exact_hypergradient(const ProblemOracles& oracles, const Vector& x, const Vector& y);

/// Solves H z = rhs for SPD H given as a matrix-free product. Residual target is
/// tol * ||rhs||; throws NumericalFailure after max_iter iterations.
Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& rhs,
                          double tol, int max_iter);

/// (C_gxy C_fy / mu) (1 - mu / L_g)^K: bound on ||grad-bar f - E[estimate]||.
double bias_bound(const ProblemConstants& c, int K);

/// ceil((L_g / mu) log(C_gxy C_fy T / mu)), floored at 1.
int choose_K(const ProblemConstants& c, long T);

}  // namespace bilevel
