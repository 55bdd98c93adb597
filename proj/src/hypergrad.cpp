#include "bilevel/hypergrad.hpp"

#include <algorithm>
#include <cmath>

namespace bilevel {

namespace {

// Slots inside a batch tag. The depth slot is separate so k is independent of the keys.
constexpr std::uint64_t kSlotDepth = 0;
constexpr std::uint64_t kSlotXi = 1;
constexpr std::uint64_t kSlotZeta0 = 2;
constexpr std::uint64_t kSlotZetaBase = 3;

constexpr double kCgTolerance = 1e-10;

// Hash domain separating hypergradient batches from other per-iteration keys.
constexpr std::uint64_t kBatchDomain = 0x4e45554d414e4e00ULL;

}  // namespace

HypergradBatch HypergradBatch::draw(std::uint64_t run_seed, std::uint64_t tag, int K, double theta) {
  detail::require(K >= 1, "HypergradBatch: K must be >= 1");
  const std::uint64_t seed = splitmix64(run_seed ^ kBatchDomain);
  HypergradBatch b;
  b.K = K;
  b.theta = theta;
  b.xi = derive_key(seed, tag, kSlotXi);
  b.zeta0 = derive_key(seed, tag, kSlotZeta0);
  b.zetas.reserve(static_cast<std::size_t>(K - 1));
  for (int i = 1; i < K; ++i) b.zetas.push_back(derive_key(seed, tag, kSlotZetaBase + static_cast<std::uint64_t>(i - 1)));
  b.k_index = static_cast<int>(uniform_index(derive_key(seed, tag, kSlotDepth), static_cast<std::uint64_t>(K)));
  return b;
}

void HypergradBatch::validate(double L_g) const {
  detail::require(K >= 1, "HypergradBatch: K must be >= 1");
  detail::require(static_cast<int>(zetas.size()) == K - 1, "HypergradBatch: need exactly K-1 inner Hessian samples");
  detail::require(k_index >= 0 && k_index < K, "HypergradBatch: k_index must lie in [0, K-1]");
  // Small slack so theta = 1/L_g computed elsewhere is accepted.
  detail::require(theta > 0.0 && theta <= (1.0 / L_g) * (1.0 + 1e-12), "HypergradBatch: theta must lie in (0, 1/L_g]");
}

Vector estimate_neumann(const ProblemOracles& oracles, const Vector& x, const Vector& y,
                        const HypergradBatch& batch) {
  batch.validate(oracles.constants.L_g);
  Vector t = oracles.grad_f_y(x, y, batch.xi);
  for (int i = batch.k_index; i >= 1; --i) {
    t -= batch.theta * oracles.hvp_g_yy(x, y, t, batch.zetas[static_cast<std::size_t>(i - 1)]);
  }
  t *= static_cast<double>(batch.K) * batch.theta;
  return oracles.grad_f_x(x, y, batch.xi) - oracles.hvp_g_xy(x, y, t, batch.zeta0);
}

Vector expected_neumann(const ProblemOracles& oracles, const Vector& x, const Vector& y, double theta, int K) {
  if (!oracles.deterministic) {
    throw ContractViolation("expected_neumann: requires deterministic (population) oracles");
  }
  detail::require(K >= 1, "expected_neumann: K must be >= 1");
  detail::require(theta > 0.0 && theta <= (1.0 / oracles.constants.L_g) * (1.0 + 1e-12),
                  "expected_neumann: theta must lie in (0, 1/L_g]");
  const SampleKey none{};
  Vector term = oracles.grad_f_y(x, y, none);
  Vector sum = term;
  for (int k = 1; k < K; ++k) {
    term -= theta * oracles.hvp_g_yy(x, y, term, none);
    sum += term;
  }
  sum *= theta;
  return oracles.grad_f_x(x, y, none) - oracles.hvp_g_xy(x, y, sum, none);
}

Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& rhs,
                          double tol, int max_iter) {
  Vector z = Vector::Zero(rhs.size());
  const double target = tol * rhs.norm();
  Vector r = rhs;
  if (r.norm() <= target || rhs.norm() == 0.0) return z;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    const Vector Hp = apply(p);
    const double pHp = p.dot(Hp);
    if (!(pHp > 0.0)) throw NumericalFailure("conjugate_gradient: operator is not positive definite");
    const double step = rr / pHp;
    z += step * p;
    r -= step * Hp;
    const double rr_next = r.squaredNorm();
    if (std::sqrt(rr_next) <= target) return z;
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  throw NumericalFailure("conjugate_gradient: no convergence within " + std::to_string(max_iter) + " iterations");
}

Vector exact_hypergradient(const ProblemOracles& oracles, const Vector& x, const Vector& y) {
  if (!oracles.deterministic) {
    throw ContractViolation("exact_hypergradient: requires deterministic (population) oracles");
  }
  const SampleKey none{};
  const Vector rhs = oracles.grad_f_y(x, y, none);
  auto apply = [&](const Vector& v) { return oracles.hvp_g_yy(x, y, v, none); };
  const Vector z = conjugate_gradient(apply, rhs, kCgTolerance, static_cast<int>(10 * oracles.dim_y));
  return oracles.grad_f_x(x, y, none) - oracles.hvp_g_xy(x, y, z, none);
}

double bias_bound(const ProblemConstants& c, int K) {
  detail::require(K >= 1, "bias_bound: K must be >= 1");
  return (c.C_gxy * c.C_fy / c.mu) * std::pow(1.0 - c.mu / c.L_g, K);
}

int choose_K(const ProblemConstants& c, long T) {
  detail::require(T >= 1, "choose_K: T must be >= 1");
  const double arg = c.C_gxy * c.C_fy * static_cast<double>(T) / c.mu;
  if (!(arg > 1.0)) return 1;
  const double K = std::ceil((c.L_g / c.mu) * std::log(arg));
  return std::max(1, static_cast<int>(K));
}

}  // namespace bilevel
