#include "bilevel/tasks/quadratic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace bilevel {

namespace detail {

struct QuadraticModel {
  QuadraticSpec spec;
  Eigen::LLT<Matrix> Q_llt;
};

}  // namespace detail

namespace {

constexpr std::uint64_t kSaltFx = 0x6678000000000001ULL;
constexpr std::uint64_t kSaltFy = 0x6679000000000002ULL;
constexpr std::uint64_t kSaltGy = 0x6779000000000003ULL;
constexpr std::uint64_t kSaltHess = 0x4879000000000004ULL;

Vector truncated_noise(SampleKey key, std::uint64_t salt, Eigen::Index n, double sigma) {
  if (sigma == 0.0) return Vector::Zero(n);
  auto eng = engine_for(SampleKey{splitmix64(key.value ^ salt)});
  std::normal_distribution<double> nd(0.0, 1.0);
  const double s = sigma / std::sqrt(static_cast<double>(n));
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double z = nd(eng);
    while (std::abs(z) > 3.0) z = nd(eng);
    out[i] = s * z;
  }
  return out;
}

Matrix random_orthogonal(Eigen::Index n, std::mt19937_64& eng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix G(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) G(i, j) = nd(eng);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Qm = qr.householderQ() * Matrix::Identity(n, n);
  // Fix column signs so the factor is unique.
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (R(j, j) < 0.0) Qm.col(j) *= -1.0;
  return Qm;
}

}  // namespace

QuadraticSpec random_quadratic(QuadraticDims dims, const SpectrumSpec& sp, double coupling, double c_reg,
                               double noise_sigma, std::uint64_t seed) {
  detail::require(dims.d >= 1 && dims.p >= 1, "random_quadratic: dimensions must be positive");
  detail::require(sp.mu > 0.0 && sp.mu <= sp.L_g, "random_quadratic: need 0 < mu <= L_g");
  detail::require(sp.family_size >= 1, "random_quadratic: family_size must be >= 1");
  detail::require(sp.spread >= 0.0 && sp.spread <= 1.0, "random_quadratic: spread must lie in [0,1]");
  detail::require(coupling >= 0.0, "random_quadratic: coupling must be >= 0");

  std::mt19937_64 eng(splitmix64(seed));
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::Index p = dims.p;
  const Eigen::Index d = dims.d;

  QuadraticSpec s;
  s.c_reg = c_reg;
  s.noise_sigma = noise_sigma;
  if (sp.isotropic) {
    s.Q = sp.mu * Matrix::Identity(p, p);
    s.declared_L_g = sp.L_g;
  } else {
    const Matrix V = random_orthogonal(p, eng);
    Vector lam(p);
    for (Eigen::Index i = 0; i < p; ++i)
      lam[i] = p == 1 ? sp.mu : sp.mu + (sp.L_g - sp.mu) * static_cast<double>(i) / static_cast<double>(p - 1);
    s.Q = V * lam.asDiagonal() * V.transpose();
    s.Q = 0.5 * (s.Q + s.Q.transpose());
    // The rotated spectrum is only accurate to rounding; keep the constructed endpoints.
    s.declared_mu = sp.mu;
    s.declared_L_g = sp.L_g;
    if (sp.family_size > 1) {
      const int J = sp.family_size;
      for (int j = 0; j < J; ++j) {
        const double w = 2.0 * j / (J - 1) - 1.0;
        Vector lj(p);
        for (Eigen::Index i = 0; i < p; ++i) {
          const double room = std::min(lam[i] - sp.mu, sp.L_g - lam[i]);
          lj[i] = lam[i] + sp.spread * room * w;
        }
        Matrix Qj = V * lj.asDiagonal() * V.transpose();
        s.hessian_family.push_back(0.5 * (Qj + Qj.transpose()));
      }
    }
  }

  Matrix P(p, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < p; ++i) P(i, j) = nd(eng);
  if (coupling == 0.0) {
    P.setZero();
  } else {
    const double nrm = Eigen::JacobiSVD<Matrix>(P).singularValues()(0);
    P *= coupling / nrm;
  }
  s.P = P;
  s.q = Vector::Zero(p);
  Vector r(p);
  for (Eigen::Index i = 0; i < p; ++i) r[i] = nd(eng);
  s.r = r / r.norm();
  return s;
}

Vector QuadraticTask::y_star(const Vector& x) const {
  return model->Q_llt.solve(model->spec.P * x + model->spec.q);
}

Vector QuadraticTask::grad_F(const Vector& x) const {
  const auto& s = model->spec;
  return s.c_reg * x + s.P.transpose() * model->Q_llt.solve(y_star(x) - s.r);
}

double QuadraticTask::F(const Vector& x) const {
  const auto& s = model->spec;
  return 0.5 * (y_star(x) - s.r).squaredNorm() + 0.5 * s.c_reg * x.squaredNorm();
}

Vector QuadraticTask::surrogate(const Vector& x, const Vector& y) const {
  const auto& s = model->spec;
  return s.c_reg * x + s.P.transpose() * model->Q_llt.solve(y - s.r);
}

QuadraticTask build_quadratic(QuadraticSpec spec) {
  const Eigen::Index p = spec.Q.rows();
  detail::require(p >= 1 && spec.Q.cols() == p, "build_quadratic: Q must be square");
  detail::require(spec.P.rows() == p && spec.P.cols() >= 1, "build_quadratic: P must be p x d");
  const Eigen::Index d = spec.P.cols();
  detail::require_dim(spec.q.size(), p, "build_quadratic(q)");
  detail::require_dim(spec.r.size(), p, "build_quadratic(r)");
  detail::require(spec.c_reg >= 0.0, "build_quadratic: c_reg must be >= 0");
  detail::require(spec.noise_sigma >= 0.0, "build_quadratic: noise_sigma must be >= 0");
  detail::require(spec.y_radius >= 0.0, "build_quadratic: y_radius must be >= 0");
  detail::require((spec.Q - spec.Q.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, spec.Q.norm()),
                  "build_quadratic: Q must be symmetric");
  if (spec.hessian_family.empty()) spec.hessian_family.push_back(spec.Q);

  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  Matrix mean = Matrix::Zero(p, p);
  for (const Matrix& Qj : spec.hessian_family) {
    detail::require(Qj.rows() == p && Qj.cols() == p, "build_quadratic: Hessian family member has wrong shape");
    Eigen::SelfAdjointEigenSolver<Matrix> es(Qj, Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues()(0));
    hi = std::max(hi, es.eigenvalues()(p - 1));
    mean += Qj;
  }
  mean /= static_cast<double>(spec.hessian_family.size());
  const double scale = std::max(1.0, hi);
  const double mu = spec.declared_mu.value_or(lo);
  const double L_g = spec.declared_L_g.value_or(hi);
  if (!(mu > 0.0) || lo < mu - 1e-12 * scale || hi > L_g + 1e-12 * scale || mu > L_g) {
    throw ContractViolation("build_quadratic: Hessian spectrum violates mu I <= Q_j <= L_g I");
  }
  if ((mean - spec.Q).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ContractViolation("build_quadratic: Hessian family mean differs from Q");
  }

  auto model = std::make_shared<detail::QuadraticModel>();
  model->spec = spec;
  model->Q_llt.compute(spec.Q);
  detail::require(model->Q_llt.info() == Eigen::Success, "build_quadratic: Q is not positive definite");

  ProblemConstants c;
  c.L_f = std::max(1.0, spec.c_reg);
  c.L_g = L_g;
  c.mu = mu;
  c.C_gxy = d > 0 && spec.P.norm() > 0.0 ? Eigen::JacobiSVD<Matrix>(spec.P).singularValues()(0) : 0.0;
  c.C_fy = spec.y_radius + spec.r.norm();
  c.L_gxy = 0.0;
  c.L_gyy = 0.0;
  c.sigma = spec.noise_sigma;

  auto wire = [&](bool stochastic) {
    ProblemOracles o;
    o.dim_x = d;
    o.dim_y = p;
    o.constants = c;
    o.set_x = spec.set_x.value_or(ConstraintSet::unconstrained(d));
    o.set_y = spec.set_y.value_or(ConstraintSet::unconstrained(p));
    const double sigma = stochastic ? spec.noise_sigma : 0.0;
    const bool sample_hess = stochastic && model->spec.hessian_family.size() > 1;
    o.deterministic = sigma == 0.0 && !sample_hess;
    o.grad_f_x = [model, sigma](const Vector& x, const Vector&, SampleKey k) -> Vector {
      return model->spec.c_reg * x + truncated_noise(k, kSaltFx, x.size(), sigma);
    };
    o.grad_f_y = [model, sigma](const Vector&, const Vector& y, SampleKey k) -> Vector {
      return y - model->spec.r + truncated_noise(k, kSaltFy, y.size(), sigma);
    };
    o.grad_g_y = [model, sigma](const Vector& x, const Vector& y, SampleKey k) -> Vector {
      const auto& s = model->spec;
      return s.Q * y - s.P * x - s.q + truncated_noise(k, kSaltGy, y.size(), sigma);
    };
    o.hvp_g_xy = [model](const Vector&, const Vector&, const Vector& v, SampleKey) -> Vector {
      return -(model->spec.P.transpose() * v);
    };
    o.hvp_g_yy = [model, sample_hess](const Vector&, const Vector&, const Vector& v, SampleKey k) -> Vector {
      const auto& fam = model->spec.hessian_family;
      if (!sample_hess) return model->spec.Q * v;
      const auto j = uniform_index(SampleKey{splitmix64(k.value ^ kSaltHess)}, fam.size());
      return fam[j] * v;
    };
    o.validate();
    return o;
  };

  QuadraticTask task;
  task.model = model;
  task.spec = spec;
  task.oracles = wire(true);
  auto pop = std::make_shared<ProblemOracles>(wire(false));

  // Reference callables hold the shared model, not the task object.
  QuadraticTask view;
  view.model = model;
  task.reference.population = pop;
  task.reference.y_star = [view](const Vector& x) { return view.y_star(x); };
  task.reference.grad_F = [view](const Vector& x) { return view.grad_F(x); };
  task.reference.surrogate = [view](const Vector& x, const Vector& y) { return view.surrogate(x, y); };
  task.reference.objective = [view](const Vector& x, const Vector&) { return view.F(x); };
  task.reference.constants_known = true;
  return task;
}

}  // namespace bilevel
