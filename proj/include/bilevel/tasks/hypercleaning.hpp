#pragma once

#include "bilevel/reference.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bilevel {

struct Dataset {
  Matrix features;          // n x p
  std::vector<int> labels;  // n values in {0, 1}

  [[nodiscard]] Eigen::Index n() const { return features.rows(); }
  [[nodiscard]] Eigen::Index p() const { return features.cols(); }
  void validate() const;
};

/// Two isotropic Gaussian blobs with unit variance, centered at +-(separation/2) u with
/// u = ones/sqrt(p). Labels alternate so the classes are balanced.
Dataset make_blobs(Eigen::Index n, Eigen::Index p, double separation, std::uint64_t seed);

struct CorruptedDataset {
  Dataset data;
  std::vector<bool> mask;  // true where the label was flipped
};

/// Flips exactly round(fraction * n) labels, chosen uniformly without replacement.
CorruptedDataset corrupt_labels(const Dataset& d, double fraction, std::uint64_t seed);

/// Strict CSV reader: each row is a binary label followed by p features.
Dataset load_csv(const std::string& path);
Dataset parse_csv(const std::string& text);

/// Per-sample weights on a noisy training set:
///   outer  f(z, theta) = (1/|V|) sum_V l(a^T theta, b)
///   inner  g(z, theta) = (1/|T|) sum_T sigmoid(z_i) l(a_i^T theta, b_i) + C ||theta||^2
/// with l(u, b) = log(1 + e^u) - b u. x = z (one entry per training row), y = theta.
struct HyperCleaningTask {
  Dataset train;
  Dataset val;
  double C_reg = 0.001;
  Eigen::Index batch = 32;
  ProblemOracles oracles;  // minibatch oracles; full batch when batch >= n
  TaskReference reference;

  [[nodiscard]] double inner_loss(const Vector& z, const Vector& theta) const;
  [[nodiscard]] double val_loss(const Vector& theta) const;
};

HyperCleaningTask build_hypercleaning(Dataset train, Dataset val, double C_reg = 0.001, Eigen::Index batch = 32);

/// Full-batch gradient descent on g(x, .) with step 1/L_g until ||grad_y g|| <= tol.
/// Requires deterministic oracles. Throws NumericalFailure after max_iter steps.
Vector inner_solve_reference(const ProblemOracles& oracles, const Vector& x, double tol,
                             const Vector* y0 = nullptr, long max_iter = 1'000'000);

/// Area under the ROC curve of `score` for separating rows where positive[i] is true.
double roc_auc(const Vector& score, const std::vector<bool>& positive);

}  // namespace bilevel
