#pragma once

#include "bilevel/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace bilevel {

enum class TaskKind { Quadratic, HyperCleaning };

struct QuadraticParams {
  Eigen::Index d = 10;
  Eigen::Index p = 10;
  double mu = 1.0;
  double L_g = 10.0;
  bool isotropic = false;
  int hessian_family = 2;
  double hessian_spread = 0.5;
  double coupling = 0.001;  // spectral norm of P, i.e. C_gxy
  double c_reg = 1.0;
  double noise_sigma = 0.1;
  double y_radius = 1.0;
};

struct HyperCleaningParams {
  Eigen::Index n_train = 500;
  Eigen::Index n_val = 500;
  Eigen::Index features = 20;
  double separation = 2.0;
  double corruption = 0.6;
  double C_reg = 0.001;
  Eigen::Index batch = 32;
  std::string train_csv;  // blobs are generated when empty
  std::string val_csv;
};

struct RunConfig {
  SolverConfig solver;
  TaskKind task = TaskKind::Quadratic;
  QuadraticParams quadratic;
  HyperCleaningParams hypercleaning;
  std::uint64_t task_seed = 1;
  double x1_norm = 0.0;  // x1 = x1_norm * (random unit vector from task_seed); 0 gives the origin
  int repeats = 1;
  std::optional<std::uint64_t> oracle_budget;  // when set, T is derived from it
  std::optional<double> b_u;                   // analytic bound on B_t for theorem checks
  bool theory_box = false;  // take c1, c2, m, lambda, gamma from the theorem box at the config's k
  std::string out = "out";
};

/// Flat `key = value` text, one pair per line, `#` starts a comment. Unknown keys,
/// malformed values and out-of-range values throw ContractViolation naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace bilevel
