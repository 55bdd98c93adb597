#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace bilevel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A caller broke a documented precondition (bad dimension, nonpositive step, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative numerical routine failed to reach its tolerance.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A closed-form expression is undefined for the supplied constants.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* who) {
  if (got != want) {
    throw ContractViolation(std::string(who) + ": dimension mismatch (got " + std::to_string(got) +
                            ", expected " + std::to_string(want) + ")");
  }
}

}  // namespace detail
}  // namespace bilevel
