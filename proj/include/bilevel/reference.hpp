#pragma once

#include "bilevel/oracles.hpp"

#include <functional>
#include <memory>

namespace bilevel {

/// Ground-truth quantities a task can expose for diagnostics. Every callable is optional;
/// the solver fills the matching trace columns only when the callable is present.
struct TaskReference {
  /// Population (deterministic) oracles of the same instance.
  std::shared_ptr<const ProblemOracles> population;
  std::function<Vector(const Vector& x)> y_star;
  std::function<Vector(const Vector& x)> grad_F;
  /// Surrogate hypergradient at (x, y).
  std::function<Vector(const Vector& x, const Vector& y)> surrogate;
  /// Without `surrogate`, solve for it by CG on the population oracles at every record.
  bool cg_surrogate = false;
  /// Objective reported per record: F(x) for analytic tasks, a validation loss otherwise.
  std::function<double(const Vector& x, const Vector& y)> objective;
  /// Whether ProblemConstants are trustworthy enough for L0-based diagnostics.
  bool constants_known = false;
};

}  // namespace bilevel
