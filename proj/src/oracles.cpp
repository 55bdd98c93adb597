#include "bilevel/oracles.hpp"

#include <cmath>

namespace bilevel {

void ProblemConstants::validate() const {
  const double all[] = {L_f, L_g, mu, C_fy, C_gxy, L_gxy, L_gyy, sigma};
  for (double v : all) {
    detail::require(std::isfinite(v) && v >= 0.0, "ProblemConstants: constants must be finite and nonnegative");
  }
  detail::require(L_f > 0.0, "ProblemConstants: L_f must be positive");
  detail::require(mu > 0.0, "ProblemConstants: mu must be positive");
  detail::require(mu <= L_g, "ProblemConstants: mu must not exceed L_g");
}

void ProblemOracles::validate() const {
  detail::require(dim_x > 0 && dim_y > 0, "ProblemOracles: dimensions must be positive");
  detail::require(grad_f_x && grad_f_y && grad_g_y && hvp_g_xy && hvp_g_yy,
                  "ProblemOracles: missing oracle");
  detail::require_dim(set_x.dim(), dim_x, "ProblemOracles(set_x)");
  detail::require_dim(set_y.dim(), dim_y, "ProblemOracles(set_y)");
  constants.validate();
}

}  // namespace bilevel
