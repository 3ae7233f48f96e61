#pragma once

// Central finite-difference gradient checking for ParamSet-based models.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "mbcal/nn/params.hpp"

namespace mbcal::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t checked = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). Entries whose
/// magnitude is below `floor` are therefore held to an absolute bound of
/// tol * floor, where central differences have no useful relative precision.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `loss()` evaluates the scalar objective at the current parameter values;
/// `gradient()` must leave dLoss/dParam in every block's grad (callers zero
/// grads themselves).
inline GradCheckResult check_gradients(nn::ParamSet& params, const std::function<double()>& loss,
                                       const std::function<void()>& gradient, double step = 1e-4) {
  params.zero_grad();
  gradient();
  GradCheckResult res;
  for (auto& b : params) {
    for (Eigen::Index i = 0; i < b.value.size(); ++i) {
      double& w = b.value.data()[i];
      const double saved = w;
      w = saved + step;
      const double up = loss();
      w = saved - step;
      const double down = loss();
      w = saved;
      const double numeric = (up - down) / (2 * step);
      const double err = relative_error(b.grad.data()[i], numeric);
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_block = b.name;
      }
    }
  }
  return res;
}

}  // namespace mbcal::testing
