#pragma once

#include <algorithm>
#include <cmath>

#include "emcwm/model.hpp"

namespace emcwm {

/// 2 l - m log N (larger is better).
inline double bic(double loglik, long n_params, long n_obs) {
  return 2.0 * loglik - static_cast<double>(n_params) * std::log(static_cast<double>(n_obs));
}

/// BIC plus the log responsibility of each observation's MAP component.
inline double icl(double bic_value, const Responsibilities& resp) {
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < resp.tau.rows(); ++i) {
    const double top = resp.tau.row(i).maxCoeff();
    if (top < 1.0) penalty += std::log(std::max(top, 1e-300));
  }
  return bic_value + penalty;
}

}  // namespace emcwm
