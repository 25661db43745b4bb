#pragma once

// EM fitting of a cluster-weighted model with constrained covariance
// structures on the response and covariate sides.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emcwm/covariance.hpp"
#include "emcwm/criteria.hpp"
#include "emcwm/errors.hpp"
#include "emcwm/model.hpp"

namespace emcwm {

struct FitConfig {
  int max_iter = 1000;
  double aitken_eps = 1e-5;
  /// Expected-count floor per component; unset means p + d + 1.
  std::optional<double> min_component_weight;
  std::uint64_t seed = 0;
  CovStructure structure_y = CovStructure::VVV;
  CovStructure structure_x = CovStructure::VVV;
  int groups = 1;
  InnerLoopOptions inner;

  double min_weight_for(Eigen::Index p, Eigen::Index d) const {
    return min_component_weight.value_or(static_cast<double>(p + d + 1));
  }

  void validate() const {
    if (max_iter < 1) throw ValidationError("fit config: max_iter must be >= 1");
    if (!(aitken_eps > 0.0)) throw ValidationError("fit config: aitken_eps must be > 0");
    if (min_component_weight && !(*min_component_weight >= 1.0))
      throw ValidationError("fit config: min_component_weight must be >= 1");
    if (groups < 1) throw ValidationError("fit config: G must be >= 1");
  }
};

enum class FailureKind {
  InvalidInput,
  Initialization,
  DegenerateComponent,
  DegenerateCovariance,
  RankDeficient,
  Numerical,
  NonConvergence,
};

constexpr std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::InvalidInput: return "invalid_input";
    case FailureKind::Initialization: return "initialization";
    case FailureKind::DegenerateComponent: return "degenerate_component";
    case FailureKind::DegenerateCovariance: return "degenerate_covariance";
    case FailureKind::RankDeficient: return "rank_deficient";
    case FailureKind::Numerical: return "numerical";
    case FailureKind::NonConvergence: return "non_convergence";
  }
  return "unknown";
}

struct FitFailure {
  FailureKind kind;
  std::string message;
  int iteration = 0;
};

struct FitResult {
  MixtureParams params;
  Responsibilities tau;
  std::vector<double> loglik_trace;
  double final_loglik = std::numeric_limits<double>::quiet_NaN();
  long n_params = 0;
  double bic = std::numeric_limits<double>::quiet_NaN();
  double icl = std::numeric_limits<double>::quiet_NaN();
  Labels labels;
  bool converged = false;
  int iterations = 0;
  std::optional<FitFailure> failure;
  std::vector<std::string> warnings;

  bool ok() const { return !failure.has_value(); }
};

/// m = (G-1) + G p + free(Sigma_X) + G d (1+p) + free(Sigma_Y)
constexpr long count_params(CovStructure structure_y, CovStructure structure_x, long G, long p, long d) {
  return (G - 1) + G * p + free_params(structure_x, p, G) + G * d * (1 + p) + free_params(structure_y, d, G);
}

struct EStepResult {
  Responsibilities resp;
  double loglik = 0.0;
};

inline EStepResult e_step(const Dataset& data, const MixtureParams& params) {
  const Eigen::MatrixXd joint = joint_log_components(data, params);
  const Eigen::VectorXd lse = logsumexp_rows(joint);
  EStepResult out;
  out.resp.tau = (joint.colwise() - lse).array().exp();
  const Eigen::VectorXd sums = out.resp.tau.rowwise().sum();
  out.resp.tau.array().colwise() /= sums.array();
  out.loglik = lse.sum();
  if (!std::isfinite(out.loglik)) throw DecompositionError("e-step: non-finite log-likelihood");
  return out;
}

/// Warm-start state carried between M-steps of one fit.
struct MStepState {
  ConstrainedEstimate response;
  ConstrainedEstimate covariate;
  bool inner_converged = true;
};

/// Closed-form updates for weights, covariate means and regression
/// coefficients, followed by constrained covariance estimation on the
/// covariate scatter (about the means) and the response scatter (about the
/// fitted regression).
inline MixtureParams m_step(const Dataset& data, const Responsibilities& resp, CovStructure structure_y,
                            CovStructure structure_x, MStepState* state = nullptr, const InnerLoopOptions& inner = {}) {
  const auto n = data.size();
  const auto p = data.p();
  const auto G = resp.tau.cols();
  if (resp.tau.rows() != n) throw DimensionError("m-step: responsibilities and data row counts differ");
  const Eigen::MatrixXd design = detail::with_intercept(data.covariates);

  MixtureParams out;
  out.structure_y = structure_y;
  out.structure_x = structure_x;
  out.components.resize(static_cast<std::size_t>(G));
  WeightedScatter sx;
  WeightedScatter sy;

  for (Eigen::Index g = 0; g < G; ++g) {
    auto& c = out.components[static_cast<std::size_t>(g)];
    const Eigen::VectorXd w = resp.tau.col(g);
    const double ng = w.sum();
    if (!(ng > 0.0)) throw RankDeficiency("m-step: component " + std::to_string(g + 1) + " has zero weight");
    c.weight = ng / static_cast<double>(n);
    c.mean_x = data.covariates.transpose() * w / ng;

    const Eigen::MatrixXd xc = data.covariates.rowwise() - c.mean_x.transpose();
    sx.scatters.push_back(detail::symmetrized(xc.transpose() * w.asDiagonal() * xc));
    sx.weights.push_back(ng);

    const Eigen::MatrixXd weighted_design = w.asDiagonal() * design;
    const Eigen::MatrixXd gram = detail::symmetrized(design.transpose() * weighted_design);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13) || !ldlt.isPositive())
      throw RankDeficiency("m-step: weighted design of component " + std::to_string(g + 1) + " is singular");
    c.coeffs = ldlt.solve(weighted_design.transpose() * data.responses);

    const Eigen::MatrixXd rc = data.responses - design * c.coeffs;
    sy.scatters.push_back(detail::symmetrized(rc.transpose() * w.asDiagonal() * rc));
    sy.weights.push_back(ng);
  }
  if (p < 1) throw DimensionError("m-step: no covariates");

  const bool warm = state != nullptr && !state->response.sigmas.empty();
  auto est_y = estimate_constrained(sy, structure_y, warm ? &state->response : nullptr, inner);
  auto est_x = estimate_constrained(sx, structure_x, warm ? &state->covariate : nullptr, inner);

  // A covariance that has collapsed relative to the spread of the raw
  // columns is degenerate even when its eigenvalues are well balanced.
  const auto require_scale = [&](const std::vector<Eigen::MatrixXd>& sigmas, const Eigen::MatrixXd& raw, const char* side) {
    const double spread = (raw.rowwise() - raw.colwise().mean()).squaredNorm() / static_cast<double>(raw.size());
    for (std::size_t g = 0; g < sigmas.size(); ++g) {
      if (spread > 0.0 && !(sigmas[g].diagonal().maxCoeff() > inner.degenerate_ratio * spread)) {
        throw DegenerateCovariance(std::string(side) + " covariance of component " + std::to_string(g + 1) +
                                   " has collapsed to zero");
      }
    }
  };
  require_scale(est_y.sigmas, data.responses, "response");
  require_scale(est_x.sigmas, data.covariates, "covariate");

  for (Eigen::Index g = 0; g < G; ++g) {
    out.components[static_cast<std::size_t>(g)].cov_y = est_y.sigmas[static_cast<std::size_t>(g)];
    out.components[static_cast<std::size_t>(g)].cov_x = est_x.sigmas[static_cast<std::size_t>(g)];
  }
  if (state != nullptr) {
    state->inner_converged = est_y.converged && est_x.converged;
    state->response = std::move(est_y);
    state->covariate = std::move(est_x);
  }
  return out;
}

/// Aitken acceleration test on three consecutive log-likelihoods.
inline bool aitken_converged(double l_prev2, double l_prev, double l_curr, double eps) {
  const double step = l_curr - l_prev;
  const double previous_step = l_prev - l_prev2;
  if (step == 0.0 || previous_step == 0.0) return true;
  const double c = step / previous_step;
  if (c >= 1.0) return false;
  const double asymptote = l_prev + step / (1.0 - c);
  const double gap = asymptote - l_curr;
  return gap >= 0.0 && gap < eps;
}

inline Responsibilities hard_responsibilities(const Labels& labels, int groups) {
  Responsibilities out;
  out.tau = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), groups);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= groups) throw ValidationError("labels must lie in [0, G)");
    out.tau(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

/// Runs EM from hard initial responsibilities until the Aitken criterion
/// holds or max_iter is reached. Every failure is reported through
/// FitResult::failure; this function does not throw on numerical trouble.
inline FitResult fit(const Dataset& data, const FitConfig& config, const Labels& init_labels) {
  FitResult out;
  const auto fail = [&out](FailureKind kind, std::string message, int iteration) {
    out.failure = FitFailure{kind, std::move(message), iteration};
    out.converged = false;
    return out;
  };

  Responsibilities resp;
  try {
    data.validate();
    config.validate();
    if (static_cast<Eigen::Index>(init_labels.size()) != data.size())
      throw ValidationError("initial labels must have one entry per observation");
    resp = hard_responsibilities(init_labels, config.groups);
  } catch (const Error& e) {
    return fail(FailureKind::InvalidInput, e.what(), 0);
  }

  const double floor = config.min_weight_for(data.p(), data.d());
  const long m = count_params(config.structure_y, config.structure_x, config.groups, data.p(), data.d());
  MStepState state;
  int inner_misses = 0;
  bool have_params = false;

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd sizes = resp.tau.colwise().sum();
    if (sizes.minCoeff() < floor) {
      Eigen::Index smallest = 0;
      sizes.minCoeff(&smallest);
      return fail(FailureKind::DegenerateComponent,
                  "component " + std::to_string(smallest + 1) + " expected size " + std::to_string(sizes[smallest]) +
                      " is below the minimum " + std::to_string(floor),
                  iter);
    }
    try {
      out.params = m_step(data, resp, config.structure_y, config.structure_x, &state, config.inner);
      have_params = true;
    } catch (const DegenerateCovariance& e) {
      return fail(FailureKind::DegenerateCovariance, e.what(), iter);
    } catch (const RankDeficiency& e) {
      return fail(FailureKind::RankDeficient, e.what(), iter);
    } catch (const Error& e) {
      return fail(FailureKind::Numerical, e.what(), iter);
    }
    if (!state.inner_converged) ++inner_misses;

    EStepResult e;
    try {
      e = e_step(data, out.params);
    } catch (const Error& err) {
      return fail(FailureKind::Numerical, err.what(), iter);
    }
    resp = std::move(e.resp);
    out.tau = resp;
    out.loglik_trace.push_back(e.loglik);

    const auto k = out.loglik_trace.size();
    if (k >= 2) {
      const double now = out.loglik_trace[k - 1];
      const double before = out.loglik_trace[k - 2];
      // Changes at the rounding floor of the log-likelihood count as no change.
      if (std::abs(now - before) <= 1e-13 * std::max(1.0, std::abs(now))) {
        out.converged = true;
        break;
      }
    }
    if (k >= 3 && aitken_converged(out.loglik_trace[k - 3], out.loglik_trace[k - 2], out.loglik_trace[k - 1],
                                   config.aitken_eps)) {
      out.converged = true;
      break;
    }
  }

  if (have_params) {
    out.final_loglik = out.loglik_trace.back();
    out.n_params = m;
    out.bic = bic(out.final_loglik, m, static_cast<long>(data.size()));
    out.icl = icl(out.bic, out.tau);
    out.labels = map_labels(out.tau);
  }
  if (inner_misses > 0) {
    out.warnings.push_back("constrained covariance inner loop hit its iteration cap in " +
                           std::to_string(inner_misses) + " M-steps");
  }
  if (!out.params.indistinct_regressions().empty()) {
    out.warnings.push_back("two or more components share (coeffs, cov_y); the fitted mixture is not identifiable");
  }
  if (!out.converged) {
    out.failure = FitFailure{FailureKind::NonConvergence,
                             "no convergence after " + std::to_string(config.max_iter) + " iterations",
                             config.max_iter};
  }
  return out;
}

}  // namespace emcwm
