#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "emcwm/covariance.hpp"
#include "emcwm/errors.hpp"

namespace emcwm {

using Labels = std::vector<int>;

/// Paired covariates (N x p) and responses (N x d), with optional ground truth.
struct Dataset {
  Eigen::MatrixXd covariates;
  Eigen::MatrixXd responses;
  std::optional<Labels> labels;
  std::vector<std::string> label_names;  // label_names[k] names class id k
  std::vector<std::string> covariate_names;
  std::vector<std::string> response_names;

  Eigen::Index size() const { return covariates.rows(); }
  Eigen::Index p() const { return covariates.cols(); }
  Eigen::Index d() const { return responses.cols(); }

  void validate() const {
    if (size() < 1 || p() < 1 || d() < 1) throw ValidationError("dataset: need N >= 1, p >= 1, d >= 1");
    if (responses.rows() != covariates.rows()) throw DimensionError("dataset: covariate and response row counts differ");
    if (!covariates.allFinite() || !responses.allFinite()) throw ValidationError("dataset: non-finite entries");
    if (labels && static_cast<Eigen::Index>(labels->size()) != size())
      throw ValidationError("dataset: label count differs from row count");
  }
};

struct ComponentParams {
  double weight = 1.0;
  Eigen::VectorXd mean_x;
  Eigen::MatrixXd cov_x;
  Eigen::MatrixXd coeffs;  // (1 + p) x d, first row holds the intercepts
  Eigen::MatrixXd cov_y;
};

struct MixtureParams {
  std::vector<ComponentParams> components;
  CovStructure structure_y = CovStructure::VVV;
  CovStructure structure_x = CovStructure::VVV;

  std::size_t groups() const { return components.size(); }
  Eigen::Index p() const { return components.empty() ? 0 : components.front().mean_x.size(); }
  Eigen::Index d() const { return components.empty() ? 0 : components.front().cov_y.rows(); }

  void validate() const {
    if (components.empty()) throw ValidationError("mixture: need at least one component");
    const auto pp = p();
    const auto dd = d();
    double total = 0.0;
    for (const auto& c : components) {
      if (c.mean_x.size() != pp || c.cov_x.rows() != pp || c.cov_x.cols() != pp || c.coeffs.rows() != pp + 1 ||
          c.coeffs.cols() != dd || c.cov_y.rows() != dd || c.cov_y.cols() != dd)
        throw DimensionError("mixture: inconsistent component dimensions");
      if (!(c.weight > 0.0) || c.weight > 1.0) throw ValidationError("mixture: weights must lie in (0, 1]");
      for (const auto* cov : {&c.cov_x, &c.cov_y}) {
        if (!detail::is_symmetric(*cov, 1e-10)) throw ValidationError("mixture: covariance not symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(*cov);
        if (llt.info() != Eigen::Success) throw ValidationError("mixture: covariance not positive definite");
      }
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("mixture: weights must sum to 1");
  }

  /// Pairs of components whose (coeffs, cov_y) coincide within `tol`, which
  /// breaks the identifiability condition of the model class.
  std::vector<std::pair<std::size_t, std::size_t>> indistinct_regressions(double tol = 1e-8) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t g = 0; g < components.size(); ++g) {
      for (std::size_t h = g + 1; h < components.size(); ++h) {
        const auto& a = components[g];
        const auto& b = components[h];
        if ((a.coeffs - b.coeffs).cwiseAbs().maxCoeff() <= tol && (a.cov_y - b.cov_y).cwiseAbs().maxCoeff() <= tol)
          out.emplace_back(g, h);
      }
    }
    return out;
  }
};

/// N x G posterior membership probabilities.
struct Responsibilities {
  Eigen::MatrixXd tau;

  void validate(double tol = 1e-12) const {
    if (tau.rows() < 1 || tau.cols() < 1) throw ValidationError("responsibilities: empty matrix");
    if (!tau.allFinite() || tau.minCoeff() < 0.0 || tau.maxCoeff() > 1.0)
      throw ValidationError("responsibilities: entries must lie in [0, 1]");
    const Eigen::VectorXd sums = tau.rowwise().sum();
    if ((sums.array() - 1.0).abs().maxCoeff() > tol) throw ValidationError("responsibilities: rows must sum to 1");
  }
};

/// coeffs' * (1, x)
inline Eigen::VectorXd regression_mean(const Eigen::MatrixXd& coeffs, const Eigen::VectorXd& x) {
  if (coeffs.rows() != x.size() + 1) throw DimensionError("regression_mean: coefficient rows must equal 1 + p");
  return coeffs.row(0).transpose() + coeffs.bottomRows(x.size()).transpose() * x;
}

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

inline Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || cov.rows() != cov.cols())
    throw DecompositionError("covariance matrix is not positive definite");
  return llt;
}

// Gaussian log-density of each row of `residuals` (already centered).
inline Eigen::VectorXd centered_logpdf_rows(const Eigen::MatrixXd& residuals, const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double q = static_cast<double>(residuals.cols());
  const Eigen::MatrixXd z = llt.matrixL().solve(residuals.transpose());
  return (-0.5 * (q * kLog2Pi + log_det + z.colwise().squaredNorm().array())).matrix().transpose();
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

inline void check_shapes(const Dataset& data, const MixtureParams& params) {
  if (params.components.empty()) throw DimensionError("mixture has no components");
  if (params.p() != data.p() || params.d() != data.d()) throw DimensionError("dataset and parameter dimensions differ");
}

}  // namespace detail

/// Multivariate normal log-density via a Cholesky factor.
inline double gaussian_logpdf(const Eigen::VectorXd& v, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  if (v.size() != mean.size() || cov.rows() != v.size() || cov.cols() != v.size())
    throw DimensionError("gaussian_logpdf: shape mismatch");
  const auto llt = detail::factorize(cov);
  const Eigen::MatrixXd r = (v - mean).transpose();
  return detail::centered_logpdf_rows(r, llt)[0];
}

/// Entry (i, g) = log pi_g + log phi_d(y_i | coeffs_g' x_i*, cov_y_g) + log phi_p(x_i | mean_x_g, cov_x_g).
inline Eigen::MatrixXd joint_log_components(const Dataset& data, const MixtureParams& params) {
  detail::check_shapes(data, params);
  const auto n = data.size();
  const auto G = static_cast<Eigen::Index>(params.groups());
  const Eigen::MatrixXd design = detail::with_intercept(data.covariates);
  Eigen::MatrixXd out(n, G);
  for (Eigen::Index g = 0; g < G; ++g) {
    const auto& c = params.components[static_cast<std::size_t>(g)];
    const Eigen::MatrixXd rx = data.covariates.rowwise() - c.mean_x.transpose();
    const Eigen::MatrixXd ry = data.responses - design * c.coeffs;
    out.col(g) = detail::centered_logpdf_rows(ry, detail::factorize(c.cov_y)) +
                 detail::centered_logpdf_rows(rx, detail::factorize(c.cov_x));
    out.col(g).array() += std::log(c.weight);
  }
  return out;
}

/// Row-wise log(sum(exp(row))) with max-shift stabilization.
inline Eigen::VectorXd logsumexp_rows(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    if (!std::isfinite(top)) {
      out[i] = top;
      continue;
    }
    out[i] = top + std::log((m.row(i).array() - top).exp().sum());
  }
  return out;
}

/// Incomplete-data log-likelihood.
inline double loglik(const Dataset& data, const MixtureParams& params) {
  return logsumexp_rows(joint_log_components(data, params)).sum();
}

/// argmax_g tau_ig with ties going to the lowest index.
inline Labels map_labels(const Responsibilities& resp) {
  Labels out(static_cast<std::size_t>(resp.tau.rows()));
  for (Eigen::Index i = 0; i < resp.tau.rows(); ++i) {
    int best = 0;
    for (Eigen::Index g = 1; g < resp.tau.cols(); ++g) {
      if (resp.tau(i, g) > resp.tau(i, best)) best = static_cast<int>(g);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace emcwm
