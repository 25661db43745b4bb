#pragma once

// Eigen-decomposed covariance structures: Sigma_g = lambda_g Gamma_g Delta_g Gamma_g'
// with |Delta_g| = 1, the fourteen equal/variable constraint patterns, their
// free-parameter counts, and the constrained weighted ML estimators used by
// the M-step.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emcwm/errors.hpp"

namespace emcwm {

enum class CovStructure : std::uint8_t {
  EII, VII, EEI, VEI, EVI, VVI, EEE, VEE, EVE, EEV, VVE, VEV, EVV, VVV
};

inline constexpr std::array<CovStructure, 14> kAllStructures{
    CovStructure::EII, CovStructure::VII, CovStructure::EEI, CovStructure::VEI,
    CovStructure::EVI, CovStructure::VVI, CovStructure::EEE, CovStructure::VEE,
    CovStructure::EVE, CovStructure::EEV, CovStructure::VVE, CovStructure::VEV,
    CovStructure::EVV, CovStructure::VVV};

constexpr std::string_view to_string(CovStructure s) {
  constexpr std::array<std::string_view, 14> names{
      "EII", "VII", "EEI", "VEI", "EVI", "VVI", "EEE",
      "VEE", "EVE", "EEV", "VVE", "VEV", "EVV", "VVV"};
  return names[static_cast<std::size_t>(s)];
}

constexpr std::optional<CovStructure> try_parse_structure(std::string_view text) {
  for (auto s : kAllStructures) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

inline CovStructure parse_structure(std::string_view text) {
  if (auto s = try_parse_structure(text)) return *s;
  throw ValidationError("unknown covariance structure '" + std::string(text) + "'");
}

enum class CovFamily { Spherical, Diagonal, General };

/// Which of volume / shape / orientation are shared across components.
/// For spherical structures shape and orientation are fixed (identity) and
/// reported as shared; diagonal structures have a fixed axis-aligned
/// orientation.
struct StructureTraits {
  CovFamily family;
  bool equal_volume;
  bool equal_shape;
  bool equal_orientation;
};

constexpr StructureTraits traits(CovStructure s) {
  const auto name = to_string(s);
  const bool ev = name[0] == 'E';
  if (name[1] == 'I') return {CovFamily::Spherical, ev, true, true};
  if (name[2] == 'I') return {CovFamily::Diagonal, ev, name[1] == 'E', true};
  return {CovFamily::General, ev, name[1] == 'E', name[2] == 'E'};
}

/// Free covariance parameters of a structure for G components in dimension q.
constexpr long free_params(CovStructure s, long q, long G) {
  const long full = q * (q + 1) / 2;
  switch (s) {
    case CovStructure::EII: return 1;
    case CovStructure::VII: return G;
    case CovStructure::EEI: return q;
    case CovStructure::VEI: return G + q - 1;
    case CovStructure::EVI: return G * q - (G - 1);
    case CovStructure::VVI: return G * q;
    case CovStructure::EEE: return full;
    case CovStructure::VEE: return full + (G - 1);
    case CovStructure::EVE: return full + (G - 1) * (q - 1);
    case CovStructure::EEV: return G * full - (G - 1) * q;
    case CovStructure::VVE: return full + (G - 1) * q;
    case CovStructure::VEV: return G * full - (G - 1) * (q - 1);
    case CovStructure::EVV: return G * full - (G - 1);
    case CovStructure::VVV: return G * full;
  }
  return 0;
}

/// Volume / shape / orientation of one SPD matrix.
struct EigenTriple {
  double volume = 1.0;
  Eigen::VectorXd shape;        // non-increasing, product 1
  Eigen::MatrixXd orientation;  // columns are eigenvectors matching `shape`

  Eigen::Index dim() const { return shape.size(); }

  void validate() const {
    const auto q = shape.size();
    if (q < 1 || orientation.rows() != q || orientation.cols() != q)
      throw ValidationError("eigen triple: inconsistent dimensions");
    if (!(volume > 0.0) || !std::isfinite(volume))
      throw ValidationError("eigen triple: volume must be positive");
    double log_prod = 0.0;
    for (Eigen::Index i = 0; i < q; ++i) {
      if (!(shape[i] > 0.0)) throw ValidationError("eigen triple: shape entries must be positive");
      if (i > 0 && shape[i] > shape[i - 1])
        throw ValidationError("eigen triple: shape must be sorted non-increasing");
      log_prod += std::log(shape[i]);
    }
    if (std::abs(std::expm1(log_prod)) > 1e-10)
      throw ValidationError("eigen triple: shape product must equal 1");
    const Eigen::MatrixXd gram = orientation.transpose() * orientation;
    if ((gram - Eigen::MatrixXd::Identity(q, q)).cwiseAbs().maxCoeff() > 1e-10)
      throw ValidationError("eigen triple: orientation must be orthogonal");
  }
};

namespace detail {

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

// Geometric mean of a positive vector; zero or negative entries give 0.
inline double geometric_mean(const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) return 0.0;
    acc += std::log(v[i]);
  }
  return std::exp(acc / static_cast<double>(v.size()));
}

// Eigenvalues in non-increasing order; each eigenvector's largest-magnitude
// entry is made positive.
struct SortedEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

inline SortedEigen sorted_eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized(m));
  if (solver.info() != Eigen::Success) throw DecompositionError("eigen solver failed");
  const auto q = m.rows();
  // Descending order; tied eigenvalues keep the solver's column order.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return solver.eigenvalues()[a] > solver.eigenvalues()[b]; });
  SortedEigen out{Eigen::VectorXd(q), Eigen::MatrixXd(q, q)};
  for (Eigen::Index j = 0; j < q; ++j) {
    const auto k = order[static_cast<std::size_t>(j)];
    out.values[j] = solver.eigenvalues()[k];
    Eigen::VectorXd col = solver.eigenvectors().col(k);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < q; ++i) {
      if (std::abs(col[i]) > std::abs(col[arg])) arg = i;
    }
    if (col[arg] < 0.0) col = -col;
    out.vectors.col(j) = col;
  }
  return out;
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace detail

/// Volume/shape/orientation of a symmetric positive-definite matrix.
inline EigenTriple decompose(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() < 1 || sigma.rows() != sigma.cols())
    throw DimensionError("decompose: matrix must be square and non-empty");
  if (!sigma.allFinite()) throw DecompositionError("decompose: non-finite entries");
  if (!detail::is_symmetric(sigma, 1e-10)) throw DecompositionError("decompose: matrix is not symmetric");
  auto eig = detail::sorted_eigen(sigma);
  const auto q = sigma.rows();
  for (Eigen::Index j = 0; j < q; ++j) {
    if (!(eig.values[j] > 0.0)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "decompose: matrix is not positive definite (eigenvalue " << j << " = " << eig.values[j]
          << ")";
      throw DecompositionError(msg.str());
    }
  }
  EigenTriple out;
  out.volume = detail::geometric_mean(eig.values);
  out.shape = eig.values / out.volume;
  out.orientation = std::move(eig.vectors);
  return out;
}

inline Eigen::MatrixXd reconstruct(const EigenTriple& triple) {
  triple.validate();
  const Eigen::MatrixXd& o = triple.orientation;
  return detail::symmetrized(triple.volume * o * triple.shape.asDiagonal() * o.transpose());
}

/// Unnormalized weighted scatter matrices W_g with their total weights n_g.
struct WeightedScatter {
  std::vector<Eigen::MatrixXd> scatters;
  std::vector<double> weights;

  std::size_t groups() const { return scatters.size(); }
  Eigen::Index dim() const { return scatters.empty() ? 0 : scatters.front().rows(); }

  void validate() const {
    if (scatters.empty() || scatters.size() != weights.size())
      throw ValidationError("weighted scatter: need one weight per scatter matrix");
    const auto q = dim();
    for (std::size_t g = 0; g < scatters.size(); ++g) {
      if (scatters[g].rows() != q || scatters[g].cols() != q || q < 1)
        throw DimensionError("weighted scatter: inconsistent matrix dimensions");
      if (!(weights[g] > 0.0) || !std::isfinite(weights[g]))
        throw ValidationError("weighted scatter: weights must be positive");
      if (!scatters[g].allFinite() || !detail::is_symmetric(scatters[g], 1e-10))
        throw ValidationError("weighted scatter: scatter matrices must be finite and symmetric");
    }
  }
};

struct InnerLoopOptions {
  int max_iter = 200;
  double rel_tol = 1e-8;
  double degenerate_ratio = 1e-12;
};

/// Result of a constrained covariance M-step.
struct ConstrainedEstimate {
  std::vector<Eigen::MatrixXd> sigmas;
  /// Shared eigenvector matrix for EVE / VVE (used to warm-start the next call);
  /// empty for the other structures.
  Eigen::MatrixXd shared_orientation;
  double objective = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = true;
};

/// sum_g [ -n_g log|Sigma_g| - tr(Sigma_g^{-1} W_g) ]
inline double constrained_objective(const WeightedScatter& stats, std::span<const Eigen::MatrixXd> sigmas) {
  if (sigmas.size() != stats.groups()) throw DimensionError("objective: group count mismatch");
  double total = 0.0;
  for (std::size_t g = 0; g < sigmas.size(); ++g) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigmas[g]);
    if (llt.info() != Eigen::Success) throw DegenerateCovariance("objective: covariance is not positive definite");
    const Eigen::MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const double trace = llt.solve(stats.scatters[g]).trace();
    total += -stats.weights[g] * log_det - trace;
  }
  return total;
}

namespace detail {

inline void require_nondegenerate(const Eigen::MatrixXd& sigma, CovStructure s, std::size_t g, double ratio) {
  if (!sigma.allFinite()) {
    throw DegenerateCovariance(std::string(to_string(s)) + " estimate of component " + std::to_string(g + 1) +
                               " has non-finite entries");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma, Eigen::EigenvaluesOnly);
  const double lo = solver.eigenvalues().minCoeff();
  const double hi = solver.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > ratio * hi)) {
    std::ostringstream msg;
    msg.precision(6);
    msg << to_string(s) << " estimate of component " << g + 1 << " is degenerate (eigenvalues " << lo << " .. " << hi
        << ")";
    throw DegenerateCovariance(msg.str());
  }
}

inline double volume_of(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw DegenerateCovariance("warm start covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  return std::exp(2.0 * l.diagonal().array().log().sum() / static_cast<double>(sigma.rows()));
}

// Tracks the relative objective change of an alternating inner loop.
class InnerLoop {
 public:
  explicit InnerLoop(const InnerLoopOptions& opts) : opts_(opts) {}

  // Returns true when the loop should stop.
  bool step(double objective) {
    ++iterations_;
    const bool done = std::isfinite(previous_) &&
                      std::abs(objective - previous_) <= opts_.rel_tol * std::max(1.0, std::abs(previous_));
    previous_ = objective;
    if (done) converged_ = true;
    return done || iterations_ >= opts_.max_iter;
  }

  int iterations() const { return iterations_; }
  bool converged() const { return converged_; }

 private:
  InnerLoopOptions opts_;
  double previous_ = std::numeric_limits<double>::quiet_NaN();
  int iterations_ = 0;
  bool converged_ = false;
};

inline std::vector<double> initial_volumes(const WeightedScatter& stats, const ConstrainedEstimate* warm) {
  const auto G = stats.groups();
  const double q = static_cast<double>(stats.dim());
  std::vector<double> lam(G);
  for (std::size_t g = 0; g < G; ++g) {
    if (warm != nullptr && warm->sigmas.size() == G) {
      lam[g] = volume_of(warm->sigmas[g]);
    } else {
      lam[g] = stats.scatters[g].trace() / (q * stats.weights[g]);
    }
  }
  return lam;
}

// One majorization-minimization step for a shared orientation, given the
// per-component diagonal precisions (inverse of lambda_g * Delta_g).
inline Eigen::MatrixXd orientation_mm_step(const WeightedScatter& stats, const std::vector<double>& top_eigenvalues,
                                           const Eigen::MatrixXd& orientation,
                                           const std::vector<Eigen::VectorXd>& precisions) {
  const auto q = stats.dim();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t g = 0; g < stats.groups(); ++g) {
    const Eigen::MatrixXd shifted = top_eigenvalues[g] * Eigen::MatrixXd::Identity(q, q) - stats.scatters[g];
    f += shifted * orientation * precisions[g].asDiagonal();
  }
  if (f.norm() <= std::numeric_limits<double>::min()) return orientation;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// The companion step that majorizes through the largest precision of each
// component instead of the largest scatter eigenvalue.
inline Eigen::MatrixXd orientation_mm_step_dual(const WeightedScatter& stats, const Eigen::MatrixXd& orientation,
                                                const std::vector<Eigen::VectorXd>& precisions) {
  const auto q = stats.dim();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t g = 0; g < stats.groups(); ++g) {
    const Eigen::VectorXd shifted = (precisions[g].maxCoeff() - precisions[g].array()).matrix();
    f += shifted.asDiagonal() * orientation.transpose() * stats.scatters[g];
  }
  if (f.norm() <= std::numeric_limits<double>::min()) return orientation;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixV() * svd.matrixU().transpose();
}

inline Eigen::MatrixXd rotate(const Eigen::MatrixXd& orientation, const Eigen::VectorXd& diag) {
  return symmetrized(orientation * diag.asDiagonal() * orientation.transpose());
}

}  // namespace detail

/// Constrained weighted ML covariance estimates maximizing
/// sum_g [ -n_g log|Sigma_g| - tr(Sigma_g^{-1} W_g) ] over the structure's
/// feasible set. Closed forms where they exist; alternating conditional
/// maximization (VEI, VEE, VEV) or MM over the shared orientation (EVE, VVE)
/// otherwise. When `warm` holds a previous estimate of the same structure the
/// iterative schemes start from it, so the objective can never fall below the
/// warm start's value.
inline ConstrainedEstimate estimate_constrained(const WeightedScatter& stats, CovStructure structure,
                                                const ConstrainedEstimate* warm = nullptr,
                                                const InnerLoopOptions& opts = {}) {
  stats.validate();
  const auto G = stats.groups();
  const auto q = stats.dim();
  const double qd = static_cast<double>(q);
  double n_total = 0.0;
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t g = 0; g < G; ++g) {
    n_total += stats.weights[g];
    pooled += stats.scatters[g];
  }
  const auto& W = stats.scatters;
  const auto& n = stats.weights;

  ConstrainedEstimate out;
  out.sigmas.resize(G);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(q, q);

  switch (structure) {
    case CovStructure::EII: {
      const double lam = pooled.trace() / (qd * n_total);
      for (auto& s : out.sigmas) s = lam * eye;
      break;
    }
    case CovStructure::VII: {
      for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = W[g].trace() / (qd * n[g]) * eye;
      break;
    }
    case CovStructure::EEI: {
      const Eigen::MatrixXd s = (pooled.diagonal() / n_total).asDiagonal();
      for (auto& sg : out.sigmas) sg = s;
      break;
    }
    case CovStructure::VVI: {
      for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = (W[g].diagonal() / n[g]).asDiagonal();
      break;
    }
    case CovStructure::EVI: {
      double lam = 0.0;
      std::vector<Eigen::VectorXd> shapes(G);
      for (std::size_t g = 0; g < G; ++g) {
        const Eigen::VectorXd d = W[g].diagonal();
        const double gm = detail::geometric_mean(d);
        if (!(gm > 0.0)) throw DegenerateCovariance("EVI: zero diagonal scatter in component " + std::to_string(g + 1));
        shapes[g] = d / gm;
        lam += gm;
      }
      lam /= n_total;
      for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = (lam * shapes[g]).asDiagonal();
      break;
    }
    case CovStructure::EEE: {
      const Eigen::MatrixXd s = detail::symmetrized(pooled / n_total);
      for (auto& sg : out.sigmas) sg = s;
      break;
    }
    case CovStructure::VVV: {
      for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = detail::symmetrized(W[g] / n[g]);
      break;
    }
    case CovStructure::EEV: {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(q);
      std::vector<Eigen::MatrixXd> vecs(G);
      for (std::size_t g = 0; g < G; ++g) {
        auto eig = detail::sorted_eigen(W[g]);
        acc += eig.values.cwiseMax(0.0);
        vecs[g] = std::move(eig.vectors);
      }
      const double gm = detail::geometric_mean(acc);
      if (!(gm > 0.0)) throw DegenerateCovariance("EEV: pooled eigenvalues are not all positive");
      const Eigen::VectorXd lam_shape = acc / n_total;
      for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = detail::rotate(vecs[g], lam_shape);
      break;
    }
    case CovStructure::EVV: {
      double lam = 0.0;
      std::vector<Eigen::MatrixXd> shapes(G);
      for (std::size_t g = 0; g < G; ++g) {
        const double v = [&] {
          Eigen::LLT<Eigen::MatrixXd> llt(W[g]);
          if (llt.info() != Eigen::Success) return 0.0;
          const Eigen::MatrixXd l = llt.matrixL();
          return std::exp(2.0 * l.diagonal().array().log().sum() / qd);
        }();
        if (!(v > 0.0)) throw DegenerateCovariance("EVV: singular scatter in component " + std::to_string(g + 1));
        shapes[g] = W[g] / v;
        lam += v;
      }
      lam /= n_total;
      for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = detail::symmetrized(lam * shapes[g]);
      break;
    }
    case CovStructure::VEI: {
      auto lam = detail::initial_volumes(stats, warm);
      Eigen::VectorXd shape(q);
      detail::InnerLoop loop(opts);
      do {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(q);
        for (std::size_t g = 0; g < G; ++g) a += W[g].diagonal() / lam[g];
        const double gm = detail::geometric_mean(a);
        if (!(gm > 0.0)) throw DegenerateCovariance("VEI: pooled diagonal scatter has a zero entry");
        shape = a / gm;
        for (std::size_t g = 0; g < G; ++g) {
          lam[g] = W[g].diagonal().cwiseQuotient(shape).sum() / (qd * n[g]);
          if (!(lam[g] > 0.0)) throw DegenerateCovariance("VEI: zero volume in component " + std::to_string(g + 1));
          out.sigmas[g] = (lam[g] * shape).asDiagonal();
        }
      } while (!loop.step(constrained_objective(stats, out.sigmas)));
      out.iterations = loop.iterations();
      out.converged = loop.converged();
      break;
    }
    case CovStructure::VEE: {
      auto lam = detail::initial_volumes(stats, warm);
      detail::InnerLoop loop(opts);
      do {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q, q);
        for (std::size_t g = 0; g < G; ++g) a += W[g] / lam[g];
        Eigen::LLT<Eigen::MatrixXd> llt(detail::symmetrized(a));
        if (llt.info() != Eigen::Success) throw DegenerateCovariance("VEE: pooled scatter is singular");
        const Eigen::MatrixXd l = llt.matrixL();
        const double scale = std::exp(2.0 * l.diagonal().array().log().sum() / qd);
        const Eigen::MatrixXd shape = detail::symmetrized(a / scale);
        const Eigen::LLT<Eigen::MatrixXd> shape_llt(shape);
        for (std::size_t g = 0; g < G; ++g) {
          lam[g] = shape_llt.solve(W[g]).trace() / (qd * n[g]);
          if (!(lam[g] > 0.0)) throw DegenerateCovariance("VEE: zero volume in component " + std::to_string(g + 1));
          out.sigmas[g] = lam[g] * shape;
        }
      } while (!loop.step(constrained_objective(stats, out.sigmas)));
      out.iterations = loop.iterations();
      out.converged = loop.converged();
      break;
    }
    case CovStructure::VEV: {
      auto lam = detail::initial_volumes(stats, warm);
      std::vector<detail::SortedEigen> eig(G);
      for (std::size_t g = 0; g < G; ++g) {
        eig[g] = detail::sorted_eigen(W[g]);
        eig[g].values = eig[g].values.cwiseMax(0.0);
      }
      Eigen::VectorXd shape(q);
      detail::InnerLoop loop(opts);
      do {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(q);
        for (std::size_t g = 0; g < G; ++g) a += eig[g].values / lam[g];
        const double gm = detail::geometric_mean(a);
        if (!(gm > 0.0)) throw DegenerateCovariance("VEV: pooled eigenvalues are not all positive");
        shape = a / gm;
        for (std::size_t g = 0; g < G; ++g) {
          lam[g] = eig[g].values.cwiseQuotient(shape).sum() / (qd * n[g]);
          if (!(lam[g] > 0.0)) throw DegenerateCovariance("VEV: zero volume in component " + std::to_string(g + 1));
          out.sigmas[g] = detail::rotate(eig[g].vectors, lam[g] * shape);
        }
      } while (!loop.step(constrained_objective(stats, out.sigmas)));
      out.iterations = loop.iterations();
      out.converged = loop.converged();
      break;
    }
    case CovStructure::EVE:
    case CovStructure::VVE: {
      const bool equal_volume = structure == CovStructure::EVE;
      std::vector<double> top(G);
      for (std::size_t g = 0; g < G; ++g) top[g] = detail::sorted_eigen(W[g]).values[0];

      Eigen::MatrixXd orientation;
      std::vector<Eigen::VectorXd> diag(G);  // lambda_g * Delta_g in the rotated frame
      bool have_diag = false;
      if (warm != nullptr && warm->sigmas.size() == G && warm->shared_orientation.rows() == q) {
        orientation = warm->shared_orientation;
        for (std::size_t g = 0; g < G; ++g) {
          diag[g] = (orientation.transpose() * warm->sigmas[g] * orientation).diagonal();
        }
        have_diag = (std::all_of(diag.begin(), diag.end(), [](const Eigen::VectorXd& d) { return (d.array() > 0.0).all(); }));
      }
      if (orientation.size() == 0) orientation = detail::sorted_eigen(pooled).vectors;

      auto conditional_update = [&] {
        if (equal_volume) {
          double lam = 0.0;
          std::vector<Eigen::VectorXd> b(G);
          for (std::size_t g = 0; g < G; ++g) {
            b[g] = (orientation.transpose() * W[g] * orientation).diagonal();
            const double gm = detail::geometric_mean(b[g]);
            if (!(gm > 0.0)) throw DegenerateCovariance("EVE: rotated scatter has a zero entry in component " + std::to_string(g + 1));
            lam += gm;
            b[g] /= gm;
          }
          lam /= n_total;
          for (std::size_t g = 0; g < G; ++g) diag[g] = lam * b[g];
        } else {
          for (std::size_t g = 0; g < G; ++g) {
            diag[g] = (orientation.transpose() * W[g] * orientation).diagonal() / n[g];
            if (!(diag[g].array() > 0.0).all())
              throw DegenerateCovariance("VVE: rotated scatter has a zero entry in component " + std::to_string(g + 1));
          }
        }
        for (std::size_t g = 0; g < G; ++g) out.sigmas[g] = detail::rotate(orientation, diag[g]);
      };

      if (!have_diag) conditional_update();
      detail::InnerLoop loop(opts);
      do {
        std::vector<Eigen::VectorXd> precisions(G);
        for (std::size_t g = 0; g < G; ++g) precisions[g] = diag[g].cwiseInverse();
        orientation = detail::orientation_mm_step(stats, top, orientation, precisions);
        orientation = detail::orientation_mm_step_dual(stats, orientation, precisions);
        conditional_update();
      } while (!loop.step(constrained_objective(stats, out.sigmas)));
      out.iterations = loop.iterations();
      out.converged = loop.converged();
      out.shared_orientation = orientation;
      break;
    }
  }

  for (std::size_t g = 0; g < G; ++g) detail::require_nondegenerate(out.sigmas[g], structure, g, opts.degenerate_ratio);
  out.objective = constrained_objective(stats, out.sigmas);
  return out;
}

}  // namespace emcwm
