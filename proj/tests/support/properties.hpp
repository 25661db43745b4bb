#pragma once

// Randomized property sweeps. Each returns the worst observed deviation so
// callers can apply their own tolerance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "emcwm/covariance.hpp"
#include "emcwm/criteria.hpp"
#include "emcwm/em.hpp"
#include "emcwm/metrics.hpp"
#include "emcwm/selection.hpp"
#include "emcwm/simulate.hpp"
#include "oracles.hpp"

namespace props {

using emcwm::CovStructure;
using emcwm::RandomStream;

struct EmSweep {
  int fits = 0;
  int with_trace = 0;                                          // fits that produced at least two E-steps
  double worst_delta = std::numeric_limits<double>::infinity();  // smallest consecutive loglik change
  double worst_row_error = 0.0;                                  // largest |row sum - 1| over every E-step
  int icl_above_bic = 0;
  int trace_mismatches = 0;  // fit() trace differing from the step-by-step replay
};

/// Random (dataset, structure pair, G) fits. Each is replayed step by step
/// through m_step / e_step so every E-step can be inspected, and compared
/// with fit() itself.
inline EmSweep em_sweep(int count, std::uint64_t seed) {
  EmSweep out;
  for (int k = 0; k < count; ++k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    const auto G = 1 + static_cast<std::size_t>(rng.below(3));
    const auto p = 1 + static_cast<Eigen::Index>(rng.below(3));
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(3));
    const auto sy = emcwm::kAllStructures[rng.below(14)];
    const auto sx = emcwm::kAllStructures[rng.below(14)];
    const auto params = oracle::random_params(rng, G, p, d, 1.5 + 2.0 * rng.uniform());
    const auto data = emcwm::sample({params, 120 + static_cast<Eigen::Index>(rng.below(80)), rng.bits()});

    emcwm::FitConfig cfg;
    cfg.groups = static_cast<int>(G);
    cfg.structure_y = sy;
    cfg.structure_x = sx;
    cfg.max_iter = 300;
    emcwm::Labels start;
    try {
      start = G == 1 ? emcwm::Labels(static_cast<std::size_t>(data.size()), 0)
                     : emcwm::random_partition(data.size(), static_cast<int>(G), 8, rng.bits());
    } catch (const emcwm::Error&) {
      continue;
    }
    ++out.fits;
    const auto result = emcwm::fit(data, cfg, start);
    if (result.ok() && result.icl > result.bic) ++out.icl_above_bic;

    // Step-by-step replay.
    std::vector<double> trace;
    emcwm::MStepState state;
    auto resp = emcwm::hard_responsibilities(start, cfg.groups);
    const double floor = cfg.min_weight_for(p, d);
    for (int it = 0; it < result.iterations; ++it) {
      if (resp.tau.colwise().sum().minCoeff() < floor) break;
      emcwm::EStepResult e;
      try {
        const auto m = emcwm::m_step(data, resp, sy, sx, &state, cfg.inner);
        e = emcwm::e_step(data, m);
      } catch (const emcwm::Error&) {
        break;
      }
      const Eigen::VectorXd sums = e.resp.tau.rowwise().sum();
      out.worst_row_error = std::max(out.worst_row_error, (sums.array() - 1.0).abs().maxCoeff());
      trace.push_back(e.loglik);
      resp = std::move(e.resp);
    }
    if (trace != result.loglik_trace) ++out.trace_mismatches;
    if (trace.size() >= 2) ++out.with_trace;
    for (std::size_t i = 1; i < trace.size(); ++i) out.worst_delta = std::min(out.worst_delta, trace[i] - trace[i - 1]);
  }
  return out;
}

struct RoundTrip {
  double worst_reconstruction = 0.0;  // max elementwise |reconstruct(decompose(S)) - S|
  double worst_shape_product = 0.0;   // max |prod(shape) - 1|
  double worst_volume = 0.0;          // max relative |volume - det^(1/q)|
};

inline RoundTrip roundtrip_sweep(int count, std::uint64_t seed) {
  RoundTrip out;
  for (int k = 0; k < count; ++k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    const auto q = 1 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::MatrixXd s = oracle::random_spd(rng, q);
    const auto t = emcwm::decompose(s);
    out.worst_reconstruction = std::max(out.worst_reconstruction, (emcwm::reconstruct(t) - s).cwiseAbs().maxCoeff());
    out.worst_shape_product = std::max(out.worst_shape_product, std::abs(t.shape.prod() - 1.0));
    const double det_root = std::pow(s.determinant(), 1.0 / static_cast<double>(q));
    out.worst_volume = std::max(out.worst_volume, std::abs(t.volume - det_root) / det_root);
  }
  return out;
}

struct Dominance {
  int sets = 0;
  double worst_above_vvv = -std::numeric_limits<double>::infinity();  // max Q(S) - Q(VVV)
  double worst_below_eii = -std::numeric_limits<double>::infinity();  // max Q(EII) - Q(S)
};

inline Dominance dominance_sweep(int count, std::uint64_t seed) {
  Dominance out;
  for (int k = 0; k < count; ++k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    const auto G = 2 + static_cast<std::size_t>(rng.below(2));
    const auto q = 2 + static_cast<Eigen::Index>(rng.below(3));
    const auto stats = oracle::random_scatter_set(rng, G, q);
    const double top = emcwm::estimate_constrained(stats, CovStructure::VVV).objective;
    const double bottom = emcwm::estimate_constrained(stats, CovStructure::EII).objective;
    ++out.sets;
    for (auto s : emcwm::kAllStructures) {
      const double v = emcwm::estimate_constrained(stats, s).objective;
      out.worst_above_vvv = std::max(out.worst_above_vvv, v - top);
      out.worst_below_eii = std::max(out.worst_below_eii, bottom - v);
    }
  }
  return out;
}

inline double ari_oracle_sweep(int count, std::uint64_t seed) {
  double worst = 0.0;
  for (int k = 0; k < count; ++k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    const auto n = 2 + static_cast<std::size_t>(rng.below(29));
    const auto a = oracle::random_labels(rng, n, 1 + static_cast<int>(rng.below(5)));
    const auto b = oracle::random_labels(rng, n, 1 + static_cast<int>(rng.below(5)));
    worst = std::max(worst, std::abs(emcwm::ari(a, b) - oracle::pair_count_ari(a, b)));
  }
  return worst;
}

// Expands a confusion matrix into paired label vectors.
inline std::pair<std::vector<int>, std::vector<int>> expand(const std::vector<std::vector<int>>& counts) {
  std::pair<std::vector<int>, std::vector<int>> out;
  for (std::size_t r = 0; r < counts.size(); ++r) {
    for (std::size_t c = 0; c < counts[r].size(); ++c) {
      for (int i = 0; i < counts[r][c]; ++i) {
        out.first.push_back(static_cast<int>(r));
        out.second.push_back(static_cast<int>(c));
      }
    }
  }
  return out;
}

inline const std::vector<std::vector<int>> kIrisConfusion{{50, 0, 0}, {0, 45, 5}, {0, 0, 50}};
inline const std::vector<std::vector<int>> kCrabsConfusion{{39, 11, 0, 0}, {0, 50, 0, 0}, {0, 0, 50, 0}, {0, 0, 4, 46}};

}  // namespace props
