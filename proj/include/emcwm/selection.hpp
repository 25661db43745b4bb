#pragma once

// Model search over (response structure, covariate structure, G): k-means
// and random-partition pilots through an EEE-EEE fit for starting labels,
// then every requested pair fitted from those labels and ranked by BIC or ICL.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "emcwm/covariance.hpp"
#include "emcwm/criteria.hpp"
#include "emcwm/em.hpp"
#include "emcwm/errors.hpp"
#include "emcwm/model.hpp"
#include "emcwm/simulate.hpp"

namespace emcwm {

struct KMeansResult {
  Labels labels;
  std::vector<double> wcss_trace;  // within-cluster sum of squares after each iteration
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm from G distinct seeded points. An empty cluster takes
/// over the point farthest from its current center.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, int G, std::uint64_t seed, int max_iter = 100) {
  const auto n = points.rows();
  if (G < 1 || n < G) throw ValidationError("kmeans: need 1 <= G <= N");
  KMeansResult out;
  out.labels.assign(static_cast<std::size_t>(n), 0);
  if (G == 1) {
    const Eigen::RowVectorXd c = points.colwise().mean();
    out.wcss_trace.push_back((points.rowwise() - c).squaredNorm());
    out.converged = true;
    return out;
  }

  // Partial Fisher-Yates for distinct starting indices.
  RandomStream rng(seed, 0);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Eigen::MatrixXd centers(G, points.cols());
  for (int k = 0; k < G; ++k) {
    const auto pick = static_cast<std::size_t>(k) + rng.below(static_cast<std::uint64_t>(n - k));
    std::swap(idx[static_cast<std::size_t>(k)], idx[pick]);
    centers.row(k) = points.row(idx[static_cast<std::size_t>(k)]);
  }

  Labels previous;
  for (int iter = 1; iter <= max_iter; ++iter) {
    out.iterations = iter;
    Eigen::VectorXd cost(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points.row(i) - centers.row(0)).squaredNorm();
      for (int k = 1; k < G; ++k) {
        const double dist = (points.row(i) - centers.row(k)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = k;
        }
      }
      out.labels[static_cast<std::size_t>(i)] = best;
      cost[i] = best_d;
    }
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(G), 0);
    for (int l : out.labels) ++counts[static_cast<std::size_t>(l)];
    for (int k = 0; k < G; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) continue;
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(i)])] < 2) continue;
        if (far < 0 || cost[i] > cost[far]) far = i;
      }
      --counts[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(far)])];
      out.labels[static_cast<std::size_t>(far)] = k;
      counts[static_cast<std::size_t>(k)] = 1;
      cost[far] = 0.0;
    }
    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.row(out.labels[static_cast<std::size_t>(i)]) += points.row(i);
    for (int k = 0; k < G; ++k) centers.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
    double wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      wcss += (points.row(i) - centers.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
    out.wcss_trace.push_back(wcss);
    if (out.labels == previous) {
      out.converged = true;
      break;
    }
    previous = out.labels;
  }
  return out;
}

/// Uniform random partition repaired so every group holds at least
/// `min_size` members (taken round-robin from the currently largest group).
inline Labels random_partition(Eigen::Index n, int G, std::size_t min_size, std::uint64_t seed) {
  if (static_cast<std::size_t>(n) < min_size * static_cast<std::size_t>(G))
    throw ValidationError("random_partition: too few observations for the minimum group size");
  RandomStream rng(seed, 0);
  Labels labels(static_cast<std::size_t>(n));
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(G));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(G)));
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k].size() >= min_size) continue;
      auto donor = std::max_element(members.begin(), members.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
      const std::size_t moved = donor->back();
      donor->pop_back();
      members[k].push_back(moved);
      labels[moved] = static_cast<int>(k);
      changed = true;
    }
  }
  return labels;
}

struct PilotRun {
  int run = 0;
  bool from_kmeans = false;
  bool ok = false;
  double bic = std::numeric_limits<double>::quiet_NaN();
  std::string failure;
};

struct PilotSelection {
  int groups = 1;
  int chosen_run = -1;
  double bic = std::numeric_limits<double>::quiet_NaN();
  Labels labels;
  std::vector<PilotRun> runs;
};

namespace detail {

inline Eigen::MatrixXd joined_rows(const Dataset& data) {
  Eigen::MatrixXd out(data.size(), data.p() + data.d());
  out << data.covariates, data.responses;
  return out;
}

inline std::uint64_t pilot_seed(std::uint64_t seed, int G, int run) {
  return combine_seed(combine_seed(seed, 0x70696c6f74ULL + static_cast<std::uint64_t>(G)), static_cast<std::uint64_t>(run));
}

// Starting labels for pilot run `run` (run 0 is k-means, the rest random).
inline Labels pilot_start(const Dataset& data, int G, int run, std::uint64_t seed, double min_weight) {
  const auto s = pilot_seed(seed, G, run);
  if (run == 0) return kmeans(joined_rows(data), G, s).labels;
  const auto floor = static_cast<std::size_t>(std::max(2.0, std::ceil(min_weight)));
  return random_partition(data.size(), G, floor, s);
}

inline FitResult pilot_fit(const Dataset& data, int G, int run, std::uint64_t seed, const FitConfig& base) {
  FitConfig cfg = base;
  cfg.groups = G;
  cfg.structure_y = CovStructure::EEE;
  cfg.structure_x = CovStructure::EEE;
  cfg.seed = pilot_seed(seed, G, run);
  Labels start;
  try {
    start = pilot_start(data, G, run, seed, cfg.min_weight_for(data.p(), data.d()));
  } catch (const Error& e) {
    FitResult failed;
    failed.failure = FitFailure{FailureKind::Initialization, e.what(), 0};
    return failed;
  }
  return fit(data, cfg, start);
}

inline PilotSelection select_pilot(int G, const std::vector<FitResult>& fits) {
  PilotSelection out;
  out.groups = G;
  for (std::size_t r = 0; r < fits.size(); ++r) {
    const auto& f = fits[r];
    PilotRun run{static_cast<int>(r), r == 0, f.ok(), f.bic, f.failure ? f.failure->message : std::string{}};
    out.runs.push_back(run);
    if (f.ok() && (out.chosen_run < 0 || f.bic > out.bic)) {
      out.chosen_run = static_cast<int>(r);
      out.bic = f.bic;
      out.labels = f.labels;
    }
  }
  if (out.chosen_run < 0) throw InitializationError("all " + std::to_string(fits.size()) + " pilot runs failed for G = " + std::to_string(G));
  return out;
}

// Runs `count` independent jobs on up to `threads` workers. Each job writes
// only its own slot, so results do not depend on scheduling.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) job(i);
    });
  }
}

}  // namespace detail

/// Pilot protocol: `pilot_runs` EEE-EEE fits (one from k-means on the joined
/// (x, y) rows, the rest from random partitions); returns the MAP labels of
/// the highest-BIC successful pilot.
inline PilotSelection init_labels(const Dataset& data, int G, int pilot_runs, std::uint64_t seed,
                                  const FitConfig& base = {}, int threads = 1) {
  data.validate();
  if (pilot_runs < 1) throw ValidationError("init_labels: pilot_runs must be >= 1");
  if (G == 1) {
    PilotSelection out;
    out.groups = 1;
    out.labels.assign(static_cast<std::size_t>(data.size()), 0);
    return out;
  }
  const double floor = base.min_weight_for(data.p(), data.d());
  if (static_cast<double>(data.size()) < G * floor)
    throw InitializationError("init_labels: N is below G times the minimum component size");
  std::vector<FitResult> fits(static_cast<std::size_t>(pilot_runs));
  detail::parallel_for(fits.size(), threads, [&](std::size_t r) {
    fits[r] = detail::pilot_fit(data, G, static_cast<int>(r), seed, base);
  });
  return detail::select_pilot(G, fits);
}

enum class Criterion { BIC, ICL };

constexpr std::string_view to_string(Criterion c) { return c == Criterion::BIC ? "bic" : "icl"; }

struct SearchSpec {
  int g_min = 1;
  int g_max = 4;
  std::vector<CovStructure> structures_y{kAllStructures.begin(), kAllStructures.end()};
  std::vector<CovStructure> structures_x{kAllStructures.begin(), kAllStructures.end()};
  int pilot_runs = 10;
  Criterion criterion = Criterion::BIC;
  std::uint64_t seed = 0;
  FitConfig fit;  // structures, groups and seed are set per fit
  int threads = 1;

  void validate() const {
    if (g_min < 1 || g_max < g_min) throw ValidationError("search: need 1 <= g_min <= g_max");
    if (structures_y.empty() || structures_x.empty()) throw ValidationError("search: structure lists must be non-empty");
    if (pilot_runs < 1) throw ValidationError("search: pilot_runs must be >= 1");
    fit.validate();
  }
};

struct SearchRow {
  CovStructure structure_y;
  CovStructure structure_x;
  int groups;
  std::shared_ptr<const FitResult> result;

  bool ok() const { return result && result->ok(); }
  double criterion(Criterion c) const { return c == Criterion::BIC ? result->bic : result->icl; }
};

struct SearchResult {
  Criterion criterion = Criterion::BIC;
  std::vector<SearchRow> table;  // successful fits by criterion (best first), then failures
  std::optional<std::size_t> best;
  std::vector<PilotSelection> pilots;
  std::vector<std::string> pilot_errors;  // per G that could not be initialized

  const SearchRow* best_row() const { return best ? &table[*best] : nullptr; }
};

/// At G = 1 every structure collapses to its spherical, diagonal or general
/// single-group form.
constexpr CovStructure canonical_single_group(CovStructure s) {
  switch (traits(s).family) {
    case CovFamily::Spherical: return CovStructure::EII;
    case CovFamily::Diagonal: return CovStructure::EEI;
    case CovFamily::General: return CovStructure::EEE;
  }
  return s;
}

inline std::uint64_t fit_seed(std::uint64_t seed, CovStructure sy, CovStructure sx, int G) {
  const auto key = (static_cast<std::uint64_t>(sy) << 16) | (static_cast<std::uint64_t>(sx) << 8) |
                   static_cast<std::uint64_t>(G) << 24;
  return combine_seed(seed, key);
}

/// Ranked search. Ties on the criterion go to fewer parameters, then the
/// lexicographically smaller (structure_y, structure_x) labels, then smaller G.
inline SearchResult search(const Dataset& data, const SearchSpec& spec) {
  data.validate();
  spec.validate();

  struct Task {
    CovStructure sy;
    CovStructure sx;
    int G;
  };
  std::vector<Task> tasks;
  for (int G = spec.g_min; G <= spec.g_max; ++G) {
    std::vector<std::pair<CovStructure, CovStructure>> pairs;
    for (auto sy : spec.structures_y) {
      for (auto sx : spec.structures_x) {
        auto pair = G == 1 ? std::pair{canonical_single_group(sy), canonical_single_group(sx)} : std::pair{sy, sx};
        if (std::find(pairs.begin(), pairs.end(), pair) == pairs.end()) pairs.push_back(pair);
      }
    }
    for (auto [sy, sx] : pairs) tasks.push_back({sy, sx, G});
  }

  // Pilot fits for every G > 1, run as one batch.
  std::vector<std::pair<int, int>> pilot_jobs;
  for (int G = std::max(2, spec.g_min); G <= spec.g_max; ++G) {
    if (static_cast<double>(data.size()) < G * spec.fit.min_weight_for(data.p(), data.d())) continue;
    for (int r = 0; r < spec.pilot_runs; ++r) pilot_jobs.emplace_back(G, r);
  }
  std::vector<FitResult> pilot_fits(pilot_jobs.size());
  detail::parallel_for(pilot_jobs.size(), spec.threads, [&](std::size_t j) {
    pilot_fits[j] = detail::pilot_fit(data, pilot_jobs[j].first, pilot_jobs[j].second, spec.seed, spec.fit);
  });

  SearchResult out;
  out.criterion = spec.criterion;
  std::vector<std::optional<Labels>> start(static_cast<std::size_t>(spec.g_max + 1));
  std::vector<std::string> start_error(static_cast<std::size_t>(spec.g_max + 1));
  for (int G = spec.g_min; G <= spec.g_max; ++G) {
    if (G == 1) {
      start[1] = Labels(static_cast<std::size_t>(data.size()), 0);
      continue;
    }
    std::vector<FitResult> fits;
    for (std::size_t j = 0; j < pilot_jobs.size(); ++j) {
      if (pilot_jobs[j].first == G) fits.push_back(std::move(pilot_fits[j]));
    }
    try {
      if (fits.empty()) throw InitializationError("N is below G times the minimum component size for G = " + std::to_string(G));
      auto sel = detail::select_pilot(G, fits);
      start[static_cast<std::size_t>(G)] = sel.labels;
      out.pilots.push_back(std::move(sel));
    } catch (const InitializationError& e) {
      start_error[static_cast<std::size_t>(G)] = e.what();
      out.pilot_errors.emplace_back(e.what());
    }
  }

  std::vector<SearchRow> rows(tasks.size());
  detail::parallel_for(tasks.size(), spec.threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    auto result = std::make_shared<FitResult>();
    const auto& labels = start[static_cast<std::size_t>(task.G)];
    if (!labels) {
      result->failure = FitFailure{FailureKind::Initialization, start_error[static_cast<std::size_t>(task.G)], 0};
      result->n_params = count_params(task.sy, task.sx, task.G, data.p(), data.d());
    } else {
      FitConfig cfg = spec.fit;
      cfg.structure_y = task.sy;
      cfg.structure_x = task.sx;
      cfg.groups = task.G;
      cfg.seed = fit_seed(spec.seed, task.sy, task.sx, task.G);
      *result = fit(data, cfg, *labels);
    }
    rows[t] = SearchRow{task.sy, task.sx, task.G, std::move(result)};
  });

  const auto crit = spec.criterion;
  std::stable_sort(rows.begin(), rows.end(), [crit](const SearchRow& a, const SearchRow& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return false;  // failures keep task order
    const double ca = a.criterion(crit);
    const double cb = b.criterion(crit);
    if (ca != cb) return ca > cb;
    if (a.result->n_params != b.result->n_params) return a.result->n_params < b.result->n_params;
    if (a.structure_y != b.structure_y) return to_string(a.structure_y) < to_string(b.structure_y);
    if (a.structure_x != b.structure_x) return to_string(a.structure_x) < to_string(b.structure_x);
    return a.groups < b.groups;
  });
  out.table = std::move(rows);
  if (!out.table.empty() && out.table.front().ok()) out.best = 0;
  return out;
}

}  // namespace emcwm
