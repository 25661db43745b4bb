#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "emcwm/errors.hpp"

namespace emcwm {

/// Contingency table of true classes (rows) against estimated clusters (cols).
template <class RowLabel, class ColLabel = RowLabel>
struct CrossTab {
  std::vector<RowLabel> rows;
  std::vector<ColLabel> cols;
  std::vector<std::vector<std::int64_t>> counts;

  std::int64_t total() const {
    std::int64_t n = 0;
    for (const auto& r : counts) n = std::accumulate(r.begin(), r.end(), n);
    return n;
  }

  std::vector<std::int64_t> row_sums() const {
    std::vector<std::int64_t> out;
    for (const auto& r : counts) out.push_back(std::accumulate(r.begin(), r.end(), std::int64_t{0}));
    return out;
  }

  std::vector<std::int64_t> col_sums() const {
    std::vector<std::int64_t> out(cols.size(), 0);
    for (const auto& r : counts)
      for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
    return out;
  }
};

/// Rows and columns are ordered by the label type's ordering.
template <class A, class B>
CrossTab<A, B> cross_tab(std::span<const A> truth, std::span<const B> estimated) {
  if (truth.size() != estimated.size()) throw DimensionError("cross_tab: label sequences differ in length");
  std::map<A, std::size_t> row_index;
  std::map<B, std::size_t> col_index;
  for (const auto& a : truth) row_index.emplace(a, 0);
  for (const auto& b : estimated) col_index.emplace(b, 0);
  CrossTab<A, B> out;
  for (auto& [label, idx] : row_index) {
    idx = out.rows.size();
    out.rows.push_back(label);
  }
  for (auto& [label, idx] : col_index) {
    idx = out.cols.size();
    out.cols.push_back(label);
  }
  out.counts.assign(out.rows.size(), std::vector<std::int64_t>(out.cols.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++out.counts[row_index[truth[i]]][col_index[estimated[i]]];
  return out;
}

template <class A, class B>
CrossTab<A, B> cross_tab(const std::vector<A>& truth, const std::vector<B>& estimated) {
  return cross_tab(std::span<const A>(truth), std::span<const B>(estimated));
}

namespace detail {
inline double pairs(std::int64_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }
}  // namespace detail

/// Hubert-Arabie adjusted Rand index from a contingency table. Returns 1 when
/// the chance-corrected denominator vanishes (both partitions trivial in the
/// same way).
template <class A, class B>
double ari(const CrossTab<A, B>& table) {
  const auto n = table.total();
  if (n < 2) throw ValidationError("ari: need at least two observations");
  double index = 0.0;
  for (const auto& r : table.counts)
    for (auto c : r) index += detail::pairs(c);
  double a = 0.0;
  for (auto s : table.row_sums()) a += detail::pairs(s);
  double b = 0.0;
  for (auto s : table.col_sums()) b += detail::pairs(s);
  const double expected = a * b / detail::pairs(n);
  const double maximum = 0.5 * (a + b);
  const double denom = maximum - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

template <class A, class B>
double ari(std::span<const A> truth, std::span<const B> estimated) {
  return ari(cross_tab(truth, estimated));
}

template <class A, class B>
double ari(const std::vector<A>& truth, const std::vector<B>& estimated) {
  return ari(cross_tab(truth, estimated));
}

/// Observations outside the best one-to-one matching of clusters to classes.
template <class A, class B>
std::int64_t misclassified(const CrossTab<A, B>& table) {
  const std::size_t k = std::max(table.rows.size(), table.cols.size());
  if (k > 10) throw ValidationError("misclassified: more than 10 classes or clusters");
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = 0;
  do {
    std::int64_t agree = 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (perm[r] < table.cols.size()) agree += table.counts[r][perm[r]];
    }
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return table.total() - best;
}

}  // namespace emcwm
