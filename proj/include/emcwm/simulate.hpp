#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "emcwm/errors.hpp"
#include "emcwm/model.hpp"

namespace emcwm {

/// SplitMix64 output function; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value + 0x632be59bd9b4e019ULL));
}

/// Portable random stream: mt19937_64 (bit-identical everywhere) keyed by
/// (seed, stream index), with uniform and normal draws computed here rather
/// than by the implementation-defined <random> distributions.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) : engine_(combine_seed(seed, stream)) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  /// Standard normal by the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Eigen::VectorXd normal_vector(Eigen::Index q) {
    Eigen::VectorXd v(q);
    for (Eigen::Index i = 0; i < q; ++i) v[i] = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct GeneratorSpec {
  MixtureParams params;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
};

/// Draws n observations; observation i uses substream i, so the output does
/// not depend on generation order.
inline Dataset sample(const GeneratorSpec& spec) {
  if (spec.n < 1) throw ValidationError("sample: n must be >= 1");
  spec.params.validate();
  const auto& comps = spec.params.components;
  const auto p = spec.params.p();
  const auto d = spec.params.d();
  std::vector<Eigen::MatrixXd> chol_x;
  std::vector<Eigen::MatrixXd> chol_y;
  for (const auto& c : comps) {
    chol_x.emplace_back(Eigen::LLT<Eigen::MatrixXd>(c.cov_x).matrixL());
    chol_y.emplace_back(Eigen::LLT<Eigen::MatrixXd>(c.cov_y).matrixL());
  }

  Dataset out;
  out.covariates.resize(spec.n, p);
  out.responses.resize(spec.n, d);
  out.labels = Labels(static_cast<std::size_t>(spec.n));
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    RandomStream rng(spec.seed, static_cast<std::uint64_t>(i));
    const double u = rng.uniform();
    std::size_t g = 0;
    double cumulative = comps[0].weight;
    while (u >= cumulative && g + 1 < comps.size()) cumulative += comps[++g].weight;
    const auto& c = comps[g];
    const Eigen::VectorXd x = c.mean_x + chol_x[g] * rng.normal_vector(p);
    const Eigen::VectorXd y = regression_mean(c.coeffs, x) + chol_y[g] * rng.normal_vector(d);
    out.covariates.row(i) = x.transpose();
    out.responses.row(i) = y.transpose();
    (*out.labels)[static_cast<std::size_t>(i)] = static_cast<int>(g);
  }
  for (Eigen::Index j = 0; j < p; ++j) out.covariate_names.push_back("x" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < d; ++j) out.response_names.push_back("y" + std::to_string(j + 1));
  for (std::size_t g = 0; g < comps.size(); ++g) out.label_names.push_back(std::to_string(g + 1));
  return out;
}

/// Two-component generator with VEE responses and VII covariates (p = d = 2).
inline MixtureParams dataset1_params() {
  MixtureParams params;
  params.structure_y = CovStructure::VEE;
  params.structure_x = CovStructure::VII;

  ComponentParams c1;
  c1.weight = 0.35;
  c1.mean_x = Eigen::Vector2d(3.0, 2.5);
  c1.cov_x = Eigen::Matrix2d::Identity();
  c1.coeffs.resize(3, 2);
  c1.coeffs << 2.0, -2.0,
               -0.5, 1.5,
               -1.0, 2.0;
  c1.cov_y.resize(2, 2);
  c1.cov_y << 0.92, 0.56,
              0.56, 1.40;

  ComponentParams c2;
  c2.weight = 0.65;
  c2.mean_x = Eigen::Vector2d(1.1, -4.0);
  c2.cov_x = 0.5 * Eigen::Matrix2d::Identity();
  c2.coeffs.resize(3, 2);
  c2.coeffs << 0.0, 1.0,
               2.2, 2.0,
               -1.0, 1.5;
  c2.cov_y.resize(2, 2);
  c2.cov_y << 1.725, 1.050,
              1.050, 2.625;

  params.components = {c1, c2};
  return params;
}

inline Dataset dataset1(Eigen::Index n, std::uint64_t seed) {
  if (n < 2) throw ValidationError("dataset1: n must be >= 2");
  return sample({dataset1_params(), n, seed});
}

}  // namespace emcwm
