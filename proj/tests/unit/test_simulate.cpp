#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "emcwm/covariance.hpp"
#include "emcwm/simulate.hpp"

using namespace emcwm;

namespace {

Eigen::MatrixXd component_rows(const Eigen::MatrixXd& m, const Labels& labels, int g) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == g) idx.push_back(static_cast<Eigen::Index>(i));
  return m(idx, Eigen::all);
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd c = rows.rowwise() - rows.colwise().mean();
  return c.transpose() * c / static_cast<double>(rows.rows());
}

}  // namespace

TEST_CASE("seed mixing", "[simulate]") {
  CHECK(combine_seed(1, 2) != combine_seed(2, 1));
  CHECK(combine_seed(7, 0) != combine_seed(7, 1));
  RandomStream a(3, 4);
  RandomStream b(3, 4);
  for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());
  RandomStream u(5, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK((v > 0.0 && v < 1.0));
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("standard normal draws", "[simulate]") {
  RandomStream rng(9, 0);
  const int n = 200000;
  double s1 = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("sampling validates its generator", "[simulate]") {
  MixtureParams params;
  ComponentParams c;
  c.weight = 1.0;
  c.mean_x = Eigen::Vector2d(1.0, -1.0);
  c.cov_x = Eigen::Matrix2d::Zero();
  c.coeffs = Eigen::MatrixXd::Zero(3, 1);
  c.coeffs(0, 0) = 4.0;
  c.cov_y = Eigen::MatrixXd::Zero(1, 1);
  params.components = {c};
  CHECK_THROWS_AS(sample({params, 10, 1}), ValidationError);

  params.components[0].cov_x = 1e-8 * Eigen::Matrix2d::Identity();
  params.components[0].cov_y = 1e-8 * Eigen::MatrixXd::Identity(1, 1);
  const auto data = sample({params, 500, 1});
  CHECK((data.covariates.rowwise() - c.mean_x.transpose()).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((data.responses.array() - 4.0).abs().maxCoeff() < 1e-3);
  CHECK_THROWS_AS(sample({params, 0, 1}), ValidationError);
  CHECK_THROWS_AS(dataset1(1, 1), ValidationError);
}

TEST_CASE("sampling is deterministic", "[simulate]") {
  const auto a = dataset1(300, 11);
  const auto b = dataset1(300, 11);
  CHECK(a.covariates == b.covariates);
  CHECK(a.responses == b.responses);
  CHECK(*a.labels == *b.labels);
  const auto c = dataset1(300, 12);
  CHECK(a.covariates != c.covariates);
  // Observation i depends only on (seed, i).
  const auto prefix = dataset1(50, 11);
  CHECK(prefix.covariates == a.covariates.topRows(50));
}

TEST_CASE("Dataset1 moments", "[simulate][property]") {
  const auto params = dataset1_params();
  const auto data = dataset1(100000, 13);
  const auto& labels = *data.labels;
  for (int g = 0; g < 2; ++g) {
    const auto& c = params.components[static_cast<std::size_t>(g)];
    const Eigen::MatrixXd x = component_rows(data.covariates, labels, g);
    const Eigen::MatrixXd y = component_rows(data.responses, labels, g);
    const Eigen::VectorXd mean = x.colwise().mean().transpose();
    CHECK((mean - c.mean_x).cwiseAbs().maxCoeff() < 0.02);
    CHECK((sample_cov(x) - c.cov_x).cwiseAbs().maxCoeff() < 0.05);

    Eigen::MatrixXd fitted(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) fitted.row(i) = regression_mean(c.coeffs, x.row(i).transpose()).transpose();
    const Eigen::MatrixXd resid = y - fitted;
    CHECK(resid.colwise().mean().cwiseAbs().maxCoeff() < 0.05);
    CHECK((resid.transpose() * resid / static_cast<double>(resid.rows()) - c.cov_y).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("Dataset1 component proportion", "[simulate]") {
  for (Eigen::Index n : {250, 1000, 5000}) {
    const auto data = dataset1(n, 17);
    const double share = static_cast<double>(std::count(data.labels->begin(), data.labels->end(), 0)) / static_cast<double>(n);
    CHECK(std::abs(share - 0.35) <= 3.0 * std::sqrt(0.35 * 0.65 / static_cast<double>(n)));
  }
}

TEST_CASE("Dataset1 response covariances share shape and orientation", "[simulate]") {
  const auto params = dataset1_params();
  const auto t1 = decompose(params.components[0].cov_y);
  const auto t2 = decompose(params.components[1].cov_y);
  const Eigen::MatrixXd core1 = params.components[0].cov_y / t1.volume;
  const Eigen::MatrixXd core2 = params.components[1].cov_y / t2.volume;
  CHECK((core1 - core2).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(t1.volume / t2.volume == Catch::Approx(0.8 / 1.5).epsilon(1e-12));
  CHECK(params.components[0].cov_x == Eigen::Matrix2d::Identity());
  CHECK(params.components[1].cov_x == 0.5 * Eigen::Matrix2d::Identity());
}
