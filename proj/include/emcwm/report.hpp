#pragma once

// JSON serialization of fits, searches and metrics. Matrices are row-major
// nested arrays; cluster ids are reported 1-based.

#include <Eigen/Dense>

#include <json.hpp>

#include <algorithm>
#include <string>
#include <vector>

#include "emcwm/covariance.hpp"
#include "emcwm/em.hpp"
#include "emcwm/errors.hpp"
#include "emcwm/metrics.hpp"
#include "emcwm/model.hpp"
#include "emcwm/selection.hpp"

namespace emcwm {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "emcwm.report/1";

inline Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ValidationError(what + ": expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw ValidationError(what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = r[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ValidationError(what + ": non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ValidationError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Json to_json(const MixtureParams& params) {
  Json comps = Json::array();
  for (const auto& c : params.components) {
    comps.push_back(Json{{"weight", c.weight},
                         {"mean_x", to_json(c.mean_x)},
                         {"cov_x", to_json(c.cov_x)},
                         {"coeffs", to_json(c.coeffs)},
                         {"cov_y", to_json(c.cov_y)}});
  }
  return Json{{"structure_y", std::string(to_string(params.structure_y))},
              {"structure_x", std::string(to_string(params.structure_x))},
              {"components", std::move(comps)}};
}

inline MixtureParams params_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("components")) throw ValidationError("parameters: missing 'components'");
  MixtureParams params;
  params.structure_y = parse_structure(j.value("structure_y", std::string("VVV")));
  params.structure_x = parse_structure(j.value("structure_x", std::string("VVV")));
  for (const auto& c : j.at("components")) {
    ComponentParams comp;
    if (!c.contains("weight") || !c.at("weight").is_number()) throw ValidationError("parameters: component without a weight");
    comp.weight = c.at("weight").get<double>();
    comp.mean_x = vector_from_json(c.at("mean_x"), "mean_x");
    comp.cov_x = matrix_from_json(c.at("cov_x"), "cov_x");
    comp.coeffs = matrix_from_json(c.at("coeffs"), "coeffs");
    comp.cov_y = matrix_from_json(c.at("cov_y"), "cov_y");
    params.components.push_back(std::move(comp));
  }
  params.validate();
  return params;
}

inline Json to_json(const FitFailure& f) {
  return Json{{"kind", std::string(to_string(f.kind))}, {"message", f.message}, {"iteration", f.iteration}};
}

inline Json one_based(const Labels& labels) {
  Json out = Json::array();
  for (int l : labels) out.push_back(l + 1);
  return out;
}

/// Summary fields shared by fit reports and search table rows.
inline Json fit_summary(CovStructure sy, CovStructure sx, int G, const FitResult& r) {
  return Json{{"structure_y", std::string(to_string(sy))},
              {"structure_x", std::string(to_string(sx))},
              {"G", G},
              {"loglik", r.final_loglik},
              {"m", r.n_params},
              {"bic", r.bic},
              {"icl", r.icl},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"failure", r.failure ? to_json(*r.failure) : Json(nullptr)},
              {"warnings", r.warnings}};
}

/// Full detail: summary plus parameters, trace, MAP labels and responsibilities.
inline Json fit_detail(CovStructure sy, CovStructure sx, int G, const FitResult& r) {
  Json out = fit_summary(sy, sx, G, r);
  if (!r.params.components.empty()) out["params"] = to_json(r.params);
  out["loglik_trace"] = r.loglik_trace;
  out["labels"] = one_based(r.labels);
  if (r.tau.tau.size() > 0) out["tau"] = to_json(r.tau.tau);
  return out;
}

inline Json to_json(const PilotSelection& p) {
  Json runs = Json::array();
  for (const auto& r : p.runs) {
    runs.push_back(Json{{"run", r.run},
                        {"start", r.from_kmeans ? "kmeans" : "random"},
                        {"ok", r.ok},
                        {"bic", r.bic},
                        {"failure", r.failure.empty() ? Json(nullptr) : Json(r.failure)}});
  }
  return Json{{"G", p.groups}, {"chosen_run", p.chosen_run}, {"bic", p.bic}, {"runs", std::move(runs)}};
}

inline Json to_json(const SearchResult& s) {
  Json table = Json::array();
  for (const auto& row : s.table) table.push_back(fit_summary(row.structure_y, row.structure_x, row.groups, *row.result));
  Json pilots = Json::array();
  for (const auto& p : s.pilots) pilots.push_back(to_json(p));
  Json out{{"criterion", std::string(to_string(s.criterion))},
           {"best_index", s.best ? Json(*s.best) : Json(nullptr)},
           {"best", nullptr},
           {"table", std::move(table)},
           {"pilots", std::move(pilots)},
           {"pilot_errors", s.pilot_errors}};
  if (const auto* b = s.best_row()) out["best"] = fit_detail(b->structure_y, b->structure_x, b->groups, *b->result);
  return out;
}

template <class A, class B>
Json to_json(const CrossTab<A, B>& t) {
  return Json{{"rows", t.rows}, {"cols", t.cols}, {"counts", t.counts}};
}

/// ARI, misclassification count and cross-tabulation of named true classes
/// against 1-based cluster ids.
inline Json label_metrics(const Labels& truth, const std::vector<std::string>& class_names, const Labels& clusters) {
  std::vector<std::string> named;
  named.reserve(truth.size());
  for (int t : truth) named.push_back(class_names.at(static_cast<std::size_t>(t)));
  std::vector<int> ids;
  ids.reserve(clusters.size());
  for (int c : clusters) ids.push_back(c + 1);
  auto table = cross_tab(named, ids);
  // Keep classes in first-appearance order rather than lexicographic order.
  CrossTab<std::string, int> ordered;
  ordered.cols = table.cols;
  for (const auto& name : class_names) {
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (table.rows[r] != name) continue;
      ordered.rows.push_back(name);
      ordered.counts.push_back(table.counts[r]);
    }
  }
  Json out{{"ari", ari(ordered)}, {"crosstab", to_json(ordered)}};
  if (std::max(ordered.rows.size(), ordered.cols.size()) <= 10) out["misclassified"] = misclassified(ordered);
  return out;
}

inline Json error_json(const std::string& kind, const std::string& message) {
  return Json{{"schema", kReportSchema}, {"error", Json{{"kind", kind}, {"message", message}}}};
}

}  // namespace emcwm
