#pragma once

// Command runners behind the emcwm tool. An Invocation holds every input
// of a run; reports echo it so a report can be replayed on its own.

#include <Eigen/Dense>

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "emcwm/covariance.hpp"
#include "emcwm/em.hpp"
#include "emcwm/errors.hpp"
#include "emcwm/io.hpp"
#include "emcwm/model.hpp"
#include "emcwm/report.hpp"
#include "emcwm/selection.hpp"
#include "emcwm/simulate.hpp"

namespace emcwm {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     // I/O trouble, unexpected errors, replay mismatch
  kExitValidation = 2,  // bad flags, columns or data
  kExitNoFit = 3,       // every fit failed
};

struct Invocation {
  std::string command;  // simulate, fit, search or eval

  // Data source for fit and search.
  std::string data;
  std::string responses;
  std::string covariates;
  std::optional<std::string> labels;
  bool scale = false;

  // Model options.
  int g_min = 1;
  int g_max = 4;
  int groups = 2;
  std::string structures_y = "all";
  std::string structures_x = "all";
  std::string structure_y = "VVV";
  std::string structure_x = "VVV";
  std::string criterion = "bic";
  int pilot_runs = 10;
  std::uint64_t seed = 0;
  int max_iter = 1000;
  double aitken_eps = 1e-5;
  std::optional<double> min_component_weight;

  // simulate
  std::string preset = "dataset1";
  std::optional<std::string> params_file;
  long n = 250;
  std::string csv_out;

  // eval
  std::string truth;
  std::string truth_column;
  std::string predicted;
  std::string predicted_column;
};

/// Execution settings that do not change results.
struct RunOptions {
  int threads = 1;
  bool timing = true;
};

struct Outcome {
  Json report;
  int exit_code = kExitOk;
};

inline std::vector<CovStructure> parse_structure_list(const std::string& text) {
  std::vector<CovStructure> out;
  if (text == "all") return {kAllStructures.begin(), kAllStructures.end()};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    const auto s = parse_structure(item);
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  if (out.empty()) throw ValidationError("empty structure list");
  return out;
}

inline Criterion parse_criterion(const std::string& text) {
  if (text == "bic") return Criterion::BIC;
  if (text == "icl") return Criterion::ICL;
  throw ValidationError("criterion must be 'bic' or 'icl', got '" + text + "'");
}

inline Json to_json(const Invocation& inv) {
  Json j{{"command", inv.command}};
  const auto data_fields = [&] {
    j["data"] = inv.data;
    j["data_fnv1a64"] = hex64(fnv1a64(read_file(inv.data)));
    j["responses"] = inv.responses;
    j["covariates"] = inv.covariates;
    j["labels"] = inv.labels ? Json(*inv.labels) : Json(nullptr);
    j["scale"] = inv.scale;
  };
  const auto fit_fields = [&] {
    j["seed"] = inv.seed;
    j["pilot_runs"] = inv.pilot_runs;
    j["max_iter"] = inv.max_iter;
    j["aitken_eps"] = inv.aitken_eps;
    j["min_component_weight"] = inv.min_component_weight ? Json(*inv.min_component_weight) : Json(nullptr);
  };
  if (inv.command == "search") {
    data_fields();
    j["g_min"] = inv.g_min;
    j["g_max"] = inv.g_max;
    j["structures_y"] = inv.structures_y;
    j["structures_x"] = inv.structures_x;
    j["criterion"] = inv.criterion;
    fit_fields();
  } else if (inv.command == "fit") {
    data_fields();
    j["groups"] = inv.groups;
    j["structure_y"] = inv.structure_y;
    j["structure_x"] = inv.structure_x;
    fit_fields();
  } else if (inv.command == "simulate") {
    j["preset"] = inv.params_file ? Json(nullptr) : Json(inv.preset);
    j["params_file"] = inv.params_file ? Json(*inv.params_file) : Json(nullptr);
    j["n"] = inv.n;
    j["seed"] = inv.seed;
    j["out"] = inv.csv_out;
  } else if (inv.command == "eval") {
    j["truth"] = inv.truth;
    j["truth_column"] = inv.truth_column;
    j["predicted"] = inv.predicted;
    j["predicted_column"] = inv.predicted_column;
  }
  return j;
}

inline Invocation invocation_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("command")) throw ValidationError("report input: missing 'command'");
  Invocation inv;
  inv.command = j.at("command").get<std::string>();
  const auto get = [&j](const char* key, auto& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  const auto get_opt = [&j](const char* key, auto& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<typename std::remove_reference_t<decltype(field)>::value_type>();
  };
  get("data", inv.data);
  get("responses", inv.responses);
  get("covariates", inv.covariates);
  get_opt("labels", inv.labels);
  get("scale", inv.scale);
  get("g_min", inv.g_min);
  get("g_max", inv.g_max);
  get("groups", inv.groups);
  get("structures_y", inv.structures_y);
  get("structures_x", inv.structures_x);
  get("structure_y", inv.structure_y);
  get("structure_x", inv.structure_x);
  get("criterion", inv.criterion);
  get("pilot_runs", inv.pilot_runs);
  get("seed", inv.seed);
  get("max_iter", inv.max_iter);
  get("aitken_eps", inv.aitken_eps);
  get_opt("min_component_weight", inv.min_component_weight);
  get("preset", inv.preset);
  get_opt("params_file", inv.params_file);
  get("n", inv.n);
  get("out", inv.csv_out);
  get("truth", inv.truth);
  get("truth_column", inv.truth_column);
  get("predicted", inv.predicted);
  get("predicted_column", inv.predicted_column);
  return inv;
}

namespace detail {

inline Json base_report(const Invocation& inv) {
  return Json{{"schema", kReportSchema},
              {"tool", Json{{"name", "emcwm"}, {"version", kToolVersion}}},
              {"input", to_json(inv)}};
}

struct LoadedData {
  Dataset data;
  Json summary;
};

inline LoadedData load_input(const Invocation& inv) {
  ColumnSpec cols;
  cols.responses = ColumnSpec::parse_list(inv.responses);
  cols.covariates = ColumnSpec::parse_list(inv.covariates);
  if (inv.labels) cols.label = ColumnRef::parse(*inv.labels);
  LoadedData out{load_csv(inv.data, cols), Json::object()};
  out.data.validate();
  out.summary = Json{{"n", out.data.size()},
                     {"p", out.data.p()},
                     {"d", out.data.d()},
                     {"covariates", out.data.covariate_names},
                     {"responses", out.data.response_names},
                     {"classes", out.data.label_names}};
  if (inv.scale) {
    const auto s = standardize(out.data);
    out.summary["standardization"] = Json{{"covariate_center", to_json(s.covariate_center)},
                                          {"covariate_scale", to_json(s.covariate_scale)},
                                          {"response_center", to_json(s.response_center)},
                                          {"response_scale", to_json(s.response_scale)}};
  }
  return out;
}

inline FitConfig fit_config(const Invocation& inv) {
  FitConfig cfg;
  cfg.max_iter = inv.max_iter;
  cfg.aitken_eps = inv.aitken_eps;
  cfg.min_component_weight = inv.min_component_weight;
  cfg.seed = inv.seed;
  return cfg;
}

inline Outcome run_search(const Invocation& inv, const RunOptions& opts) {
  Outcome out{base_report(inv), kExitOk};
  auto loaded = load_input(inv);
  SearchSpec spec;
  spec.g_min = inv.g_min;
  spec.g_max = inv.g_max;
  spec.structures_y = parse_structure_list(inv.structures_y);
  spec.structures_x = parse_structure_list(inv.structures_x);
  spec.pilot_runs = inv.pilot_runs;
  spec.criterion = parse_criterion(inv.criterion);
  spec.seed = inv.seed;
  spec.fit = fit_config(inv);
  spec.threads = opts.threads;
  const auto result = search(loaded.data, spec);
  out.report["data"] = std::move(loaded.summary);
  out.report["result"] = to_json(result);
  const auto* best = result.best_row();
  if (best && loaded.data.labels) {
    out.report["metrics"] = label_metrics(*loaded.data.labels, loaded.data.label_names, best->result->labels);
  }
  if (!best) out.exit_code = kExitNoFit;
  return out;
}

inline Outcome run_fit(const Invocation& inv, const RunOptions& opts) {
  Outcome out{base_report(inv), kExitOk};
  auto loaded = load_input(inv);
  FitConfig cfg = fit_config(inv);
  cfg.groups = inv.groups;
  cfg.structure_y = parse_structure(inv.structure_y);
  cfg.structure_x = parse_structure(inv.structure_x);
  cfg.validate();
  out.report["data"] = std::move(loaded.summary);

  FitResult fitted;
  std::optional<PilotSelection> pilot;
  try {
    pilot = init_labels(loaded.data, cfg.groups, inv.pilot_runs, inv.seed, cfg, opts.threads);
    cfg.seed = fit_seed(inv.seed, cfg.structure_y, cfg.structure_x, cfg.groups);
    fitted = fit(loaded.data, cfg, pilot->labels);
  } catch (const InitializationError& e) {
    fitted.failure = FitFailure{FailureKind::Initialization, e.what(), 0};
  }
  Json result{{"fit", fit_detail(cfg.structure_y, cfg.structure_x, cfg.groups, fitted)}};
  if (pilot && cfg.groups > 1) result["pilot"] = to_json(*pilot);
  out.report["result"] = std::move(result);
  if (fitted.ok() && loaded.data.labels) {
    out.report["metrics"] = label_metrics(*loaded.data.labels, loaded.data.label_names, fitted.labels);
  }
  if (!fitted.ok()) out.exit_code = kExitNoFit;
  return out;
}

inline Outcome run_simulate(const Invocation& inv) {
  if (inv.n < 1) throw ValidationError("simulate: n must be >= 1");
  if (inv.csv_out.empty()) throw ValidationError("simulate: an output CSV path is required");
  MixtureParams params;
  if (inv.params_file) {
    params = params_from_json(Json::parse(read_file(*inv.params_file)));
  } else if (inv.preset == "dataset1") {
    params = dataset1_params();
  } else {
    throw ValidationError("simulate: unknown preset '" + inv.preset + "'");
  }
  const Dataset data = sample({params, inv.n, inv.seed});
  write_csv(inv.csv_out, data);

  Outcome out{base_report(inv), kExitOk};
  std::vector<long> counts(params.groups(), 0);
  for (int l : *data.labels) ++counts[static_cast<std::size_t>(l)];
  out.report["result"] = Json{{"n", data.size()},
                              {"p", data.p()},
                              {"d", data.d()},
                              {"component_counts", counts},
                              {"csv_fnv1a64", hex64(fnv1a64(read_file(inv.csv_out)))},
                              {"params", to_json(params)}};
  return out;
}

inline std::vector<std::string> read_column(const std::string& path, const std::string& column) {
  const auto table = read_csv(path);
  const auto j = ColumnRef::parse(column).resolve(table.header);
  std::vector<std::string> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) out.push_back(row[j]);
  return out;
}

inline Outcome run_eval(const Invocation& inv) {
  const auto truth = read_column(inv.truth, inv.truth_column);
  const auto predicted = read_column(inv.predicted, inv.predicted_column);
  if (truth.size() != predicted.size()) {
    throw DimensionError("eval: " + std::to_string(truth.size()) + " true labels but " +
                         std::to_string(predicted.size()) + " predicted labels");
  }
  const auto table = cross_tab(truth, predicted);
  Json metrics{{"n", truth.size()}, {"ari", ari(table)}, {"crosstab", to_json(table)}};
  if (std::max(table.rows.size(), table.cols.size()) <= 10) metrics["misclassified"] = misclassified(table);
  Outcome out{base_report(inv), kExitOk};
  out.report["metrics"] = std::move(metrics);
  return out;
}

}  // namespace detail

/// Runs one command. Validation problems come back as an error report with
/// exit code 2; numerical failure of every fit gives exit code 3.
inline Outcome run(const Invocation& inv, const RunOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    if (inv.command == "search") out = detail::run_search(inv, opts);
    else if (inv.command == "fit") out = detail::run_fit(inv, opts);
    else if (inv.command == "simulate") out = detail::run_simulate(inv);
    else if (inv.command == "eval") out = detail::run_eval(inv);
    else throw ValidationError("unknown command '" + inv.command + "'");
  } catch (const ValidationError& e) {
    return {error_json("validation", e.what()), kExitValidation};
  } catch (const ParseError& e) {
    return {error_json("parse", e.what()), kExitValidation};
  } catch (const DimensionError& e) {
    return {error_json("dimension", e.what()), kExitValidation};
  } catch (const InitializationError& e) {
    return {error_json("initialization", e.what()), kExitNoFit};
  } catch (const nlohmann::json::exception& e) {
    return {error_json("validation", e.what()), kExitValidation};
  } catch (const std::exception& e) {
    return {error_json("error", e.what()), kExitFailure};
  }
  if (opts.timing) {
    out.report["timing"] = Json{{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
                                {"threads", opts.threads}};
  }
  return out;
}

/// Reruns the input echoed in `report` and compares the numeric sections.
inline Outcome replay(const Json& report, const RunOptions& opts, bool check) {
  if (!report.is_object() || !report.contains("input")) return {error_json("validation", "report has no 'input' section"), kExitValidation};
  Invocation inv;
  try {
    inv = invocation_from_json(report.at("input"));
  } catch (const std::exception& e) {
    return {error_json("validation", e.what()), kExitValidation};
  }
  Outcome out = run(inv, opts);
  if (!check) return out;
  // Compare serialized forms: NaN is written as null.
  out.report = Json::parse(out.report.dump());
  std::vector<std::string> differing;
  for (const char* key : {"input", "data", "result", "metrics"}) {
    const bool a = report.contains(key);
    const bool b = out.report.contains(key);
    if (a != b || (a && report.at(key) != out.report.at(key))) differing.emplace_back(key);
  }
  out.report["replay"] = Json{{"identical", differing.empty()}, {"differing_sections", differing}};
  if (!differing.empty() && out.exit_code == kExitOk) out.exit_code = kExitFailure;
  return out;
}

}  // namespace emcwm
