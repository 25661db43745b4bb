#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "emcwm/cli.hpp"

namespace {

void add_data_options(CLI::App& cmd, emcwm::Invocation& inv) {
  cmd.add_option("--data", inv.data, "CSV file with a header row")->required();
  cmd.add_option("--responses", inv.responses, "Response columns (names or 0-based indices, comma separated)")->required();
  cmd.add_option("--covariates", inv.covariates, "Covariate columns (names or 0-based indices, comma separated)")->required();
  cmd.add_option("--labels", inv.labels, "Column holding known classes; enables ARI and cross-tab");
  cmd.add_flag("--scale", inv.scale, "Standardize every response and covariate column before fitting");
}

void add_fit_options(CLI::App& cmd, emcwm::Invocation& inv) {
  cmd.add_option("--seed", inv.seed, "Seed for pilot starts")->capture_default_str();
  cmd.add_option("--pilot-runs", inv.pilot_runs, "Pilot EEE-EEE fits per G (one k-means, rest random)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--max-iter", inv.max_iter, "EM iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--aitken-eps", inv.aitken_eps, "Aitken convergence tolerance")->capture_default_str();
  cmd.add_option("--min-component-weight", inv.min_component_weight,
                 "Minimum expected component size before each M-step (default p + d + 1)");
}

int emit(const emcwm::Outcome& outcome, const std::string& out_path) {
  const auto text = outcome.report.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    out << text;
    if (!out) {
      std::cerr << emcwm::error_json("io", "cannot write '" + out_path + "'").dump(2) << "\n";
      return emcwm::kExitFailure;
    }
  }
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parsimonious Gaussian cluster-weighted models: simulate, fit, search and evaluate"};
  app.set_version_flag("--version", emcwm::kToolVersion);
  app.require_subcommand(1);

  emcwm::Invocation inv;
  emcwm::RunOptions opts;
  opts.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string report_out;
  bool omit_timing = false;
  const auto add_run_options = [&](CLI::App& cmd) {
    cmd.add_option("--threads", opts.threads, "Concurrent fits (results do not depend on it)")->check(CLI::PositiveNumber);
    cmd.add_option("--out", report_out, "Also write the JSON report to this file");
    cmd.add_flag("--omit-timing", omit_timing, "Leave timing out of the report");
  };

  auto* search = app.add_subcommand("search", "Fit every structure pair for each G and rank by BIC or ICL");
  add_data_options(*search, inv);
  add_fit_options(*search, inv);
  add_run_options(*search);
  search->add_option("--g-min", inv.g_min, "Smallest number of components")->capture_default_str();
  search->add_option("--g-max", inv.g_max, "Largest number of components")->capture_default_str();
  search->add_option("--structures-y", inv.structures_y, "Response structures: comma list or 'all'")->capture_default_str();
  search->add_option("--structures-x", inv.structures_x, "Covariate structures: comma list or 'all'")->capture_default_str();
  search->add_option("--criterion", inv.criterion, "Ranking criterion")
      ->capture_default_str()
      ->check(CLI::IsMember({"bic", "icl"}));

  auto* fit = app.add_subcommand("fit", "Fit one structure pair at one G");
  add_data_options(*fit, inv);
  add_fit_options(*fit, inv);
  add_run_options(*fit);
  fit->add_option("-G,--groups", inv.groups, "Number of components")->capture_default_str();
  fit->add_option("--structure-y", inv.structure_y, "Response covariance structure")->capture_default_str();
  fit->add_option("--structure-x", inv.structure_x, "Covariate covariance structure")->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Draw a labelled sample from a preset or a parameter file");
  simulate->add_option("--preset", inv.preset, "Built-in generator")->capture_default_str()->check(CLI::IsMember({"dataset1"}));
  simulate->add_option("--params", inv.params_file, "JSON parameters (the 'params' object of a report)");
  simulate->add_option("-n,--n", inv.n, "Sample size")->capture_default_str();
  simulate->add_option("--seed", inv.seed, "Random seed")->capture_default_str();
  simulate->add_option("--out", inv.csv_out, "CSV file to write")->required();
  simulate->add_flag("--omit-timing", omit_timing, "Leave timing out of the report");

  auto* eval = app.add_subcommand("eval", "Compare two labelings: ARI, cross-tab, misclassified count");
  eval->add_option("--truth", inv.truth, "CSV holding the true labels")->required();
  eval->add_option("--truth-column", inv.truth_column, "Column name or index in the truth file")->required();
  eval->add_option("--predicted", inv.predicted, "CSV holding the estimated labels")->required();
  eval->add_option("--predicted-column", inv.predicted_column, "Column name or index in the predicted file")->required();
  eval->add_option("--out", report_out, "Also write the JSON report to this file");

  std::string replay_path;
  bool check = false;
  auto* replay = app.add_subcommand("replay", "Rerun the input recorded in a report");
  replay->add_option("report", replay_path, "Report JSON file")->required();
  replay->add_flag("--check", check, "Compare with the recorded results; exit 1 on any difference");
  add_run_options(*replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << emcwm::error_json("validation", e.what()).dump(2) << "\n";
    return emcwm::kExitValidation;
  }
  opts.timing = !omit_timing;

  if (replay->parsed()) {
    emcwm::Json recorded;
    try {
      recorded = emcwm::Json::parse(emcwm::read_file(replay_path));
    } catch (const std::exception& e) {
      std::cout << emcwm::error_json("validation", e.what()).dump(2) << "\n";
      return emcwm::kExitValidation;
    }
    return emit(emcwm::replay(recorded, opts, check), report_out);
  }
  inv.command = app.get_subcommands().front()->get_name();
  return emit(emcwm::run(inv, opts), report_out);
}
