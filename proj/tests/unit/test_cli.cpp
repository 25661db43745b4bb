#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "emcwm/cli.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace emcwm;

namespace {

const std::string kDataDir = EMCWM_DATA_DIR;

std::filesystem::path scratch() {
  const auto dir = std::filesystem::temp_directory_path() / "emcwm_test_cli";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_labels(const std::string& name, const std::string& column, const std::vector<int>& labels) {
  const auto path = (scratch() / name).string();
  std::ofstream out(path);
  out << column << '\n';
  for (int l : labels) out << l << '\n';
  return path;
}

Invocation eval_of(const std::string& truth, const std::string& predicted) {
  Invocation inv;
  inv.command = "eval";
  inv.truth = truth;
  inv.truth_column = "class";
  inv.predicted = predicted;
  inv.predicted_column = "cluster";
  return inv;
}

Invocation iris_fit() {
  Invocation inv;
  inv.command = "fit";
  inv.data = kDataDir + "/iris.csv";
  inv.responses = "Sepal.Width,Petal.Width";
  inv.covariates = "Sepal.Length,Petal.Length";
  inv.labels = "Species";
  inv.groups = 3;
  inv.structure_y = "VEV";
  inv.structure_x = "VEV";
  inv.pilot_runs = 4;
  return inv;
}

}  // namespace

TEST_CASE("simulate writes the requested sample", "[cli]") {
  Invocation inv;
  inv.command = "simulate";
  inv.n = 250;
  inv.seed = 7;
  inv.csv_out = (scratch() / "sim_a.csv").string();
  const auto a = run(inv);
  REQUIRE(a.exit_code == kExitOk);
  const auto data = load_csv(inv.csv_out, [] {
    ColumnSpec c;
    c.responses = ColumnSpec::parse_list("y1,y2");
    c.covariates = ColumnSpec::parse_list("x1,x2");
    c.label = ColumnRef::parse("label");
    return c;
  }());
  CHECK(data.size() == 250);
  const auto first = a.report["result"]["component_counts"][0].get<long>();
  CHECK(std::abs(first / 250.0 - 0.35) <= 3.0 * std::sqrt(0.35 * 0.65 / 250.0));

  Invocation again = inv;
  again.csv_out = (scratch() / "sim_b.csv").string();
  REQUIRE(run(again).exit_code == kExitOk);
  CHECK(read_file(inv.csv_out) == read_file(again.csv_out));

  inv.n = 0;
  const auto zero = run(inv);
  CHECK(zero.exit_code == kExitValidation);
  CHECK(zero.report["error"]["kind"] == "validation");
}

TEST_CASE("simulate from a parameter file", "[cli]") {
  const auto params = dataset1_params();
  const Json j = to_json(params);
  const auto back = params_from_json(Json::parse(j.dump()));
  REQUIRE(back.groups() == 2);
  for (std::size_t g = 0; g < 2; ++g) {
    CHECK(back.components[g].weight == params.components[g].weight);
    CHECK(back.components[g].coeffs == params.components[g].coeffs);
    CHECK(back.components[g].cov_y == params.components[g].cov_y);
    CHECK(back.components[g].cov_x == params.components[g].cov_x);
    CHECK(back.components[g].mean_x == params.components[g].mean_x);
  }

  const auto path = (scratch() / "params.json").string();
  std::ofstream(path) << j.dump(2);
  Invocation from_file;
  from_file.command = "simulate";
  from_file.params_file = path;
  from_file.n = 40;
  from_file.seed = 3;
  from_file.csv_out = (scratch() / "sim_file.csv").string();
  Invocation preset = from_file;
  preset.params_file.reset();
  preset.csv_out = (scratch() / "sim_preset.csv").string();
  REQUIRE(run(from_file).exit_code == kExitOk);
  REQUIRE(run(preset).exit_code == kExitOk);
  CHECK(read_file(from_file.csv_out) == read_file(preset.csv_out));
}

TEST_CASE("eval", "[cli]") {
  const std::vector<int> labels{1, 1, 2, 2, 2, 3};
  const auto same = run(eval_of(write_labels("t.csv", "class", labels), write_labels("p.csv", "cluster", labels)));
  REQUIRE(same.exit_code == kExitOk);
  CHECK(same.report["metrics"]["ari"] == 1.0);

  const auto [truth, clusters] = props::expand(props::kCrabsConfusion);
  const auto crabs = run(eval_of(write_labels("ct.csv", "class", truth), write_labels("cp.csv", "cluster", clusters)));
  REQUIRE(crabs.exit_code == kExitOk);
  CHECK(std::round(100.0 * crabs.report["metrics"]["ari"].get<double>()) == 82.0);
  CHECK(crabs.report["metrics"]["misclassified"] == 15);

  std::vector<int> two_class(10);
  std::vector<int> singletons(10);
  for (int i = 0; i < 10; ++i) {
    two_class[static_cast<std::size_t>(i)] = i < 4 ? 0 : 1;
    singletons[static_cast<std::size_t>(i)] = i;
  }
  const auto single = run(eval_of(write_labels("st.csv", "class", two_class), write_labels("sp.csv", "cluster", singletons)));
  REQUIRE(single.exit_code == kExitOk);
  CHECK(std::abs(single.report["metrics"]["ari"].get<double>() - oracle::pair_count_ari(two_class, singletons)) < 1e-12);

  const auto mismatch = run(eval_of(write_labels("mt.csv", "class", labels), write_labels("mp.csv", "cluster", {1, 2})));
  CHECK(mismatch.exit_code == kExitValidation);
}

TEST_CASE("error exit codes", "[cli]") {
  Invocation bad_column = iris_fit();
  bad_column.covariates = "Sepal.Length,Nope";
  const auto a = run(bad_column);
  CHECK(a.exit_code == kExitValidation);
  CHECK_THAT(a.report["error"]["message"].get<std::string>(), Catch::Matchers::ContainsSubstring("Nope"));

  Invocation missing = iris_fit();
  missing.data = (scratch() / "does_not_exist.csv").string();
  CHECK(run(missing).exit_code == kExitValidation);

  Invocation bad_structure = iris_fit();
  bad_structure.structure_y = "XYZ";
  CHECK(run(bad_structure).exit_code == kExitValidation);

  Invocation unknown;
  unknown.command = "dance";
  CHECK(run(unknown).exit_code == kExitValidation);

  Invocation too_many = iris_fit();
  too_many.groups = 40;
  CHECK(run(too_many).exit_code == kExitNoFit);
}

TEST_CASE("fit report and replay", "[cli][property]") {
  const auto inv = iris_fit();
  const auto out = run(inv, {1, false});
  REQUIRE(out.exit_code == kExitOk);
  const Json report = Json::parse(out.report.dump());
  CHECK(report["schema"] == kReportSchema);
  CHECK(!report.contains("timing"));
  CHECK(report["result"]["fit"]["m"] == 40);
  CHECK(report["data"]["n"] == 150);
  CHECK(report["input"]["data_fnv1a64"] == hex64(fnv1a64(read_file(inv.data))));

  const auto echoed = invocation_from_json(report["input"]);
  CHECK(echoed.structure_y == "VEV");
  CHECK(echoed.groups == 3);

  const auto again = replay(report, {2, false}, true);
  CHECK(again.exit_code == kExitOk);
  CHECK(again.report["replay"]["identical"] == true);

  Json tampered = report;
  tampered["result"]["fit"]["loglik"] = 0.0;
  const auto caught = replay(tampered, {1, false}, true);
  CHECK(caught.exit_code == kExitFailure);
  CHECK(caught.report["replay"]["differing_sections"][0] == "result");
}

TEST_CASE("search through the front end", "[cli]") {
  Invocation inv;
  inv.command = "search";
  inv.data = kDataDir + "/iris.csv";
  inv.responses = "Sepal.Width,Petal.Width";
  inv.covariates = "Sepal.Length,Petal.Length";
  inv.labels = "Species";
  inv.g_min = inv.g_max = 3;
  inv.structures_y = "VEV";
  inv.structures_x = "VEV";
  inv.pilot_runs = 3;
  const auto out = run(inv, {1, false});
  REQUIRE(out.exit_code == kExitOk);
  CHECK(out.report["result"]["table"].size() == 1);
  CHECK(out.report["result"]["best_index"] == 0);
  CHECK(out.report["metrics"]["crosstab"]["rows"][0] == "setosa");
  CHECK(parse_structure_list("VEV, EII,VEV").size() == 2);
  CHECK(parse_structure_list("all").size() == 14);
  CHECK_THROWS_AS(parse_criterion("aic"), ValidationError);
}
