#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <limits>
#include <sstream>

#include "emcwm/io.hpp"
#include "emcwm/simulate.hpp"

using namespace emcwm;

namespace {

const std::string kDataDir = EMCWM_DATA_DIR;

ColumnSpec columns(const std::string& responses, const std::string& covariates, std::optional<std::string> label = {}) {
  ColumnSpec spec;
  spec.responses = ColumnSpec::parse_list(responses);
  spec.covariates = ColumnSpec::parse_list(covariates);
  if (label) spec.label = ColumnRef::parse(*label);
  return spec;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("four numeric columns", "[io]") {
  const auto table = parse_csv("a,b,c,d\n1,2,3,4\n5,6,7,8\n9,10,11,12\n");
  const auto data = to_dataset(table, columns("a,b", "c,d"));
  CHECK(data.size() == 3);
  CHECK(data.d() == 2);
  CHECK(data.p() == 2);
  CHECK(data.responses(2, 1) == 10.0);
  CHECK(data.covariates(0, 0) == 3.0);
  CHECK(data.response_names == std::vector<std::string>{"a", "b"});
  CHECK(!data.labels);

  // Positions work when no header has that name.
  const auto by_index = to_dataset(table, columns("0,1", "2,3"));
  CHECK(by_index.responses == data.responses);
}

TEST_CASE("bundled iris file", "[io]") {
  const auto data = load_csv(kDataDir + "/iris.csv", columns("Sepal.Width,Petal.Width", "Sepal.Length,Petal.Length", "Species"));
  CHECK(data.size() == 150);
  CHECK(data.p() == 2);
  CHECK(data.d() == 2);
  CHECK(data.label_names == std::vector<std::string>{"setosa", "versicolor", "virginica"});
  CHECK(std::count(data.labels->begin(), data.labels->end(), 1) == 50);
  CHECK_NOTHROW(data.validate());
}

TEST_CASE("bundled crabs file", "[io]") {
  const auto data = load_csv(kDataDir + "/crabs.csv", columns("CW,FL,RW", "CL,BD", "group"));
  CHECK(data.size() == 200);
  CHECK(data.p() == 2);
  CHECK(data.d() == 3);
  CHECK(data.label_names.size() == 4);
}

TEST_CASE("malformed files", "[io]") {
  const auto letter = message_of([] { to_dataset(parse_csv("y,x\n1,2\n3,abc\n"), columns("y", "x")); });
  CHECK_THAT(letter, Catch::Matchers::ContainsSubstring("line 3"));
  CHECK_THAT(letter, Catch::Matchers::ContainsSubstring("'x'"));
  CHECK_THROWS_AS(to_dataset(parse_csv("y,x\n1,2\n3,abc\n"), columns("y", "x")), ParseError);

  const auto ragged = message_of([] { parse_csv("a,b\n1,2\n3\n"); });
  CHECK_THAT(ragged, Catch::Matchers::ContainsSubstring("line 3"));
  CHECK_THROWS_AS(parse_csv("a,b\n\"1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_csv(""), ParseError);
  CHECK_THROWS_AS(to_dataset(parse_csv("a,b\n1,2\n"), columns("a", "zz")), ValidationError);
  CHECK_THROWS_AS(to_dataset(parse_csv("a,b\n1,2\n"), columns("a", "a")), ValidationError);
  CHECK_THROWS_AS(to_dataset(parse_csv("a,b\n1,nan\n"), columns("a", "b")), ParseError);
  CHECK_THROWS_AS(ColumnSpec::parse_list("a,,b"), ValidationError);
}

TEST_CASE("quoting, BOM and line endings", "[io]") {
  const auto table = parse_csv("\xEF\xBB\xBF\"name, with comma\",\"q\"\"uote\"\r\n\" 1.5\",2\r\n");
  REQUIRE(table.header.size() == 2);
  CHECK(table.header[0] == "name, with comma");
  CHECK(table.header[1] == "q\"uote");
  const auto data = to_dataset(table, columns("0", "1"));
  CHECK(data.responses(0, 0) == 1.5);

  const auto multiline = parse_csv("a,b\n\"line\none\",2\n3,4\n");
  REQUIRE(multiline.rows.size() == 2);
  CHECK(multiline.rows[0][0] == "line\none");
  CHECK(multiline.lines[1] == 4);
  CHECK(csv_quote("plain") == "plain");
  CHECK(csv_quote("a\"b") == "\"a\"\"b\"");
}

TEST_CASE("write then read preserves values exactly", "[io][property]") {
  RandomStream rng(81, 0);
  Dataset data = dataset1(200, 81);
  data.covariates(0, 0) = std::numeric_limits<double>::denorm_min();
  data.covariates(1, 0) = -std::numeric_limits<double>::max();
  data.responses(2, 1) = 0.1 + 0.2;
  for (Eigen::Index i = 3; i < 50; ++i) data.responses(i, 0) = std::ldexp(rng.uniform(), static_cast<int>(rng.below(200)) - 100);

  std::ostringstream os;
  write_csv(os, data);
  const auto back = to_dataset(parse_csv(os.str()), columns("y1,y2", "x1,x2", "label"));
  CHECK(back.covariates == data.covariates);
  CHECK(back.responses == data.responses);
  REQUIRE(back.labels);
  CHECK(back.label_names.size() == 2);

  const auto dir = std::filesystem::temp_directory_path() / "emcwm_test_io";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "roundtrip.csv").string();
  write_csv(path, data);
  CHECK(read_file(path) == os.str());

  for (double v : {1.0 / 3.0, 1e-300, 123456789.123456789, -0.0, 5e-324}) CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("standardization", "[io]") {
  Dataset data = dataset1(100, 83);
  const Dataset raw = data;
  data.covariates.col(1).setConstant(4.0);
  const auto s = standardize(data);
  CHECK(data.covariates.col(0).mean() == Catch::Approx(0.0).margin(1e-12));
  CHECK((data.covariates.col(0).squaredNorm() / 99.0) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(data.covariates.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.covariate_scale[1] == 1.0);
  const Eigen::VectorXd restored = data.responses.col(1) * s.response_scale[1] + Eigen::VectorXd::Constant(100, s.response_center[1]);
  CHECK((restored - raw.responses.col(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("content hash", "[io]") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
}
