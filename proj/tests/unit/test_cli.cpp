#include "generators.hpp"
#include "uqf/cli.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace uqf;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Index line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  Index n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("generate writes the requested rows") {
  const auto dir = testing::scratch_dir("cli_generate");
  const auto csv = (dir / "w.csv").string();
  auto r = run({"generate", "--kind", "white-noise", "--n", "500", "--seed", "3", "--out", csv});
  REQUIRE(r.code == cli::ok);
  CHECK(line_count(csv) == 501);
  const auto first = slurp(csv);
  REQUIRE(run({"generate", "--kind", "white-noise", "--n", "500", "--seed", "3", "--out", csv}).code == cli::ok);
  CHECK(slurp(csv) == first);
  CHECK(run({"generate", "--kind", "cos2-mediated", "--out", (dir / "c.csv").string()}).code == cli::ok);
  CHECK(line_count(dir / "c.csv") > 100);
}

TEST_CASE("configuration problems exit with 2") {
  CHECK(run({"generate", "--kind", "banana"}).code == cli::config_error);
  CHECK(run({"generate"}).code == cli::config_error);
  CHECK(run({"frobnicate"}).code == cli::config_error);
  CHECK(run({"experiment", "fig99"}).code == cli::config_error);
  CHECK(run({"generate", "--kind", "white-noise", "--n", "0"}).code == cli::config_error);
}

TEST_CASE("data problems exit with 3, missing real data with 4") {
  const auto dir = testing::scratch_dir("cli_errors");
  CHECK(run({"fit", "--data", (dir / "none.csv").string()}).code == cli::data_error);
  std::ofstream(dir / "bad.csv") << "x,y\n1,2\n2,oops\n";
  const auto r = run({"fit", "--data", (dir / "bad.csv").string(), "--model", (dir / "m").string()});
  CHECK(r.code == cli::data_error);
  CHECK(r.err.find("row") != std::string::npos);
  CHECK(run({"experiment", "dielectric", "--out-dir", dir.string()}).code == cli::missing_data);
}

TEST_CASE("fit then predict is deterministic and includes uncertainty") {
  const auto dir = testing::scratch_dir("cli_fit");
  const auto csv = (dir / "d.csv").string();
  REQUIRE(run({"generate", "--kind", "cos2-mediated", "--seed", "2", "--out", csv}).code == cli::ok);
  const auto model = (dir / "m.uqf").string();
  REQUIRE(run({"fit", "--data", csv, "--z-col", "z", "--use-x", "--use-y", "--trees", "20",
               "--min-samples-leaf", "5", "--seed", "4", "--model", model})
              .code == cli::ok);
  const auto p1 = (dir / "p1.csv").string(), p2 = (dir / "p2.csv").string();
  REQUIRE(run({"predict", "--model", model, "--data", csv, "--out", p1}).code == cli::ok);
  REQUIRE(run({"fit", "--data", csv, "--z-col", "z", "--use-x", "--use-y", "--trees", "20",
               "--min-samples-leaf", "5", "--seed", "4", "--model", (dir / "m2.uqf").string()})
              .code == cli::ok);
  CHECK(slurp(model) == slurp(dir / "m2.uqf"));
  REQUIRE(run({"predict", "--model", (dir / "m2.uqf").string(), "--data", csv, "--out", p2}).code == cli::ok);
  CHECK(slurp(p1) == slurp(p2));
  std::ifstream in(p1);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,z_pred,z_std");
  CHECK(line_count(p1) == line_count(csv));
}

TEST_CASE("tune writes a score table") {
  const auto dir = testing::scratch_dir("cli_tune");
  const auto csv = (dir / "d.csv").string();
  REQUIRE(run({"generate", "--kind", "linear", "--n", "200", "--out", csv}).code == cli::ok);
  const auto r = run({"tune", "--data", csv, "--candidates", "1,5,10", "--objective", "mse", "--trees", "10",
                      "--out", (dir / "t.csv").string()});
  REQUIRE(r.code == cli::ok);
  CHECK(line_count(dir / "t.csv") == 4);
  CHECK(run({"tune", "--data", csv, "--scheme", "sideways"}).code == cli::config_error);
}

TEST_CASE("experiment command prints a verdict and writes its report") {
  const auto dir = testing::scratch_dir("cli_experiment");
  const auto r = run({"experiment", "fig7", "--seeds", "1", "--out-dir", dir.string()});
  CHECK(r.code == cli::ok);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "fig7_report.json"));
  const auto d = run({"experiment", "diffraction", "--data",
                      (std::filesystem::path(UQF_SOURCE_DIR) / "data/fixtures/diffraction_standin.csv").string(),
                      "--out-dir", dir.string()});
  CHECK(d.code == cli::ok);
  CHECK(std::filesystem::exists(dir / "diffraction_report.json"));
}
