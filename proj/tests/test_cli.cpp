#include "doctest.h"
#include "neckwave/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace neckwave;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// small but complete configuration: one branch class, coarse h values
std::string small_config(const std::string& out_dir) {
  std::ostringstream ss;
  ss << R"({
  "wave": {"h_list": [0.1, 0.05]},
  "propagation": {"steps": 12, "amp_floor": 1e-2, "branch_budget": 50000,
                  "window_r_lo": -1.45, "window_r_hi": -0.4, "window_th_half": 0.3},
  "grid": {"r_lo": -1.2, "r_hi": -0.9, "th_half": 0.2, "cells_per_h": 10},
  "verify": {"checks": ["supnorm", "nodal", "phase-decay"]},
  "output": ")" << out_dir << R"(",
  "seed": 7
})";
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing and validation") {
  const ExperimentConfig cfg = parse_config(R"({"seed": 3})");
  CHECK(cfg.seed == 3);
  CHECK(cfg.h_list == std::vector<double>{0.05, 0.02, 0.01});
  CHECK(cfg.cells_per_h == 10);
  CHECK(cfg.checks.empty());

  // seed is mandatory
  CHECK_THROWS_WITH_AS(parse_config("{}"), doctest::Contains("seed"), std::invalid_argument);
  // h_list must be strictly decreasing
  CHECK_THROWS_WITH_AS(parse_config(R"({"seed": 1, "wave": {"h_list": [0.02, 0.05]}})"),
                       doctest::Contains("decreasing"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"seed": 1, "wave": {"h_list": [0.05, 0.05]}})"),
                  std::invalid_argument);
  // under-resolved grid is rejected before any computation
  CHECK_THROWS_WITH_AS(parse_config(R"({"seed": 1, "grid": {"cells_per_h": 4}})"),
                       doctest::Contains("cells-per-h"), std::invalid_argument);
  // unknown check names
  CHECK_THROWS_AS(parse_config(R"({"seed": 1, "verify": {"checks": ["frobnicate"]}})"),
                  std::invalid_argument);
  // grid must sit inside the chart window
  CHECK_THROWS_AS(parse_config(R"({"seed": 1, "grid": {"r_lo": -2.5, "r_hi": -0.5}})"),
                  std::invalid_argument);
  // malformed json
  CHECK_THROWS_AS(parse_config("{nope"), std::invalid_argument);
}

TEST_CASE("config hash") {
  const ExperimentConfig a = parse_config(R"({"seed": 3})");
  const ExperimentConfig b = parse_config(R"({"seed": 3})");
  ExperimentConfig c = a;
  c.steps = 41;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  // output location does not change the experiment identity
  ExperimentConfig d = a;
  d.out_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(d));
}

TEST_CASE("flat neck fails the pressure gate") {
  ExperimentConfig cfg = parse_config(R"({"seed": 1, "verify": {"checks": ["pressure"]}})");
  cfg.bump_amplitude = 0.0;
  cfg.out_dir = (fs::temp_directory_path() / "neckwave_flat").string();
  CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("trapped set not hyperbolic"),
                       std::runtime_error);
}

TEST_CASE("run pipeline and determinism") {
  const fs::path base = fs::temp_directory_path() / "neckwave_cli";
  fs::remove_all(base);
  const std::string out1 = (base / "run1").string(), out2 = (base / "run2").string();

  const RunResult r1 = run_experiment(parse_config(small_config(out1)));
  CHECK(r1.pass);
  for (const CheckRow& row : r1.rows) CHECK(row.pass);
  // one conservation row, three supnorm bands, nodal, phase-decay
  CHECK(r1.rows.size() == 6);

  // artifacts
  CHECK(fs::exists(fs::path(out1) / "geometry.csv"));
  CHECK(fs::exists(fs::path(out1) / "branches.csv"));
  CHECK(fs::exists(fs::path(out1) / "branch_000.csv"));
  CHECK(fs::exists(fs::path(out1) / "field_h0.1.csv"));
  CHECK(fs::exists(fs::path(out1) / "field_h0.05.csv"));
  CHECK(fs::exists(fs::path(out1) / "verify.csv"));
  CHECK(fs::exists(fs::path(out1) / "manifest.json"));

  // identical config and seed reproduce every artifact bitwise
  const RunResult r2 = run_experiment(parse_config(small_config(out2)));
  CHECK(r2.pass);
  for (const char* name : {"geometry.csv", "branches.csv", "branch_000.csv", "field_h0.1.csv",
                           "field_h0.05.csv", "verify.csv", "manifest.json"})
    CHECK(slurp(fs::path(out1) / name) == slurp(fs::path(out2) / name));

  // branch manifest has the direct class only at this floor
  const std::string branches = slurp(fs::path(out1) / "branches.csv");
  CHECK(branches.find("0,0,9,") != std::string::npos);
}

TEST_CASE("command line binary") {
  // the binary sits next to the test directory in the build tree
  const fs::path bin = fs::path("..") / "neckwave";
  if (!fs::exists(bin)) {
    WARN_MESSAGE(false, "cli binary not found; skipping subprocess checks");
    return;
  }
  const fs::path base = fs::temp_directory_path() / "neckwave_cli_bin";
  fs::remove_all(base);
  fs::create_directories(base);

  const std::string geo = bin.string() + " --out " + (base / "g").string() + " geometry-report";
  CHECK(std::system(geo.c_str()) == 0);
  CHECK(fs::exists(base / "g" / "geometry.csv"));

  // invalid config exits with a distinct error status
  {
    std::ofstream(base / "bad.json") << R"({"seed": 1, "grid": {"cells_per_h": 4}})";
    const std::string cmd = bin.string() + " --config " + (base / "bad.json").string() +
                            " run 2> " + (base / "err.txt").string();
    const int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) == 2);
    CHECK(slurp(base / "err.txt").find("cells-per-h") != std::string::npos);
  }
}
