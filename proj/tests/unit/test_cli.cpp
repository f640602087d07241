#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kConfigs = DEGSDE_CONFIG_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "degsde");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = degsde::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("degsde_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.toml";
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("check on the multicir config passes") {
  const auto d = fresh_dir("check");
  const auto r = run_cli({"check", "-c", kConfigs + "/multicir.toml", "-o", d.string()});
  INFO(r.err);
  REQUIRE(r.code == degsde::cli::kOk);
  const json rep = load(d / "check.json");
  CHECK(rep["format_version"] == 1);
  CHECK(rep["report"]["verdict"] == "pass");
  const json m = load(d / "manifest.json");
  CHECK(m["command"] == "check");
  CHECK(m["exit_code"] == 0);
  CHECK(m["outputs"][0] == "check.json");
  CHECK(m["config"]["seed"] == 20261018);
  CHECK(m["config"]["model"]["kind"] == "multicir");
  CHECK(m["runtime"].contains("seconds"));
  CHECK_FALSE(m.contains("error"));
}

TEST_CASE("a failing assumption exits with 1") {
  const auto d = fresh_dir("check_fail");
  const auto r = run_cli({"check", "-c", kConfigs + "/multicir.toml", "-o", d.string(), "--set", "model.mu=[0.1, 0.1]"});
  CHECK(r.code == degsde::cli::kVerdictFailure);
  CHECK(load(d / "check.json")["report"]["verdict"] == "fail");
  CHECK(load(d / "manifest.json")["exit_code"] == 1);
}

TEST_CASE("classify on the ball config") {
  const auto d = fresh_dir("classify");
  const auto r = run_cli({"classify", "-c", kConfigs + "/classify_ball.toml", "-o", d.string()});
  REQUIRE(r.code == 0);
  const json rep = load(d / "classify.json")["report"];
  REQUIRE(rep["verdicts"].size() == 2);
  for (const auto& v : rep["verdicts"]) CHECK(v["classification"] == "unattainable");

  const auto r1 = run_cli({"classify", "-c", kConfigs + "/classify_ball.toml", "-o", d.string(), "--set", "classify.kappa=1"});
  REQUIRE(r1.code == 0);
  CHECK(load(d / "classify.json")["report"]["verdicts"][1]["classification"] == "attainable");
}

TEST_CASE("usage and config errors exit with 2") {
  const auto d = fresh_dir("errors");
  CHECK(run_cli({"check", "-c", (d / "missing.toml").string(), "-o", d.string()}).code == degsde::cli::kUsage);
  CHECK(run_cli({}).code == degsde::cli::kUsage);
  CHECK(run_cli({"frobnicate"}).code == degsde::cli::kUsage);
  CHECK(run_cli({"check"}).code == degsde::cli::kUsage);

  const auto top = write_config(d, "seed = 1\nbogus = 2\n[classify]\nkind = \"bessel1d\"\nc = 2\n");
  auto r = run_cli({"classify", "-c", top.string(), "-o", d.string()});
  CHECK(r.code == degsde::cli::kUsage);
  CHECK(r.err.find("bogus") != std::string::npos);

  const auto inner = write_config(d, "[classify]\nkind = \"bessel1d\"\nc = 2\nextra = 1\n");
  r = run_cli({"classify", "-c", inner.string(), "-o", d.string()});
  CHECK(r.code == degsde::cli::kUsage);
  CHECK(r.err.find("extra") != std::string::npos);
  CHECK(load(d / "manifest.json")["exit_code"] == 2);

  const auto broken = write_config(d, "[classify\n");
  CHECK(run_cli({"classify", "-c", broken.string(), "-o", d.string()}).code == degsde::cli::kUsage);

  CHECK(run_cli({"check", "--help"}).code == degsde::cli::kOk);
}

TEST_CASE("simulate writes a trajectory csv") {
  const auto d = fresh_dir("simulate");
  const auto r = run_cli({"simulate", "-c", kConfigs + "/multicir.toml", "-o", d.string(), "--set", "simulate.dt=0.01"});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(d / "trajectory.csv");
  CHECK(csv.rfind("# format_version=1\nt,x1,x2\n", 0) == 0);
  const json m = load(d / "manifest.json");
  CHECK(m["outputs"] == json::array({"simulate.json", "trajectory.csv"}));
}

TEST_CASE("reports are byte-identical across thread counts") {
  const auto a = fresh_dir("threads1");
  const auto b = fresh_dir("threads4");
  const std::vector<std::string> base{"mc", "-c", kConfigs + "/multicir.toml", "--set", "mc.paths=400", "--set",
                                      "mc.dt=0.01"};
  auto args1 = base, args4 = base;
  args1.insert(args1.end(), {"--threads", "1", "-o", a.string()});
  args4.insert(args4.end(), {"--threads", "4", "-o", b.string()});
  REQUIRE(run_cli(args1).code == 0);
  REQUIRE(run_cli(args4).code == 0);
  CHECK(slurp(a / "mc.json") == slurp(b / "mc.json"));
  CHECK(load(b / "manifest.json")["runtime"]["threads"] == 4);
}

TEST_CASE("seed flag overrides the config and changes the report") {
  const auto a = fresh_dir("seed_a");
  const auto b = fresh_dir("seed_b");
  const std::vector<std::string> base{"simulate", "-c", kConfigs + "/multicir.toml", "--set", "simulate.dt=0.01"};
  auto args_a = base, args_b = base;
  args_a.insert(args_a.end(), {"-o", a.string()});
  args_b.insert(args_b.end(), {"--seed", "5", "-o", b.string()});
  REQUIRE(run_cli(args_a).code == 0);
  REQUIRE(run_cli(args_b).code == 0);
  CHECK(load(b / "manifest.json")["config"]["seed"] == 5);
  CHECK(slurp(a / "trajectory.csv") != slurp(b / "trajectory.csv"));
}

TEST_CASE("modulus and compare commands") {
  const auto d = fresh_dir("modulus");
  REQUIRE(run_cli({"modulus", "-c", kConfigs + "/modulus_sqrt.toml", "-o", d.string()}).code == 0);
  CHECK(fs::exists(d / "modulus.csv"));
  const auto c = run_cli({"compare", "-c", kConfigs + "/multicir.toml", "-o", d.string()});
  INFO(c.err);
  CHECK(c.code == 0);
  CHECK(fs::exists(d / "compare.csv"));
}
