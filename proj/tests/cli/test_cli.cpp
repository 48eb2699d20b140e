#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "smcf/cli.hpp"

using namespace smcf;
using namespace smcf::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("smcf_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json summary(const fs::path& dir) { return json::parse(slurp(dir / "summary.json")); }

std::string error_of(const std::string& text, const Overrides& o = {}) {
  try {
    parse_config(text, "cfg.json", o);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_tool(const std::string& args) {
  const int status = std::system((std::string(SMCF_TOOL) + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Cli, MinimalConfigGetsDefaults) {
  const RunConfig c = parse_config(R"({"command": "verify-identities", "sampling": {"seed": 7}})");
  EXPECT_EQ(c.command, Command::VerifyIdentities);
  EXPECT_EQ(c.model.kind, ModelKind::FubiniStudy);
  EXPECT_EQ(c.model.scale, 1.0);
  EXPECT_EQ(c.sampling.samples, 1000);
  EXPECT_EQ(*c.sampling.seed, 7u);
  EXPECT_EQ(c.output, "out");
  EXPECT_EQ(default_tolerances(c).at("polarization"), 1e-6);
  const std::string echo = config_echo(c);
  EXPECT_EQ(config_echo(parse_config(echo)), echo);
  EXPECT_NE(echo.find("\"tolerances\""), std::string::npos);
}

TEST(Cli, FiniteDifferenceModelsGetLooserIdentityTolerance) {
  const RunConfig c = parse_config(
      R"({"command": "verify-identities", "model": {"kind": "PerturbedFS", "epsilon": 0.01}, "sampling": {"seed": 1}})");
  EXPECT_EQ(default_tolerances(c).at("mixed"), 1e-4);
}

TEST(Cli, UnknownKeysAreRejectedByName) {
  EXPECT_NE(error_of(R"({"command": "thresholds", "modle": {}})").find("modle"), std::string::npos);
  EXPECT_NE(error_of(R"({"command": "thresholds", "model": {"scle": 2}})").find("model.scle"), std::string::npos);
  EXPECT_NE(error_of(R"({"command": "flow-run", "model": {"kind": "FlatC2"},
                        "patch": {"kind": "round_sphere", "n": 3}})")
                .find("patch.n"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"command": "thresholds", "tolerances": {"polarization": 1}})").find("tolerances.polarization"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"command": "bogus"})").find("bogus"), std::string::npos);
  EXPECT_NE(error_of(R"({"command": "thresholds", "flow": {"dt_safety": "big"}})").find("flow.dt_safety"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"command": "thresholds", "flow": {"dt_safety": 2}})").find("dt_safety"), std::string::npos);
  EXPECT_NE(error_of(R"({"sampling": {}})").find("command"), std::string::npos);
}

TEST(Cli, ParseErrorsCarryLineAndColumn) {
  const std::string e = error_of("{\n  \"command\": ,\n}");
  EXPECT_EQ(e.rfind("cfg.json:2:", 0), 0u) << e;
  EXPECT_NE(e.find("parse error"), std::string::npos);
}

TEST(Cli, SamplingCommandsNeedSeed) {
  const std::string text = R"({"command": "ric-check"})";
  EXPECT_NE(error_of(text).find("sampling.seed"), std::string::npos);
  Overrides o;
  o.seed = 11;
  EXPECT_EQ(error_of(text, o), "");
  EXPECT_EQ(error_of(R"({"command": "thresholds"})"), "");
  EXPECT_EQ(error_of(R"({"command": "flow-run", "pinching": {"k1": 4, "k2": 4}})"), "");
  EXPECT_NE(error_of(R"({"command": "flow-run"})").find("sampling.seed"), std::string::npos);
}

TEST(Cli, ToleranceOverrides) {
  RunConfig c = parse_config(R"({"command": "verify-identities", "sampling": {"seed": 7}})");
  apply_tolerance_override(c, "polarization=1e-3");
  EXPECT_EQ(c.tolerances.at("polarization"), 1e-3);
  EXPECT_THROW(apply_tolerance_override(c, "bogus=1"), ConfigError);
  EXPECT_THROW(apply_tolerance_override(c, "polarization=abc"), ConfigError);
  EXPECT_THROW(apply_tolerance_override(c, "polarization"), ConfigError);
  Overrides o;
  o.tolerances = {"mixed=2e-6"};
  EXPECT_EQ(parse_config(R"({"command": "verify-identities", "sampling": {"seed": 7}})", "x", o).tolerances.at("mixed"),
            2e-6);
}

TEST(Cli, ThresholdTableCommand) {
  const fs::path dir = scratch("thresholds");
  Overrides o;
  o.output = dir.string();
  const RunResult r = run_command(parse_config(R"({"command": "thresholds"})", "x", o));
  EXPECT_EQ(r.exit_code, 0) << r.error;
  std::istringstream csv(slurp(dir / "thresholds.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "lambda,regime,delta_star,C_at_0.95,C_at_0.99");
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("1,I,0,", 0), 0u);
  int rows = 1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 100);
  const json s = summary(dir);
  EXPECT_EQ(s["status"], "pass");
  EXPECT_EQ(s["complete"], true);
  EXPECT_EQ(s["version"], version());
  EXPECT_TRUE(s["seed"].is_null());
  EXPECT_EQ(s["config"]["thresholds"]["rows"], 100);
  EXPECT_EQ(s["metrics"]["delta_star_first"], 0.0);
}

TEST(Cli, IdentitiesAreDeterministic) {
  const fs::path dir = scratch("identities");
  Overrides o;
  o.output = dir.string();
  const RunConfig c = parse_config(
      R"({"command": "verify-identities", "sampling": {"seed": 3, "samples": 50, "sff_samples": 1000}})", "x", o);
  ASSERT_EQ(run_command(c).exit_code, 0);
  const std::string a = slurp(dir / "identities.csv"), sa = slurp(dir / "summary.json");
  ASSERT_EQ(run_command(c).exit_code, 0);
  EXPECT_EQ(slurp(dir / "identities.csv"), a);
  EXPECT_EQ(slurp(dir / "summary.json"), sa);
  const json s = summary(dir);
  EXPECT_EQ(s["seed"], 3);
  std::vector<std::string> names;
  for (const auto& ch : s["checks"]) names.push_back(ch["name"]);
  EXPECT_EQ(names, (std::vector<std::string>{"polarization_identity", "mixed_identity", "kahler_structure",
                                              "adapted_frame_residual", "nabla_J_dominates_half_H"}));
  Overrides other = o;
  other.seed = 4;
  ASSERT_EQ(run_command(parse_config(R"({"command": "verify-identities", "sampling": {"samples": 50, "sff_samples": 1000}})",
                                     "x", other))
                .exit_code,
            0);
  EXPECT_NE(slurp(dir / "identities.csv"), a);
}

TEST(Cli, FailingCheckGivesExitOne) {
  const fs::path dir = scratch("fail");
  Overrides o;
  o.output = dir.string();
  o.tolerances = {"polarization=1e-30"};
  const RunResult r = run_command(parse_config(
      R"({"command": "verify-identities", "sampling": {"seed": 3, "samples": 20, "sff_samples": 10}})", "x", o));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(summary(dir)["status"], "fail");
}

TEST(Cli, ShrinkingSphereFlowRun) {
  const fs::path dir = scratch("sphere");
  Overrides o;
  o.output = dir.string();
  const RunResult r = run_command(parse_config(R"({"command": "flow-run", "model": {"kind": "FlatC2"},
      "patch": {"kind": "round_sphere", "radius": 1.0, "nu": 24, "nv": 24, "stretch": [0.6, 0.13], "stencil_order": 4},
      "flow": {"dt_safety": 1.0, "time_horizon": 0.1, "max_steps": 1000000, "record_every": 1000}})",
                                               "x", o));
  EXPECT_EQ(r.exit_code, 0) << r.error;
  const json s = summary(dir);
  bool found = false;
  for (const auto& ch : s["checks"])
    if (ch["name"] == "sphere_area_law") {
      found = true;
      EXPECT_TRUE(ch["passed"].get<bool>());
      EXPECT_LE(ch["value"].get<double>(), 1e-2);
    }
  EXPECT_TRUE(found);
  EXPECT_TRUE(fs::exists(dir / "diagnostics.csv"));
  EXPECT_TRUE(fs::exists(dir / "final_state.csv"));
  EXPECT_EQ(s["metrics"]["stop"], "time_horizon");
}

TEST(Cli, WidePinchingIsMarkedHypothesisViolated) {
  const fs::path dir = scratch("wide");
  Overrides o;
  o.output = dir.string();
  const RunResult r = run_command(parse_config(R"({"command": "flow-run",
      "model": {"kind": "PerturbedFS", "epsilon": 0.5}, "pinching": {"k1": 1.0, "k2": 2.5},
      "patch": {"kind": "antiholomorphic_graph", "n": 13}, "flow": {"max_steps": 5}})",
                                               "x", o));
  EXPECT_EQ(r.exit_code, 0) << r.error;
  const json h = summary(dir)["metrics"]["hypothesis"];
  EXPECT_FALSE(h["met"].get<bool>());
  EXPECT_NE(h["note"].get<std::string>().find("hypothesis violated"), std::string::npos);
  for (const CheckResult& c : r.checks)
    if (c.name == "kahler_angle_monotone" || c.name == "evolution_inequality") EXPECT_FALSE(c.gating);
}

TEST(Cli, RuntimeErrorsFlushAnIncompleteSummary) {
  const fs::path dir = scratch("error");
  Overrides o;
  o.output = dir.string();
  const RunResult r = run_command(parse_config(
      R"({"command": "flow-run", "model": {"kind": "FlatC2"}, "patch": {"kind": "csv", "path": "/nonexistent.csv"}})", "x",
      o));
  EXPECT_EQ(r.exit_code, 2);
  const json s = summary(dir);
  EXPECT_EQ(s["status"], "error");
  EXPECT_EQ(s["complete"], false);
  EXPECT_FALSE(s["error"].get<std::string>().empty());
}

TEST(Cli, RicCheckWritesDiscrepancyReport) {
  const fs::path dir = scratch("ric");
  Overrides o;
  o.output = dir.string();
  const RunResult r = run_command(parse_config(
      R"({"command": "ric-check", "model": {"kind": "FubiniStudy", "scale": 0.5}, "pinching": {"k1": 2, "k2": 2},
          "sampling": {"seed": 5, "samples": 40}})",
      "x", o));
  EXPECT_EQ(r.exit_code, 0) << r.error;
  EXPECT_NE(slurp(dir / "ric_bound_discrepancy.txt").find("K3121_lower_coef48"), std::string::npos);
  for (const CheckResult& c : r.checks) {
    if (c.name == "K3121_lower_coef48") {
      EXPECT_FALSE(c.passed);
      EXPECT_FALSE(c.gating);
    } else {
      EXPECT_TRUE(c.passed) << c.name;
    }
  }
}

TEST(Cli, ToolExitCodes) {
  const fs::path dir = scratch("tool");
  fs::create_directories(dir);
  const fs::path cfg = dir / "t.json";
  std::ofstream(cfg) << R"({"command": "thresholds", "thresholds": {"rows": 10}})";
  const std::string base = "--config " + cfg.string() + " --out " + (dir / "out").string();
  EXPECT_EQ(run_tool(base), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));
  EXPECT_EQ(run_tool(base + " --tol continuity=1e-15 --tol continuity=1e-12"), 0);
  EXPECT_EQ(run_tool(base + " --tol bogus=1"), 2);
  EXPECT_EQ(run_tool("--config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_tool(""), 2);
  std::ofstream(cfg) << R"({"command": "verify-identities", "sampling": {"samples": 5, "sff_samples": 5}})";
  EXPECT_EQ(run_tool(base), 2);
  EXPECT_EQ(run_tool(base + " --seed 9"), 0);
  EXPECT_EQ(run_tool(base + " --seed 9 --tol polarization=1e-30"), 1);
}
