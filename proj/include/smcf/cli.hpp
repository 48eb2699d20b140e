#pragma once

// Batch driver: JSON run configs, the verification suites, threshold tables and
// flow runs, with a JSON summary and CSV tables written to an output directory.
//
// Exit codes: 0 when every gating check passes, 1 when one fails, 2 on a
// configuration or domain error. Artifacts are byte-identical for identical
// (config, seed).

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcf/ambient.hpp"
#include "smcf/curvtools.hpp"
#include "smcf/flow.hpp"

namespace smcf::cli {

const char* version();

// Malformed or invalid configuration. The message names the offending field or
// the line and column of a parse error.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Command { VerifyIdentities, CurvatureRange, Thresholds, FlowRun, RicCheck };
std::string to_string(Command c);
Command parse_command(const std::string& s);

struct SamplingConfig {
  std::optional<std::uint64_t> seed;
  int samples = 1000;          // random (X, Y) pairs for the identity suites, frames for ric-check
  int sff_samples = 100000;    // random second fundamental forms
  double point_radius = 1.0;   // sample points of chart 0 with |x| <= point_radius
  int points = 16;             // curvature-range sampling, see SampleSpec
  int directions = 256;
  int refine_iterations = 60;
};

struct PatchConfig {
  std::string kind = "antiholomorphic_graph";
  int n = 33;  // graphs: n x n nodes
  int nu = 32, nv = 32;
  double amplitude = 0.2, sigma = 0.35, half_width = 0.5;
  std::complex<double> c0{0.0, 0.0}, c1{0.0, 0.0}, c2{0.0, 0.0};
  double radius = 1.0;
  Vec4 center = Vec4::Zero();
  std::vector<double> stretch;
  int stencil_order = 2;
  double r1 = 1.0, r2 = 1.0;
  Vec4 origin = Vec4::Zero(), a = Vec4::Unit(0), b = Vec4::Unit(2);
  std::string path;  // kind "csv"
};

struct ThresholdConfig {
  double lambda_start = 1.0;
  double lambda_step = 0.01;
  int rows = 100;
  std::vector<double> deltas{0.95, 0.99};
};

struct RunConfig {
  Command command = Command::VerifyIdentities;
  ModelSpec model;
  SamplingConfig sampling;
  PatchConfig patch;
  FlowConfig flow;
  ResidualOptions residual;
  ThresholdConfig thresholds;
  // Holomorphic sectional curvature bounds; estimated by sampling when absent.
  std::optional<double> k1, k2;
  std::string output = "out";
  std::map<std::string, double> tolerances;
};

// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tolerances;  // "name=value"
};

// Strict parsing: unknown keys, wrong types and out-of-range values are rejected.
// Overrides are applied before validation.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                       const Overrides& overrides = {});
RunConfig load_config(const std::string& path, const Overrides& overrides = {});

// Full configuration with defaults applied, as JSON text; parse_config accepts it back.
std::string config_echo(const RunConfig& config);

// Tolerance names a command understands, with their defaults for this config.
std::map<std::string, double> default_tolerances(const RunConfig& config);
// Parses "name=value" and stores it; throws ConfigError on malformed input or an unknown name.
void apply_tolerance_override(RunConfig& config, const std::string& assignment);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  bool gating = true;  // informational checks never change the exit code
  std::string note;
};

struct RunResult {
  int exit_code = 0;
  std::string status;  // "pass", "fail" or "error"
  std::vector<CheckResult> checks;
  std::vector<std::string> artifacts;  // file names inside the output directory
  std::string error;
};

// Runs the command and writes summary.json plus the command's CSV tables into
// config.output. On an error the summary still gets written, with status "error"
// and "complete": false, next to whatever tables were finished.
RunResult run_command(const RunConfig& config);

// Command-line entry point: --config, --out, --seed, --tol name=value (repeatable).
int main(int argc, char** argv);

}  // namespace smcf::cli
