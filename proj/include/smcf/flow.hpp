#pragma once

// Mean curvature flow dF/dt = H by forward Euler on a structured patch, with
// tracking of the Kähler angle and discrete checks of its evolution equation
//   (d/dt - Laplacian) cos a = |nabla J|^2 cos a + sin^2 a Ric(J e1, e2).

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "smcf/ambient.hpp"
#include "smcf/bounds.hpp"
#include "smcf/surface.hpp"

namespace smcf {

struct FlowConfig {
  // dt = dt_safety * min over interior nodes of min(hu^2 g_uu, hv^2 g_vv) / 4, every step.
  double dt_safety = 0.5;
  long max_steps = 100000;
  double H_blowup_factor = 1e3;  // stop once max|H| > factor * (initial max|H| + 1)
  double min_det = 1e-10;        // stop once det g drops below this at an interior node
  double time_horizon = std::numeric_limits<double>::infinity();
  int record_every = 1;  // record a (state, next state) pair every this many steps
  std::uint64_t seed = 0;

  void validate() const;
};

enum class StopReason { MaxSteps, TimeHorizon, CurvatureBlowup, DegenerateMetric, Error };
std::string to_string(StopReason r);

struct StepResult {
  SurfacePatch patch;
  double dt = 0.0;
  double max_H = 0.0;
  double min_det = 0.0;
};

// Mean curvature and CFL step for a fixed grid and model, reused across steps.
class FlowStepper {
 public:
  FlowStepper(const AmbientModel& model, const GridSpec& grid);

  // H at every node (zero at frozen boundary nodes) plus interior min det g and min spacing.
  void mean_curvature(const SurfacePatch& patch, std::vector<Vec4>& H, double& min_det, double& min_spacing_sq) const;
  // One Euler step; dt is capped by dt_cap. Throws FlowError tagged with step_index on
  // dt underflow (< 1e-12), a degenerate metric or a node leaving every chart.
  StepResult step(const SurfacePatch& patch, const FlowConfig& config, long step_index,
                  double dt_cap = std::numeric_limits<double>::infinity()) const;
  const StencilTable& table() const { return table_; }

 private:
  const AmbientModel& model_;
  StencilTable table_;
  bool fast_ = false;       // flat single-chart model: dedicated kernel
  int width_ = 1;           // stencil half-width
  std::vector<int> box_;    // per node, (2w+1)^2 neighbour indices
  std::vector<double> d1_, d2_;
};

StepResult step(const SurfacePatch& patch, const AmbientModel& model, const FlowConfig& config);

struct Record {
  long step = 0;
  double time = 0.0;
  double dt = 0.0;
  SurfacePatch before, after;  // states at step and step + 1
};

struct DiagnosticsRow {
  long step = 0;
  double time = 0.0;
  double area = 0.0;
  double min_cos = 0.0, max_cos = 0.0;
  double min_cos_interior = 0.0;
  double min_cos_boundary = std::numeric_limits<double>::quiet_NaN();  // Dirichlet grids only
  double max_H = 0.0;
  double max_nabla_J_sq = 0.0;
};

struct Trajectory {
  std::vector<Record> records;
  std::vector<DiagnosticsRow> diagnostics;  // one per record, then the final state
  SurfacePatch final_patch;
  long steps = 0;
  double final_time = 0.0;
  StopReason stop = StopReason::MaxSteps;
  std::string message;
};

// Runs until a stop condition. Step errors end the run with StopReason::Error and the
// message of the FlowError; the trajectory up to that point is kept.
Trajectory run(const SurfacePatch& initial, const AmbientModel& model, const FlowConfig& config);

DiagnosticsRow diagnose(const AmbientModel& model, const SurfacePatch& patch, const StencilTable& table);

// Relative drops larger than rel_tol * area(0) between consecutive diagnostics rows.
int area_increase_count(const Trajectory& t, double rel_tol = 1e-3);

struct ResidualOptions {
  // Dirichlet grids: also skip nodes within this many rows of the frozen boundary,
  // i.e. nodes whose residual stencil reaches a frozen boundary node.
  int boundary_margin = 3;
};

struct ResidualField {
  std::vector<double> values;  // NaN at excluded nodes
  std::vector<double> sin_sq;  // sin^2 a averaged over the two states
  std::vector<double> ric_term;  // sin^2 a Ric(J e1, e2), averaged
  double max_abs = 0.0;
  double rms = 0.0;
  int count = 0;
};

bool residual_node(const GridSpec& grid, int node, const ResidualOptions& options);

// (c1 - c0) / dt - (1/2) sum over both states of (Laplacian c + |nabla J|^2 c + sin^2 Ric(J e1, e2)).
ResidualField evolution_residual(const AmbientModel& model, const Record& record, const ResidualOptions& options = {});
ResidualField evolution_residual(const AmbientModel& model, const Trajectory& t, std::size_t record_index,
                                 const ResidualOptions& options = {});

struct FlaggedNode {
  std::size_t record = 0;
  int node = 0;
  double slack = 0.0;
};

struct InequalityRecord {
  long step = 0;
  double time = 0.0;
  double min_slack = 0.0;
  double max_abs_residual = 0.0;
  int flagged = 0;
};

struct InequalityReport {
  bool hypothesis_met = false;
  std::string note;
  double C = 0.0;
  double tol_disc = 0.0;
  std::vector<InequalityRecord> records;
  std::vector<FlaggedNode> flagged;  // first 100
  int total_flagged = 0;
};

// slack = residual + avg(sin^2 Ric(J e1, e2)) - C avg(sin^2). Nodes with slack < -tol_disc are
// flagged; a negative tol_disc means 3x the max |residual| over the trajectory.
InequalityReport inequality_check(const AmbientModel& model, const Trajectory& t, const ThresholdProfile& profile,
                                  double tol_disc = -1.0, const ResidualOptions& options = {});

struct MonotonicityReport {
  std::vector<double> times;
  std::vector<double> interior_min;
  std::vector<double> boundary_min;  // empty unless Dirichlet
  double worst_drop = 0.0;           // largest decrease between consecutive entries
  bool passed = false;
};

MonotonicityReport monotonicity_report(const Trajectory& t, double tol = 1e-3);

// CSV exports.
void write_diagnostics_csv(std::ostream& os, const Trajectory& t);
void write_state_csv(std::ostream& os, const AmbientModel& model, const SurfacePatch& patch);

}  // namespace smcf
