#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "smcf/errors.hpp"
#include "smcf/flow.hpp"

using namespace smcf;

namespace {

AmbientModel make(ModelKind kind, double scale = 1.0) {
  ModelSpec m;
  m.kind = kind;
  m.scale = scale;
  return AmbientModel(m);
}

double mean_radius(const SurfacePatch& p, const Vec4& center) {
  double acc = 0.0;
  for (const auto& n : p.nodes) acc += (n.x - center).norm();
  return acc / p.size();
}

}  // namespace

TEST(Flow, PlaneIsStationary) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const SurfacePatch plane = patches::affine_plane(9, 9, Vec4(0.1, 0, 0, 0), Vec4(1, 0, 0.5, 0), Vec4(0, 1, 0, 0.3));
  FlowConfig cfg;
  const StepResult r = step(plane, flat, cfg);
  EXPECT_GT(r.dt, 0.0);
  EXPECT_LT(r.max_H, 1e-12);
  for (int k = 0; k < plane.size(); ++k) EXPECT_EQ(r.patch.nodes[static_cast<std::size_t>(k)].x, plane.nodes[static_cast<std::size_t>(k)].x);
  cfg.max_steps = 5;
  const Trajectory t = run(plane, flat, cfg);
  ASSERT_EQ(t.diagnostics.size(), 6u);
  for (const auto& d : t.diagnostics) {
    EXPECT_EQ(d.area, t.diagnostics.front().area);
    EXPECT_EQ(d.min_cos, t.diagnostics.front().min_cos);
  }
}

TEST(Flow, SphereStepFollowsRadiusOde) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const double r0 = 0.8;
  const SurfacePatch s = patches::round_sphere(r0, 32, 32, Vec4::Zero(), {0.45}, 4);
  FlowConfig cfg;
  const StepResult r = step(s, flat, cfg);
  double worst = 0.0;
  for (const auto& n : r.patch.nodes) worst = std::max(worst, std::abs(n.x.norm() - (r0 - r.dt * 2.0 / r0)));
  EXPECT_LT(worst, 1e-2 * r.dt * 2.0 / r0);
  EXPECT_NEAR(r.max_H, 2.0 / r0, 1e-2);
}

TEST(Flow, ComplexCurveBarelyMoves) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  for (int n : {17, 33}) {
    const SurfacePatch p = patches::holomorphic_graph(n, {0.1, 0.0}, {0.2, 0.1}, {0.5, 0.0}, 0.5);
    const StepResult r = step(p, fs, FlowConfig{});
    double disp = 0.0;
    for (int k = 0; k < p.size(); ++k)
      disp = std::max(disp, (r.patch.nodes[static_cast<std::size_t>(k)].x - p.nodes[static_cast<std::size_t>(k)].x).norm());
    const double h = 1.0 / (n - 1);
    EXPECT_LT(disp, 1.0 * r.dt * h * h) << n;
  }
}

TEST(Flow, ShrinkingSphereAreaLaw) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const double r0 = 1.0;
  const SurfacePatch s = patches::round_sphere(r0, 24, 24, Vec4(0.2, 0, 0, 0), {0.6, 0.13}, 4);
  FlowConfig cfg;
  cfg.dt_safety = 1.0;
  cfg.time_horizon = 0.15;
  cfg.record_every = 500;
  cfg.max_steps = 1000000;
  const Trajectory t = run(s, flat, cfg);
  EXPECT_EQ(t.stop, StopReason::TimeHorizon) << t.message;
  EXPECT_NEAR(t.final_time, 0.15, 1e-14);
  for (const auto& d : t.diagnostics) {
    const double exact = 4.0 * M_PI * (r0 * r0 - 4.0 * d.time);
    EXPECT_LT(std::abs(d.area - exact) / exact, 1e-2) << d.time;
  }
  EXPECT_EQ(area_increase_count(t), 0);
  EXPECT_NEAR(mean_radius(t.final_patch, Vec4(0.2, 0, 0, 0)), std::sqrt(1.0 - 0.6), 5e-3);
}

TEST(Flow, RunIsDeterministic) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  const SurfacePatch p = patches::antiholomorphic_graph(17, 0.2, 0.35, 0.5);
  FlowConfig cfg;
  cfg.max_steps = 20;
  cfg.record_every = 5;
  const Trajectory a = run(p, fs, cfg), b = run(p, fs, cfg);
  std::ostringstream sa, sb;
  write_diagnostics_csv(sa, a);
  write_diagnostics_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.records.size(), 4u);
  EXPECT_EQ(a.diagnostics.size(), 5u);
  EXPECT_EQ(a.stop, StopReason::MaxSteps);
}

TEST(Flow, HolomorphicResidualVanishes) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  for (const SurfacePatch& p : {patches::holomorphic_graph(17, 0.0, 0.0, 0.0, 0.5),
                                patches::holomorphic_graph(17, 0.0, {0.3, 0.1}, {0.5, 0.0}, 0.5)}) {
    FlowConfig cfg;
    cfg.max_steps = 3;
    const Trajectory t = run(p, fs, cfg);
    for (std::size_t i = 0; i < t.records.size(); ++i) EXPECT_LT(evolution_residual(fs, t, i).max_abs, 1e-8);
    const InequalityReport rep = inequality_check(fs, t, make_profile(4.0, 4.0, 1.0 - 1e-9));
    EXPECT_EQ(rep.total_flagged, 0);
    for (const auto& r : rep.records) EXPECT_NEAR(r.min_slack, 0.0, 1e-8);
    const MonotonicityReport m = monotonicity_report(t);
    EXPECT_TRUE(m.passed);
    for (double v : m.interior_min) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Flow, ResidualConvergesUnderRefinement) {
  for (ModelKind kind : {ModelKind::FlatC2, ModelKind::FubiniStudy}) {
    const AmbientModel model = make(kind);
    double prev = 0.0;
    for (int n : {32, 64}) {
      FlowConfig cfg;
      cfg.max_steps = 1;
      const Trajectory t = run(patches::antiholomorphic_graph(n, 0.2, 0.35, 0.5), model, cfg);
      const double r = evolution_residual(model, t, 0).max_abs;
      if (prev > 0.0) EXPECT_GT(std::log2(prev / r), 1.0);
      prev = r;
    }
  }
}

TEST(Flow, FubiniStudyGraphKeepsAngleMonotone) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  const SurfacePatch p = patches::antiholomorphic_graph(25, 0.2, 0.35, 0.5);
  FlowConfig cfg;
  cfg.time_horizon = 0.01;
  cfg.record_every = 10;
  const Trajectory t = run(p, fs, cfg);
  EXPECT_EQ(t.stop, StopReason::TimeHorizon);
  const MonotonicityReport m = monotonicity_report(t);
  EXPECT_TRUE(m.passed) << m.worst_drop;
  EXPECT_GT(m.interior_min.back(), m.interior_min.front());
  EXPECT_EQ(m.boundary_min.size(), m.interior_min.size());
  EXPECT_EQ(area_increase_count(t), 0);
  const double delta = t.diagnostics.front().min_cos;
  EXPECT_GE(delta, 0.9);
  const InequalityReport rep = inequality_check(fs, t, make_profile(4.0, 4.0, delta));
  EXPECT_TRUE(rep.hypothesis_met);
  EXPECT_NEAR(rep.C, 6.0 * delta, 1e-9);
  EXPECT_EQ(rep.total_flagged, 0);
}

TEST(Flow, NegativeCurvatureIsFlagged) {
  const AmbientModel hyp = make(ModelKind::ComplexHyperbolic);
  const SurfacePatch p = patches::antiholomorphic_graph(25, 0.4, 0.35, 0.4);
  FlowConfig cfg;
  cfg.max_steps = 30;
  cfg.record_every = 10;
  const Trajectory t = run(p, hyp, cfg);
  const InequalityReport rep = inequality_check(hyp, t, make_profile(-4.0, -1.0, 0.7));
  EXPECT_FALSE(rep.hypothesis_met);
  EXPECT_NE(rep.note.find("hypothesis violated"), std::string::npos);
  EXPECT_GT(rep.total_flagged, 0);
}

TEST(Flow, StopConditionsAndErrors) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  FlowConfig bad;
  bad.dt_safety = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = FlowConfig{};
  bad.record_every = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  const double tiny = 1e-7;
  const SurfacePatch small = patches::affine_plane(5, 5, Vec4::Zero(), tiny * Vec4::Unit(0), tiny * Vec4::Unit(2));
  FlowConfig cfg;
  cfg.min_det = 1e-40;
  try {
    step(small, flat, cfg);
    FAIL() << "expected FlowError";
  } catch (const FlowError& e) {
    EXPECT_NE(std::string(e.what()).find("underflow"), std::string::npos);
  }
  cfg = FlowConfig{};
  const Trajectory t = run(small, flat, cfg);
  EXPECT_EQ(t.stop, StopReason::DegenerateMetric);
  EXPECT_EQ(t.steps, 0);
}

TEST(Flow, StateCsvHasOneRowPerNode) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const SurfacePatch plane = patches::affine_plane(4, 4, Vec4::Zero(), Vec4::Unit(0), Vec4::Unit(1));
  std::ostringstream os;
  write_state_csv(os, flat, plane);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "node,i,j,chart,x0,x1,x2,x3,cos_alpha,H_norm,nabla_J_sq");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 16);
}
