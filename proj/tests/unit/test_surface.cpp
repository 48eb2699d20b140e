#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "smcf/curvtools.hpp"
#include "smcf/errors.hpp"
#include "smcf/surface.hpp"

using namespace smcf;

namespace {

AmbientModel make(ModelKind kind, double scale = 1.0) {
  ModelSpec m;
  m.kind = kind;
  m.scale = scale;
  return AmbientModel(m);
}

double max_H(const PatchGeometry& geo, const SurfacePatch& patch) {
  double m = 0.0;
  for (int k = 0; k < patch.size(); ++k)
    if (!patch.is_boundary(k)) m = std::max(m, std::sqrt(mean_curvature_sq(geo.nodes[static_cast<std::size_t>(k)].sff)));
  return m;
}

}  // namespace

TEST(Surface, KahlerAngleOfCoordinatePlanes) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const MetricData m = flat.metric_at({0, Vec4::Zero()});
  const Vec4 e0 = Vec4::Unit(0), e2 = Vec4::Unit(2);
  EXPECT_NEAR(kahler_angle(m, e0, m.J * e0), 1.0, 1e-15);
  EXPECT_NEAR(kahler_angle(m, e0, -(m.J * e0)), -1.0, 1e-15);
  EXPECT_NEAR(kahler_angle(m, e0, e2), 0.0, 1e-15);
  EXPECT_NEAR(kahler_angle(m, e0, std::cos(0.3) * (m.J * e0) + std::sin(0.3) * e2), std::cos(0.3), 1e-14);
  EXPECT_THROW(kahler_angle(m, e0, 2.0 * e0), DegenerateError);
}

TEST(Surface, FrameResidualsOnRandomPlanes) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const ChartPoint p{0, Vec4(u(rng), u(rng), u(rng), u(rng))};
    const MetricData m = fs.metric_at(p);
    const Vec4 X = random_tangent(rng, m.g), Y = random_tangent(rng, m.g);
    const AdaptedFrame f = adapted_frame(m, X, Y);
    const FrameResiduals r = frame_residuals(m, f);
    EXPECT_LT(r.orthonormality, 1e-12);
    EXPECT_LT(r.omega_form, 1e-12);
    EXPECT_LT(r.j_form, 1e-12);
    EXPECT_LT(r.angle_identity, 1e-14);
    EXPECT_FALSE(f.fallback);
    EXPECT_GE(f.sin_alpha, 0.0);
  }
}

TEST(Surface, KahlerAngleIsInvariantUnderPlaneRotations) {
  const AmbientModel fs = make(ModelKind::FubiniStudy, 0.5);
  std::mt19937_64 rng(11);
  const ChartPoint p{0, Vec4(0.3, -0.2, 0.5, 0.1)};
  const MetricData m = fs.metric_at(p);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4 X = random_tangent(rng, m.g), Y = random_tangent(rng, m.g);
    const double c = kahler_angle(m, X, Y);
    const double t = 0.37 * trial;
    const Vec4 X2 = std::cos(t) * X + std::sin(t) * Y, Y2 = -std::sin(t) * X + std::cos(t) * Y;
    EXPECT_NEAR(kahler_angle(m, X2, Y2), c, 1e-12);
    EXPECT_NEAR(kahler_angle(m, 2.0 * X, 0.5 * X + 3.0 * Y), c, 1e-12);
    EXPECT_NEAR(kahler_angle(m, Y, X), -c, 1e-12);
  }
}

TEST(Surface, UnitKahlerAngleMeansComplexPlane) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  std::mt19937_64 rng(3);
  const MetricData m = fs.metric_at({0, Vec4(0.1, 0.7, -0.4, 0.2)});
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4 X = random_tangent(rng, m.g);
    const AdaptedFrame f = adapted_frame(m, X, m.J * X);
    EXPECT_NEAR(f.cos_alpha, 1.0, 1e-14);
    EXPECT_TRUE(f.fallback);
    // J-invariance: J e1 = e2 exactly in the frame.
    EXPECT_LT((m.J * f.e1 - f.e2).cwiseAbs().maxCoeff(), 1e-12);
    const FrameResiduals r = frame_residuals(m, f);
    EXPECT_LT(r.orthonormality, 1e-12);
    EXPECT_LT(r.omega_form, 1e-12);
    // A generic plane is not J-invariant and has cos alpha < 1.
    const Vec4 Y = random_tangent(rng, m.g);
    const double c = kahler_angle(m, X, Y);
    const Vec4 JX = m.J * X;
    const Vec4 r_y = Y - (Y.dot(m.g * X) / X.dot(m.g * X)) * X - (Y.dot(m.g * JX) / JX.dot(m.g * JX)) * JX;
    if (std::sqrt(r_y.dot(m.g * r_y)) > 1e-3) EXPECT_LT(std::abs(c), 1.0 - 1e-9);
  }
}

TEST(Surface, NablaJDominatesHalfMeanCurvature) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100000; ++trial) {
    SecondFundamentalForm s;
    for (int gam = 0; gam < 2; ++gam) {
      s.h[gam][0][0] = n(rng);
      s.h[gam][1][1] = n(rng);
      s.h[gam][0][1] = s.h[gam][1][0] = n(rng);
    }
    s.H3 = s.h[0][0][0] + s.h[0][1][1];
    s.H4 = s.h[1][0][0] + s.h[1][1][1];
    ASSERT_GE(nabla_J_norm_sq(s) + 1e-12, 0.5 * mean_curvature_sq(s));
  }
  SecondFundamentalForm s;
  s.h[0][0][0] = 1.0;
  s.H3 = 1.0;
  EXPECT_DOUBLE_EQ(nabla_J_norm_sq(s), 1.0);
  EXPECT_DOUBLE_EQ(mean_curvature_sq(s), 1.0);
}

TEST(Surface, AffinePlaneIsFlat) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const Vec4 a(1.0, 0.5, 0.0, 0.2), b(0.0, 0.3, 1.0, -0.4);
  const SurfacePatch patch = patches::affine_plane(9, 13, Vec4(0.1, 0.0, 0.0, 0.0), a, b, 0.0, 2.0, -1.0, 1.0);
  const PatchGeometry geo = compute_geometry(flat, patch, {true, true});
  const double wedge = std::sqrt(a.squaredNorm() * b.squaredNorm() - std::pow(a.dot(b), 2));
  EXPECT_NEAR(geo.area, wedge * 2.0 * 2.0, 1e-13);
  EXPECT_LT(max_H(geo, patch), 1e-12);
  EXPECT_LT(geo.max_asymmetry, 1e-12);
  for (const auto& ng : geo.nodes) {
    EXPECT_LT(ng.H.norm(), 1e-12);
    EXPECT_NEAR(ng.frame.cos_alpha, kahler_angle(flat, ng.point, a, b), 1e-13);
  }
  const InducedMetric im = induced_metric(flat, patch);
  EXPECT_NEAR(im.area, geo.area, 1e-13);
}

TEST(Surface, LaplacianOfQuadraticsAndConstants) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const SurfacePatch patch =
      patches::affine_plane(11, 11, Vec4::Zero(), Vec4::Unit(0), Vec4::Unit(2), -1.0, 1.0, -1.0, 1.0);
  std::vector<double> q, c(static_cast<std::size_t>(patch.size()), 3.5), lin;
  for (const auto& p : patch.nodes) {
    q.push_back(p.x[0] * p.x[0] + p.x[2] * p.x[2]);
    lin.push_back(2.0 * p.x[0] - p.x[2]);
  }
  const auto lq = surface_laplacian(flat, patch, q);
  const auto lc = surface_laplacian(flat, patch, c);
  const auto ll = surface_laplacian(flat, patch, lin);
  for (int k = 0; k < patch.size(); ++k) {
    if (patch.is_boundary(k)) {
      EXPECT_TRUE(std::isnan(lq[static_cast<std::size_t>(k)]));
      continue;
    }
    EXPECT_NEAR(lq[static_cast<std::size_t>(k)], 4.0, 1e-11);
    EXPECT_NEAR(lc[static_cast<std::size_t>(k)], 0.0, 1e-12);
    EXPECT_NEAR(ll[static_cast<std::size_t>(k)], 0.0, 1e-11);
  }
}

TEST(Surface, RoundSphereAreaCurvatureAndLaplacian) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const double r = 0.7;
  double prev_area = 0, prev_H = 0, prev_lap = 0;
  for (int n : {32, 64, 128}) {
    const SurfacePatch patch = patches::round_sphere(r, n, n, Vec4(0.1, 0.0, 0.0, 0.0), {0.3}, 4);
    const StencilTable table(patch.grid);
    const PatchGeometry geo = compute_geometry(flat, patch, table, {false, true});
    const double area_err = std::abs(geo.area - 4 * M_PI * r * r);
    double H_err = 0.0, c_max = 0.0;
    std::vector<double> height;
    for (const auto& ng : geo.nodes) {
      H_err = std::max(H_err, std::abs(std::sqrt(mean_curvature_sq(ng.sff)) - 2.0 / r));
      c_max = std::max(c_max, std::abs(ng.frame.cos_alpha - std::abs(ng.point.x[2]) / r * (ng.point.x[2] >= 0 ? 1 : -1)));
      height.push_back(ng.point.x[2]);
    }
    const auto lap = surface_laplacian(geo, table, height);
    double lap_err = 0.0;
    for (std::size_t k = 0; k < lap.size(); ++k) lap_err = std::max(lap_err, std::abs(lap[k] + 2.0 / (r * r) * height[k]));
    // The x0-x1 plane is complex, so cos alpha equals the normalized height.
    EXPECT_LT(c_max, 1e-3) << n;
    EXPECT_LT(geo.max_asymmetry, 1e-2) << n;
    if (n > 32) {
      EXPECT_GT(std::log2(prev_area / area_err), 1.9) << n;
      EXPECT_GT(std::log2(prev_H / H_err), 1.9) << n;
      EXPECT_GT(std::log2(prev_lap / lap_err), 1.9) << n;
    }
    prev_area = area_err;
    prev_H = H_err;
    prev_lap = lap_err;
  }
}

TEST(Surface, ComplexCurveIsMinimal) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  for (int n : {17, 33, 65}) {
    const SurfacePatch patch = patches::holomorphic_graph(n, 0.0, 0.0, 0.5, 0.5);
    const PatchGeometry geo = compute_geometry(fs, patch);
    const double h = 1.0 / (n - 1);
    const double H = max_H(geo, patch);
    EXPECT_LT(H, 50.0 * h * h) << n;
    for (const auto& ng : geo.nodes) EXPECT_NEAR(ng.frame.cos_alpha, 1.0, 1e-12);
    const auto fast = mean_curvature_vectors(fs, patch, StencilTable(patch.grid));
    for (int k = 0; k < patch.size(); ++k)
      if (!patch.is_boundary(k))
        EXPECT_LT((fast[static_cast<std::size_t>(k)] - geo.nodes[static_cast<std::size_t>(k)].H).norm(), 1e-9);
  }
}

TEST(Surface, FastMeanCurvatureMatchesFramedComputation) {
  const AmbientModel fs = make(ModelKind::FubiniStudy, 2.0);
  const SurfacePatch patch = patches::antiholomorphic_graph(33, 0.2, 0.35, 0.5);
  const StencilTable table(patch.grid);
  const PatchGeometry geo = compute_geometry(fs, patch, table, {true, true});
  double min_det = 0.0;
  const auto fast = mean_curvature_vectors(fs, patch, table, &min_det);
  EXPECT_GT(min_det, 0.01);
  for (int k = 0; k < patch.size(); ++k) {
    if (patch.is_boundary(k)) {
      EXPECT_EQ(fast[static_cast<std::size_t>(k)].norm(), 0.0);
      continue;
    }
    EXPECT_LT((fast[static_cast<std::size_t>(k)] - geo.nodes[static_cast<std::size_t>(k)].H).norm(), 1e-10);
  }
  // Kähler-Einstein: Ric(Je1, e2) = 6 s cos alpha.
  for (const auto& ng : geo.nodes) EXPECT_NEAR(ng.ric_Je1_e2, 12.0 * ng.frame.cos_alpha, 1e-10);
  const int centre = patch.index(16, 16);
  EXPECT_NEAR(geo.nodes[static_cast<std::size_t>(centre)].frame.cos_alpha, (1 - 0.04) / (1 + 0.04), 3e-3);
  EXPECT_LT(geo.max_asymmetry, 0.05);
}

TEST(Surface, ProjectiveLineAreaAndMinimality) {
  for (double s : {1.0, 0.5}) {
    const AmbientModel fs = make(ModelKind::FubiniStudy, s);
    double prev = 0.0;
    for (int n : {16, 32, 64}) {
      const SurfacePatch patch = patches::projective_line(fs, n, n);
      const PatchGeometry geo = compute_geometry(fs, patch, {false, true});
      const double err = std::abs(geo.area - M_PI / s);
      EXPECT_LT(err, 0.05 * M_PI / s);
      EXPECT_LT(max_H(geo, patch), 1e-8 + 20.0 / (n * n));
      for (const auto& ng : geo.nodes) EXPECT_NEAR(ng.frame.cos_alpha, 1.0, 1e-12);
      if (prev > 0.0) EXPECT_GT(std::log2(prev / err), 1.8);
      prev = err;
    }
  }
}

TEST(Surface, CliffordTorusIsLagrangian) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const SurfacePatch patch = patches::clifford_torus(1.0, 1.0, 32, 32, 4);
  const PatchGeometry geo = compute_geometry(flat, patch, {false, true});
  EXPECT_NEAR(geo.area, 4 * M_PI * M_PI, 1e-2);
  for (const auto& ng : geo.nodes) {
    EXPECT_NEAR(ng.frame.cos_alpha, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(mean_curvature_sq(ng.sff)), std::sqrt(2.0), 1e-3);
  }
}

TEST(Surface, GridValidationAndNeighbours) {
  GridSpec g;
  g.nu = 8;
  g.nv = 7;
  g.mode = BoundaryMode::PolarSphere;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g.nv = 8;
  g.validate();
  const StencilTable t(g);
  const Tap across = t.neighbour(g.nu * 0 + 1, -1, 0);
  EXPECT_TRUE(across.reflected);
  EXPECT_EQ(across.node, 0 * g.nv + 5);
  const Tap bottom = t.neighbour((g.nu - 1) * g.nv + 6, 2, 0);
  EXPECT_EQ(bottom.node, (g.nu - 2) * g.nv + 2);
  GridSpec d;
  d.nu = d.nv = 5;
  d.stencil_order = 4;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d.stencil_order = 2;
  EXPECT_EQ(StencilTable(d).neighbour(0, -1, 0).node, -1);
  EXPECT_EQ(parse_boundary_mode(to_string(BoundaryMode::DirichletFrozen)), BoundaryMode::DirichletFrozen);
  EXPECT_THROW(parse_boundary_mode("Open"), std::invalid_argument);
}

TEST(Surface, DegenerateImmersionIsReported) {
  const AmbientModel flat = make(ModelKind::FlatC2);
  const SurfacePatch line = patches::affine_plane(5, 5, Vec4::Zero(), Vec4::Unit(0), Vec4::Unit(0));
  try {
    compute_geometry(flat, line);
    FAIL() << "expected ImmersionError";
  } catch (const ImmersionError& e) {
    EXPECT_EQ(e.node(), 0);
  }
}

TEST(Surface, CsvRoundTrip) {
  const AmbientModel fs = make(ModelKind::FubiniStudy);
  const SurfacePatch patch = patches::projective_line(fs, 8, 12);
  std::stringstream ss;
  write_patch_csv(ss, patch);
  const SurfacePatch back = read_patch_csv(ss);
  EXPECT_EQ(back.grid.nu, 8);
  EXPECT_EQ(back.grid.mode, BoundaryMode::PolarSphere);
  ASSERT_EQ(back.size(), patch.size());
  for (int k = 0; k < patch.size(); ++k) {
    EXPECT_EQ(back.nodes[static_cast<std::size_t>(k)].chart, patch.nodes[static_cast<std::size_t>(k)].chart);
    EXPECT_EQ(back.nodes[static_cast<std::size_t>(k)].x, patch.nodes[static_cast<std::size_t>(k)].x);
  }
  std::stringstream bad("# grid nu=2\n");
  EXPECT_THROW(read_patch_csv(bad), std::runtime_error);
}
