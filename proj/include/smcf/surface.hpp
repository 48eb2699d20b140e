#pragma once

// Immersed surfaces on structured parameter grids.
//
// A patch stores one ambient chart point per node of an nu x nv grid in (u, v).
// Derivatives of the immersion are finite differences of node positions, each
// neighbour first converted into the chart of the node being evaluated.
//
// Boundary modes:
//   PeriodicBoth     u and v periodic, nodes at u0 + i (u1 - u0) / nu.
//   DirichletFrozen  nodes at u0 + i (u1 - u0) / (nu - 1); boundary nodes are
//                    held fixed by the flow and derivatives are one-sided there.
//   PolarSphere      latitude-longitude sphere, cell centred in u on (0, pi) and
//                    periodic in v on [0, 2 pi); stencils crossing a pole reflect
//                    to the antipodal meridian (i -> -1 - i, j -> j + nv/2).

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

#include "smcf/ambient.hpp"

namespace smcf {

enum class BoundaryMode { PeriodicBoth, DirichletFrozen, PolarSphere };

std::string to_string(BoundaryMode m);
BoundaryMode parse_boundary_mode(const std::string& s);

struct GridSpec {
  int nu = 0;
  int nv = 0;
  BoundaryMode mode = BoundaryMode::DirichletFrozen;
  double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;  // ignored for PolarSphere
  int stencil_order = 2;                          // 2, or 4 for PeriodicBoth / PolarSphere

  double hu() const;
  double hv() const;
  double u(int i) const;
  double v(int j) const;
  void validate() const;
};

struct SurfacePatch {
  GridSpec grid;
  std::vector<ChartPoint> nodes;  // node index i * nv + j

  int index(int i, int j) const { return i * grid.nv + j; }
  int size() const { return static_cast<int>(nodes.size()); }
  bool is_boundary(int node) const;
};

struct Tap {
  int node;
  double weight;
  bool reflected;  // the neighbour is reached through a pole (d/du changes sign there)
};

// Finite-difference weights at one node for the first and second parameter derivatives.
struct NodeStencil {
  std::vector<Tap> du, dv, duu, dvv, duv;
};

class StencilTable {
 public:
  explicit StencilTable(const GridSpec& grid);
  const NodeStencil& at(int node) const { return stencils_[static_cast<std::size_t>(node)]; }
  // Neighbour reached by moving (di, dj) grid steps, for |di|, |dj| <= 3; node = -1 outside a Dirichlet grid.
  Tap neighbour(int node, int di, int dj) const;
  const GridSpec& grid() const { return grid_; }

 private:
  GridSpec grid_;
  std::vector<NodeStencil> stencils_;
};

struct AdaptedFrame {
  Vec4 e1, e2, e3, e4;
  double cos_alpha = 1.0;
  double sin_alpha = 0.0;
  bool fallback = false;  // sin alpha < 1e-8: normal frame completed from chart basis vectors

  Mat4 matrix() const;  // columns e1..e4
};

struct FrameResiduals {
  double orthonormality = 0.0;  // max |F^T g F - I|
  double omega_form = 0.0;      // Kähler form in the dual frame vs the canonical form
  double j_form = 0.0;          // matrix of J in the frame vs the canonical form
  double angle_identity = 0.0;  // |cos^2 + sin^2 - 1|
};

// cos alpha of the oriented plane span{X, Y}, clamped to [-1, 1].
double kahler_angle(const MetricData& m, const Vec4& X, const Vec4& Y);
double kahler_angle(const AmbientModel& model, const ChartPoint& p, const Vec4& X, const Vec4& Y);
AdaptedFrame adapted_frame(const MetricData& m, const Vec4& X, const Vec4& Y);
AdaptedFrame adapted_frame(const AmbientModel& model, const ChartPoint& p, const Vec4& X, const Vec4& Y);
// Canonical matrix with rows J e_i = sum_j M(i, j) e_j.
Mat4 canonical_j_matrix(double cos_alpha, double sin_alpha);
FrameResiduals frame_residuals(const MetricData& m, const AdaptedFrame& f);

// Second fundamental form in the adapted frame: h[g][i][j] = <nabla_{e_i} e_j, e_{g+3}>.
struct SecondFundamentalForm {
  double h[2][2][2] = {};
  double H3 = 0.0, H4 = 0.0;
  double asymmetry = 0.0;  // raw |h_12 - h_21| from frame-field derivatives, when computed
};

double nabla_J_norm_sq(const SecondFundamentalForm& sff);
double mean_curvature_sq(const SecondFundamentalForm& sff);

struct NodeGeometry {
  ChartPoint point;
  Vec4 Fu, Fv, Fuu, Fuv, Fvv;  // chart components
  Mat2 g;                      // induced metric in (u, v)
  double sqrt_det = 0.0;
  MetricData metric;
  AdaptedFrame frame;
  SecondFundamentalForm sff;
  Vec4 H;  // mean curvature vector, chart components
  double nabla_J_sq = 0.0;
  double ric_Je1_e2 = 0.0;  // filled when curvature is requested
};

struct GeometryOptions {
  bool curvature = false;  // ambient Ricci along the surface
  bool asymmetry = false;  // frame-field estimate of the SFF asymmetry
};

struct PatchGeometry {
  std::vector<NodeGeometry> nodes;
  double area = 0.0;
  bool any_fallback = false;
  double max_asymmetry = 0.0;
};

PatchGeometry compute_geometry(const AmbientModel& model, const SurfacePatch& patch, const StencilTable& table,
                               const GeometryOptions& options = {});
PatchGeometry compute_geometry(const AmbientModel& model, const SurfacePatch& patch,
                               const GeometryOptions& options = {});

struct InducedMetric {
  std::vector<Mat2> g;
  std::vector<double> sqrt_det;
  double area = 0.0;
};

InducedMetric induced_metric(const AmbientModel& model, const SurfacePatch& patch);

// Quadrature weight of a node in the area sum (trapezoid for Dirichlet grids).
double area_weight(const GridSpec& grid, int node);

// Mean curvature vectors only, for time stepping. Boundary nodes of Dirichlet grids get zero.
// Optional outputs over interior nodes: min det g, and min(hu^2 g_uu, hv^2 g_vv).
std::vector<Vec4> mean_curvature_vectors(const AmbientModel& model, const SurfacePatch& patch,
                                         const StencilTable& table, double* min_det = nullptr,
                                         double* min_spacing_sq = nullptr);

// Laplace-Beltrami operator of the induced metric in divergence form. Boundary
// nodes of Dirichlet grids are excluded and hold NaN.
std::vector<double> surface_laplacian(const PatchGeometry& geo, const StencilTable& table,
                                      const std::vector<double>& field);
std::vector<double> surface_laplacian(const AmbientModel& model, const SurfacePatch& patch,
                                      const std::vector<double>& field);

// Patch catalog. Parameters are chart-0 coordinates unless noted.
namespace patches {

// o + u a + v b on a Dirichlet grid over [u0, u1] x [v0, v1].
SurfacePatch affine_plane(int nu, int nv, const Vec4& origin, const Vec4& a, const Vec4& b, double u0 = 0.0,
                          double u1 = 1.0, double v0 = 0.0, double v1 = 1.0);

// Round sphere of radius r about `center` in the (x0, x1, x2) space, with latitude
// theta(u) = u + sum_k stretch[k] sin(2 (k + 1) u). The map must be increasing; stretching
// enlarges the cells next to the poles, which sets the explicit time step.
SurfacePatch round_sphere(double r, int nu, int nv, const Vec4& center = Vec4::Zero(),
                          const std::vector<double>& stretch = {}, int stencil_order = 2);

// Graph z2 = amplitude * conj(z1) exp(-|z1|^2 / sigma^2) over the square |Re z1|, |Im z1| <= half_width.
SurfacePatch antiholomorphic_graph(int n, double amplitude, double sigma, double half_width);

// Holomorphic graph z2 = c0 + c1 z1 + c2 z1^2 over the same kind of square.
SurfacePatch holomorphic_graph(int n, std::complex<double> c0, std::complex<double> c1, std::complex<double> c2,
                               double half_width);

// The projective line z2 = 0 as a closed two-chart sphere, z1 = tan(u/2) e^{iv}.
SurfacePatch projective_line(const AmbientModel& model, int nu, int nv);

// Clifford torus (r1 e^{iu}, r2 e^{iv}), a periodic Lagrangian surface.
SurfacePatch clifford_torus(double r1, double r2, int nu, int nv, int stencil_order = 2);

}  // namespace patches

// CSV: one "# grid ..." metadata line, header node,chart,x0,x1,x2,x3, one row
// per node; numbers use the shortest representation that round-trips.
void write_patch_csv(std::ostream& os, const SurfacePatch& patch);
SurfacePatch read_patch_csv(std::istream& is);
void write_patch_csv(const std::string& path, const SurfacePatch& patch);
SurfacePatch read_patch_csv(const std::string& path);

std::string format_double(double v);

}  // namespace smcf
