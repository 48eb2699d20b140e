#pragma once

// Model Kähler surfaces given by Kähler potentials on affine charts.
//
// Chart coordinates are real: x = (x0, x1, x2, x3) with z1 = x0 + i x1 and
// z2 = x2 + i x3. The complex structure is the standard one, J d/dx0 = d/dx1,
// J d/dx2 = d/dx3, and it is constant in every chart because the transition
// maps are holomorphic. A potential phi determines the Riemannian metric
//
//     g(X, Y) = (1/4) [ D^2 phi(X, Y) + D^2 phi(JX, JY) ],
//
// which is g = Re(phi_{a b-bar} X^a conj(Y^b)); phi = |z|^2 gives the identity.
// The Kähler form is omega(X, Y) = g(JX, Y).
//
// Curvature convention: R(X, Y, Z, W) = g(R(X, Y) W, Z) with
// R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y], so that R(X, Y, X, Y) is the
// sectional curvature times |X ^ Y|^2 and the round sphere is positive. Under
// this convention the Fubini-Study potential (1/s) log(1 + |z|^2) has constant
// holomorphic sectional curvature 4s, Ricci = 6s g and scalar curvature 24s.

#include <optional>
#include <string>
#include <vector>

#include "smcf/tensor.hpp"

namespace smcf {

enum class ModelKind {
  FlatC2,
  FubiniStudy,
  PerturbedFS,
  // Negative controls: the complex hyperbolic ball (k1 < 0) and an indefinite
  // (non-plurisubharmonic) potential.
  ComplexHyperbolic,
  Indefinite,
};

// Compactly supported perturbations of the Fubini-Study potential, defined in
// chart 0 with t = |z|^2 / rho^2, bump(t) = exp(1 - 1/(1 - t)) for t < 1 and
// the damping w(t) = exp(-16 t):
//   RadialBump:  psi = |z|^4 bump(t) w(t)             (U(2)-invariant)
//   MixedBump:   psi = |z1|^2 |z2|^2 bump(t) w(t)  (breaks U(2) symmetry)
// With rho = 1, k2/k1 grows roughly like 1 + |epsilon|; RadialBump at
// epsilon = 1 already has k2/k1 > 2.
enum class Perturbation { RadialBump, MixedBump };

enum class DerivativeMode { Analytic, FiniteDifference };

struct ModelSpec {
  ModelKind kind = ModelKind::FubiniStudy;
  double scale = 1.0;
  double epsilon = 0.0;
  Perturbation perturbation = Perturbation::RadialBump;
  double bump_radius = 1.0;
  // Derivatives of the perturbation term; the Fubini-Study part is always exact.
  DerivativeMode perturbation_derivatives = DerivativeMode::FiniteDifference;
  double fd_step = 1e-3;
  double chart_radius = 10.0;
  double margin_fraction = 0.1;
};

std::string to_string(ModelKind kind);
std::string to_string(Perturbation p);
std::string to_string(DerivativeMode m);
ModelKind parse_model_kind(const std::string& s);
Perturbation parse_perturbation(const std::string& s);
DerivativeMode parse_derivative_mode(const std::string& s);

struct ChartPoint {
  int chart = 0;
  Vec4 x = Vec4::Zero();
};

struct MetricData {
  ChartPoint point;
  Mat4 g;
  Mat4 g_inv;
  Mat4 J;      // J(:, j) = components of J applied to the j-th coordinate vector
  Mat4 omega;  // omega(i, j) = g(J e_i, e_j)
};

struct CurvatureTensor {
  ChartPoint point;
  Tensor4 R;  // R(i, j, k, l) = R(e_i, e_j, e_k, e_l)
  Mat4 ricci;
  double scalar = 0.0;
};

struct Residual {
  std::string name;
  double value = 0.0;
  bool passed = false;
};

struct KahlerReport {
  ChartPoint point;
  double tolerance = 0.0;
  std::vector<Residual> residuals;
  bool passed = false;
  std::string failure;  // name of the first failing residual, empty on pass
};

// Chart-coordinate derivatives of the metric.
struct MetricJet {
  Mat4 g;
  std::array<Mat4, 4> dg;                  // dg[m](i, j) = d_m g_ij
  std::array<std::array<Mat4, 4>, 4> ddg;  // ddg[m][n](i, j) = d_m d_n g_ij
};

// Standard complex structure in chart coordinates.
Mat4 standard_complex_structure();

class AmbientModel {
 public:
  explicit AmbientModel(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::string describe() const;
  int chart_count() const { return chart_count_; }
  bool is_flat() const { return spec_.kind == ModelKind::FlatC2; }
  bool finite_difference_curvature() const;

  double chart_radius() const;
  double margin() const { return spec_.margin_fraction * chart_radius(); }
  bool in_domain(const ChartPoint& p) const;
  void require_in_domain(const ChartPoint& p) const;

  // Coordinates of p in chart `to`, when p lies in that chart.
  std::optional<Vec4> to_chart(const ChartPoint& p, int to) const;
  // Real Jacobian of the transition map from p.chart to `to`, evaluated at p.
  Mat4 transition_jacobian(const ChartPoint& p, int to) const;
  // The chart in which p is farthest from the chart boundary.
  ChartPoint best_chart(const ChartPoint& p) const;

  MetricData metric_at(const ChartPoint& p) const;
  // gamma(k, i, j) = Gamma^k_{ij}
  Tensor3 christoffels_at(const ChartPoint& p) const;
  CurvatureTensor riemann_at(const ChartPoint& p) const;
  KahlerReport check_kahler(const ChartPoint& p, double tol) const;

  // Metric and its first (order >= 1) and second (order >= 2) derivatives,
  // without domain or positivity checks.
  MetricJet metric_jet(const ChartPoint& p, int order) const;

 private:
  ModelSpec spec_;
  int chart_count_ = 1;
};

}  // namespace smcf
