#include "smcf/surface.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "smcf/errors.hpp"

namespace smcf {

std::string to_string(BoundaryMode m) {
  switch (m) {
    case BoundaryMode::PeriodicBoth: return "PeriodicBoth";
    case BoundaryMode::DirichletFrozen: return "DirichletFrozen";
    case BoundaryMode::PolarSphere: return "PolarSphere";
  }
  return "?";
}

BoundaryMode parse_boundary_mode(const std::string& s) {
  for (auto m : {BoundaryMode::PeriodicBoth, BoundaryMode::DirichletFrozen, BoundaryMode::PolarSphere})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown boundary mode '" + s + "'");
}

// ---------------------------------------------------------------- grid

double GridSpec::hu() const {
  switch (mode) {
    case BoundaryMode::PeriodicBoth: return (u1 - u0) / nu;
    case BoundaryMode::DirichletFrozen: return (u1 - u0) / (nu - 1);
    case BoundaryMode::PolarSphere: return M_PI / nu;
  }
  return 0.0;
}

double GridSpec::hv() const {
  switch (mode) {
    case BoundaryMode::PeriodicBoth: return (v1 - v0) / nv;
    case BoundaryMode::DirichletFrozen: return (v1 - v0) / (nv - 1);
    case BoundaryMode::PolarSphere: return 2.0 * M_PI / nv;
  }
  return 0.0;
}

double GridSpec::u(int i) const {
  if (mode == BoundaryMode::PolarSphere) return (i + 0.5) * hu();
  return u0 + i * hu();
}

double GridSpec::v(int j) const {
  if (mode == BoundaryMode::PolarSphere) return j * hv();
  return v0 + j * hv();
}

void GridSpec::validate() const {
  if (stencil_order != 2 && stencil_order != 4) throw std::invalid_argument("stencil_order must be 2 or 4");
  // One-sided second differences at a frozen edge use four points.
  const int min_n = stencil_order == 4 ? 5 : (mode == BoundaryMode::DirichletFrozen ? 4 : 3);
  if (nu < min_n || nv < min_n) throw std::invalid_argument("grid too small for the stencil");
  if (mode == BoundaryMode::DirichletFrozen && stencil_order != 2)
    throw std::invalid_argument("fourth-order stencils need a periodic or polar grid");
  if (mode == BoundaryMode::PolarSphere && nv % 2 != 0) throw std::invalid_argument("PolarSphere needs even nv");
  if (mode != BoundaryMode::PolarSphere && !(u1 > u0 && v1 > v0))
    throw std::invalid_argument("parameter box must have u1 > u0 and v1 > v0");
}

bool SurfacePatch::is_boundary(int node) const {
  if (grid.mode != BoundaryMode::DirichletFrozen) return false;
  const int i = node / grid.nv, j = node % grid.nv;
  return i == 0 || j == 0 || i == grid.nu - 1 || j == grid.nv - 1;
}

namespace {

using Weights1D = std::vector<std::pair<int, double>>;

Weights1D first_derivative(int order, int i, int n, bool bounded, double h) {
  if (bounded && i == 0) return {{0, -1.5 / h}, {1, 2.0 / h}, {2, -0.5 / h}};
  if (bounded && i == n - 1) return {{0, 1.5 / h}, {-1, -2.0 / h}, {-2, 0.5 / h}};
  if (order == 4) return {{-2, 1.0 / (12 * h)}, {-1, -8.0 / (12 * h)}, {1, 8.0 / (12 * h)}, {2, -1.0 / (12 * h)}};
  return {{-1, -0.5 / h}, {1, 0.5 / h}};
}

Weights1D second_derivative(int order, int i, int n, bool bounded, double h) {
  const double h2 = h * h;
  if (bounded && i == 0) return {{0, 2.0 / h2}, {1, -5.0 / h2}, {2, 4.0 / h2}, {3, -1.0 / h2}};
  if (bounded && i == n - 1) return {{0, 2.0 / h2}, {-1, -5.0 / h2}, {-2, 4.0 / h2}, {-3, -1.0 / h2}};
  if (order == 4)
    return {{-2, -1.0 / (12 * h2)}, {-1, 16.0 / (12 * h2)}, {0, -30.0 / (12 * h2)}, {1, 16.0 / (12 * h2)},
            {2, -1.0 / (12 * h2)}};
  return {{-1, 1.0 / h2}, {0, -2.0 / h2}, {1, 1.0 / h2}};
}

int wrap(int k, int n) { return ((k % n) + n) % n; }

}  // namespace

StencilTable::StencilTable(const GridSpec& grid) : grid_(grid) {
  grid_.validate();
  const int nu = grid_.nu, nv = grid_.nv;
  const bool bounded = grid_.mode == BoundaryMode::DirichletFrozen;
  const int order = grid_.stencil_order;
  stencils_.resize(static_cast<std::size_t>(nu * nv));
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const int node = i * nv + j;
      NodeStencil& s = stencils_[static_cast<std::size_t>(node)];
      const Weights1D d1u = first_derivative(order, i, nu, bounded, grid_.hu());
      const Weights1D d1v = first_derivative(order, j, nv, bounded, grid_.hv());
      const Weights1D d2u = second_derivative(order, i, nu, bounded, grid_.hu());
      const Weights1D d2v = second_derivative(order, j, nv, bounded, grid_.hv());
      auto tap = [&](int di, int dj, double w) {
        Tap t = neighbour(node, di, dj);
        t.weight = w;
        return t;
      };
      for (auto [a, w] : d1u) s.du.push_back(tap(a, 0, w));
      for (auto [b, w] : d1v) s.dv.push_back(tap(0, b, w));
      for (auto [a, w] : d2u) s.duu.push_back(tap(a, 0, w));
      for (auto [b, w] : d2v) s.dvv.push_back(tap(0, b, w));
      for (auto [a, wa] : d1u)
        for (auto [b, wb] : d1v) s.duv.push_back(tap(a, b, wa * wb));
    }
}

Tap StencilTable::neighbour(int node, int di, int dj) const {
  const int nu = grid_.nu, nv = grid_.nv;
  int i = node / nv + di, j = node % nv + dj;
  bool reflected = false;
  switch (grid_.mode) {
    case BoundaryMode::PeriodicBoth:
      i = wrap(i, nu);
      j = wrap(j, nv);
      break;
    case BoundaryMode::DirichletFrozen:
      if (i < 0 || i >= nu || j < 0 || j >= nv) return Tap{-1, 0.0, false};
      break;
    case BoundaryMode::PolarSphere:
      if (i < 0) {
        i = -1 - i;
        j += nv / 2;
        reflected = true;
      } else if (i >= nu) {
        i = 2 * nu - 1 - i;
        j += nv / 2;
        reflected = true;
      }
      j = wrap(j, nv);
      break;
  }
  return Tap{i * nv + j, 0.0, reflected};
}

// ---------------------------------------------------------------- frames

Mat4 AdaptedFrame::matrix() const {
  Mat4 f;
  f.col(0) = e1;
  f.col(1) = e2;
  f.col(2) = e3;
  f.col(3) = e4;
  return f;
}

namespace {

struct TangentPair {
  Vec4 e1, e2;
};

TangentPair orthonormal_tangents(const Mat4& g, const Vec4& X, const Vec4& Y) {
  const double xx = X.dot(g * X), yy = Y.dot(g * Y), xy = X.dot(g * Y);
  const double wedge = xx * yy - xy * xy;
  if (!(xx > 0.0) || !(std::sqrt(std::max(wedge, 0.0)) > 1e-12))
    throw DegenerateError("tangent vectors do not span a plane");
  TangentPair t;
  t.e1 = X / std::sqrt(xx);
  Vec4 y = Y - t.e1.dot(g * Y) * t.e1;
  t.e2 = y / std::sqrt(y.dot(g * y));
  return t;
}

double clamp_unit(double c) { return std::max(-1.0, std::min(1.0, c)); }

Vec4 orthogonalize(const Mat4& g, Vec4 v, std::initializer_list<const Vec4*> against) {
  for (int pass = 0; pass < 2; ++pass)
    for (const Vec4* e : against) v -= e->dot(g * v) * (*e);
  return v;
}

}  // namespace

double kahler_angle(const MetricData& m, const Vec4& X, const Vec4& Y) {
  const TangentPair t = orthonormal_tangents(m.g, X, Y);
  return clamp_unit(t.e1.dot(m.omega * t.e2));
}

double kahler_angle(const AmbientModel& model, const ChartPoint& p, const Vec4& X, const Vec4& Y) {
  return kahler_angle(model.metric_at(p), X, Y);
}

AdaptedFrame adapted_frame(const MetricData& m, const Vec4& X, const Vec4& Y) {
  const TangentPair t = orthonormal_tangents(m.g, X, Y);
  const Mat4& g = m.g;
  AdaptedFrame f;
  f.e1 = t.e1;
  f.e2 = t.e2;
  const Vec4 Je1 = m.J * f.e1, Je2 = m.J * f.e2;
  const double c = clamp_unit(f.e1.dot(m.omega * f.e2));
  f.cos_alpha = c;
  // sin alpha from the normal part of J e1; more accurate than sqrt(1 - c^2) near c = 1.
  const Vec4 n1 = Je1 - c * f.e2;
  const double s = std::sqrt(std::max(0.0, n1.dot(g * n1)));
  if (s > 1e-8) {
    f.sin_alpha = std::min(1.0, s);
    Vec4 e3 = orthogonalize(g, n1, {&f.e1, &f.e2});
    f.e3 = e3 / std::sqrt(e3.dot(g * e3));
    Vec4 e4 = orthogonalize(g, -(Je2 + c * f.e1), {&f.e1, &f.e2, &f.e3});
    f.e4 = e4 / std::sqrt(e4.dot(g * e4));
    // Renormalize so cos^2 + sin^2 = 1 exactly up to rounding.
    const double norm = std::hypot(c, f.sin_alpha);
    f.cos_alpha = c / norm;
    f.sin_alpha = f.sin_alpha / norm;
  } else {
    f.fallback = true;
    f.sin_alpha = 0.0;
    f.cos_alpha = c >= 0.0 ? 1.0 : -1.0;
    // First chart basis vector well outside the tangent plane.
    for (int k = 0; k < 4; ++k) {
      Vec4 v = orthogonalize(g, Vec4::Unit(k), {&f.e1, &f.e2});
      const double n = std::sqrt(v.dot(g * v));
      if (n > 0.5 * std::sqrt(Vec4::Unit(k).dot(g * Vec4::Unit(k)))) {
        f.e3 = v / n;
        break;
      }
    }
    Vec4 e4 = orthogonalize(g, f.cos_alpha * (m.J * f.e3), {&f.e1, &f.e2, &f.e3});
    f.e4 = e4 / std::sqrt(e4.dot(g * e4));
  }
  return f;
}

AdaptedFrame adapted_frame(const AmbientModel& model, const ChartPoint& p, const Vec4& X, const Vec4& Y) {
  return adapted_frame(model.metric_at(p), X, Y);
}

Mat4 canonical_j_matrix(double c, double s) {
  Mat4 M;
  M << 0, c, s, 0,  //
      -c, 0, 0, -s,  //
      -s, 0, 0, c,   //
      0, s, -c, 0;
  return M;
}

FrameResiduals frame_residuals(const MetricData& m, const AdaptedFrame& f) {
  FrameResiduals r;
  const Mat4 F = f.matrix();
  r.orthonormality = (F.transpose() * m.g * F - Mat4::Identity()).cwiseAbs().maxCoeff();
  const Mat4 canon = canonical_j_matrix(f.cos_alpha, f.sin_alpha);
  // omega(e_i, e_j) against cos a u12 + cos a u34 + sin a u13 - sin a u24.
  r.omega_form = (F.transpose() * m.omega * F - canon).cwiseAbs().maxCoeff();
  // Column i of F^{-1} J F holds the frame components of J e_i.
  const Mat4 Jf = F.inverse() * m.J * F;
  r.j_form = (Jf.transpose() - canon).cwiseAbs().maxCoeff();
  r.angle_identity = std::abs(f.cos_alpha * f.cos_alpha + f.sin_alpha * f.sin_alpha - 1.0);
  return r;
}

double nabla_J_norm_sq(const SecondFundamentalForm& s) {
  double acc = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double a = s.h[1][0][k] + s.h[0][1][k];
    const double b = s.h[1][1][k] - s.h[0][0][k];
    acc += a * a + b * b;
  }
  return acc;
}

double mean_curvature_sq(const SecondFundamentalForm& s) { return s.H3 * s.H3 + s.H4 * s.H4; }

// ---------------------------------------------------------------- geometry

namespace {

// Positions of stencil neighbours in the chart of the centre node.
class ChartGather {
 public:
  ChartGather(const AmbientModel& model, const SurfacePatch& patch) : model_(model), patch_(patch) {}

  Vec4 position(int centre, const Tap& t) const {
    if (t.node < 0) throw std::logic_error("stencil reaches outside the grid");
    const ChartPoint& q = patch_.nodes[static_cast<std::size_t>(t.node)];
    const int chart = patch_.nodes[static_cast<std::size_t>(centre)].chart;
    if (q.chart == chart) return q.x;
    const auto y = model_.to_chart(q, chart);
    if (!y) {
      throw DomainError(chart, "neighbour node " + std::to_string(t.node) + " of node " + std::to_string(centre) +
                                   " not covered by this chart");
    }
    return *y;
  }

  Vec4 apply(int centre, const std::vector<Tap>& taps) const {
    Vec4 acc = Vec4::Zero();
    for (const Tap& t : taps) acc += t.weight * position(centre, t);
    return acc;
  }

  // Tangent vector field sampled at a neighbour, pushed into the centre chart.
  Vec4 vector(int centre, const Tap& t, const Vec4& v) const {
    const ChartPoint& q = patch_.nodes[static_cast<std::size_t>(t.node)];
    const int chart = patch_.nodes[static_cast<std::size_t>(centre)].chart;
    if (q.chart == chart) return v;
    return model_.transition_jacobian(q, chart) * v;
  }

 private:
  const AmbientModel& model_;
  const SurfacePatch& patch_;
};

Vec4 christoffel_apply(const Tensor3& gamma, const Vec4& X, const Vec4& Y) {
  Vec4 out = Vec4::Zero();
  for (int k = 0; k < 4; ++k) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
      if (X[i] == 0.0) continue;
      for (int j = 0; j < 4; ++j) s += gamma(k, i, j) * X[i] * Y[j];
    }
    out[k] = s;
  }
  return out;
}

Mat2 induced(const Mat4& g, const Vec4& Fu, const Vec4& Fv) {
  Mat2 m;
  m(0, 0) = Fu.dot(g * Fu);
  m(0, 1) = m(1, 0) = Fu.dot(g * Fv);
  m(1, 1) = Fv.dot(g * Fv);
  return m;
}

void check_immersion(int node, const Mat2& g2) {
  const double det = g2.determinant();
  if (!(det > 1e-10)) {
    std::ostringstream os;
    os << "induced metric degenerate (det = " << det << ")";
    throw ImmersionError(node, os.str());
  }
}

// Gram-Schmidt coefficients: e_a = sum_i E(i, a) F_i.
Mat2 tangent_coefficients(const Mat2& g2) {
  const double a = std::sqrt(g2(0, 0));
  const double b = g2(0, 1) / a;
  const double c = std::sqrt(std::max(g2(1, 1) - b * b, 0.0));
  Mat2 E;
  E << 1.0 / a, -b / (a * c), 0.0, 1.0 / c;
  return E;
}

}  // namespace

double area_weight(const GridSpec& grid, int node) {
  if (grid.mode != BoundaryMode::DirichletFrozen) return 1.0;
  const int i = node / grid.nv, j = node % grid.nv;
  const double wu = (i == 0 || i == grid.nu - 1) ? 0.5 : 1.0;
  const double wv = (j == 0 || j == grid.nv - 1) ? 0.5 : 1.0;
  return wu * wv;
}

PatchGeometry compute_geometry(const AmbientModel& model, const SurfacePatch& patch, const GeometryOptions& options) {
  return compute_geometry(model, patch, StencilTable(patch.grid), options);
}

PatchGeometry compute_geometry(const AmbientModel& model, const SurfacePatch& patch, const StencilTable& table,
                               const GeometryOptions& options) {
  const ChartGather gather(model, patch);
  const int n = patch.size();
  PatchGeometry out;
  out.nodes.resize(static_cast<std::size_t>(n));
  const double cell = patch.grid.hu() * patch.grid.hv();
  std::vector<Mat2> E(static_cast<std::size_t>(n));
  std::vector<Tensor3> gammas(static_cast<std::size_t>(n));

  for (int node = 0; node < n; ++node) {
    const NodeStencil& st = table.at(node);
    NodeGeometry& ng = out.nodes[static_cast<std::size_t>(node)];
    ng.point = patch.nodes[static_cast<std::size_t>(node)];
    ng.Fu = gather.apply(node, st.du);
    ng.Fv = gather.apply(node, st.dv);
    ng.Fuu = gather.apply(node, st.duu);
    ng.Fvv = gather.apply(node, st.dvv);
    ng.Fuv = gather.apply(node, st.duv);
    ng.metric = model.metric_at(ng.point);
    const Mat4& g = ng.metric.g;
    ng.g = induced(g, ng.Fu, ng.Fv);
    check_immersion(node, ng.g);
    ng.sqrt_det = std::sqrt(ng.g.determinant());
    out.area += area_weight(patch.grid, node) * ng.sqrt_det * cell;
    ng.frame = adapted_frame(ng.metric, ng.Fu, ng.Fv);
    out.any_fallback = out.any_fallback || ng.frame.fallback;

    Tensor3& gamma = gammas[static_cast<std::size_t>(node)];
    if (!model.is_flat()) gamma = model.christoffels_at(ng.point);
    const Vec4 Nuu = ng.Fuu + christoffel_apply(gamma, ng.Fu, ng.Fu);
    const Vec4 Nuv = ng.Fuv + christoffel_apply(gamma, ng.Fu, ng.Fv);
    const Vec4 Nvv = ng.Fvv + christoffel_apply(gamma, ng.Fv, ng.Fv);
    const Mat2 Ec = tangent_coefficients(ng.g);
    E[static_cast<std::size_t>(node)] = Ec;
    const Vec4* normals[2] = {&ng.frame.e3, &ng.frame.e4};
    for (int gam = 0; gam < 2; ++gam) {
      const Vec4 gn = g * (*normals[gam]);
      Mat2 hc;
      hc(0, 0) = Nuu.dot(gn);
      hc(0, 1) = hc(1, 0) = Nuv.dot(gn);
      hc(1, 1) = Nvv.dot(gn);
      const Mat2 hf = Ec.transpose() * hc * Ec;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) ng.sff.h[gam][a][b] = hf(a, b);
    }
    ng.sff.H3 = ng.sff.h[0][0][0] + ng.sff.h[0][1][1];
    ng.sff.H4 = ng.sff.h[1][0][0] + ng.sff.h[1][1][1];
    ng.H = ng.sff.H3 * ng.frame.e3 + ng.sff.H4 * ng.frame.e4;
    ng.nabla_J_sq = nabla_J_norm_sq(ng.sff);
    if (options.curvature) {
      const Mat4 ric = model.riemann_at(ng.point).ricci;
      ng.ric_Je1_e2 = (ng.metric.J * ng.frame.e1).dot(ric * ng.frame.e2);
    }
  }

  if (options.asymmetry) {
    for (int node = 0; node < n; ++node) {
      if (patch.is_boundary(node)) continue;
      const NodeStencil& st = table.at(node);
      NodeGeometry& ng = out.nodes[static_cast<std::size_t>(node)];
      // d_i e_b from the frame fields of the neighbours; e1 ~ F_u changes sign through a pole.
      auto derivative = [&](const std::vector<Tap>& taps, int b) {
        Vec4 acc = Vec4::Zero();
        for (const Tap& t : taps) {
          const AdaptedFrame& f = out.nodes[static_cast<std::size_t>(t.node)].frame;
          Vec4 e = b == 0 ? f.e1 : f.e2;
          if (t.reflected && b == 0) e = -e;
          acc += t.weight * gather.vector(node, t, e);
        }
        return acc;
      };
      const Tensor3& gamma = gammas[static_cast<std::size_t>(node)];
      const Vec4 F[2] = {ng.Fu, ng.Fv};
      const Vec4 e[2] = {ng.frame.e1, ng.frame.e2};
      Vec4 d[2][2];  // d[i][b] = covariant derivative of e_b along F_i
      for (int b = 0; b < 2; ++b) {
        d[0][b] = derivative(st.du, b) + christoffel_apply(gamma, F[0], e[b]);
        d[1][b] = derivative(st.dv, b) + christoffel_apply(gamma, F[1], e[b]);
      }
      const Mat2& Ec = E[static_cast<std::size_t>(node)];
      auto nabla = [&](int a, int b) { return Vec4(Ec(0, a) * d[0][b] + Ec(1, a) * d[1][b]); };
      const Vec4 commutator = nabla(0, 1) - nabla(1, 0);
      const Mat4& g = ng.metric.g;
      ng.sff.asymmetry = std::max(std::abs(commutator.dot(g * ng.frame.e3)), std::abs(commutator.dot(g * ng.frame.e4)));
      out.max_asymmetry = std::max(out.max_asymmetry, ng.sff.asymmetry);
    }
  }
  return out;
}

InducedMetric induced_metric(const AmbientModel& model, const SurfacePatch& patch) {
  const StencilTable table(patch.grid);
  const ChartGather gather(model, patch);
  InducedMetric out;
  const int n = patch.size();
  out.g.resize(static_cast<std::size_t>(n));
  out.sqrt_det.resize(static_cast<std::size_t>(n));
  const double cell = patch.grid.hu() * patch.grid.hv();
  for (int node = 0; node < n; ++node) {
    const NodeStencil& st = table.at(node);
    const Vec4 Fu = gather.apply(node, st.du), Fv = gather.apply(node, st.dv);
    const Mat4 g = model.metric_at(patch.nodes[static_cast<std::size_t>(node)]).g;
    const Mat2 g2 = induced(g, Fu, Fv);
    check_immersion(node, g2);
    out.g[static_cast<std::size_t>(node)] = g2;
    out.sqrt_det[static_cast<std::size_t>(node)] = std::sqrt(g2.determinant());
    out.area += area_weight(patch.grid, node) * out.sqrt_det[static_cast<std::size_t>(node)] * cell;
  }
  return out;
}

std::vector<Vec4> mean_curvature_vectors(const AmbientModel& model, const SurfacePatch& patch,
                                         const StencilTable& table, double* min_det, double* min_spacing_sq) {
  const ChartGather gather(model, patch);
  const int n = patch.size();
  std::vector<Vec4> H(static_cast<std::size_t>(n), Vec4::Zero());
  double worst = std::numeric_limits<double>::infinity();
  double spacing = std::numeric_limits<double>::infinity();
  const double hu2 = patch.grid.hu() * patch.grid.hu(), hv2 = patch.grid.hv() * patch.grid.hv();
  const bool flat = model.is_flat();
  for (int node = 0; node < n; ++node) {
    if (patch.is_boundary(node)) continue;
    const NodeStencil& st = table.at(node);
    const Vec4 Fu = gather.apply(node, st.du), Fv = gather.apply(node, st.dv);
    Vec4 Nuu = gather.apply(node, st.duu), Nuv = gather.apply(node, st.duv), Nvv = gather.apply(node, st.dvv);
    Mat4 g = Mat4::Identity();
    const ChartPoint& p = patch.nodes[static_cast<std::size_t>(node)];
    if (!flat) {
      g = model.metric_at(p).g;
      const Tensor3 gamma = model.christoffels_at(p);
      Nuu += christoffel_apply(gamma, Fu, Fu);
      Nuv += christoffel_apply(gamma, Fu, Fv);
      Nvv += christoffel_apply(gamma, Fv, Fv);
    } else {
      model.require_in_domain(p);
    }
    const Vec4 gFu = g * Fu, gFv = g * Fv;
    const double guu = Fu.dot(gFu), guv = Fu.dot(gFv), gvv = Fv.dot(gFv);
    const double det = guu * gvv - guv * guv;
    worst = std::min(worst, det);
    spacing = std::min({spacing, hu2 * guu, hv2 * gvv});
    if (!(det > 0.0)) {
      H[static_cast<std::size_t>(node)] = Vec4::Constant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double iuu = gvv / det, iuv = -guv / det, ivv = guu / det;
    const Vec4 T = iuu * Nuu + 2.0 * iuv * Nuv + ivv * Nvv;
    const double tu = gFu.dot(T), tv = gFv.dot(T);
    H[static_cast<std::size_t>(node)] = T - (iuu * tu + iuv * tv) * Fu - (iuv * tu + ivv * tv) * Fv;
  }
  if (min_det) *min_det = worst;
  if (min_spacing_sq) *min_spacing_sq = spacing;
  return H;
}

std::vector<double> surface_laplacian(const PatchGeometry& geo, const StencilTable& table,
                                      const std::vector<double>& f) {
  const GridSpec& grid = table.grid();
  const int n = grid.nu * grid.nv;
  if (static_cast<int>(f.size()) != n || static_cast<int>(geo.nodes.size()) != n)
    throw std::invalid_argument("field size does not match the patch");
  const double hu = grid.hu(), hv = grid.hv();
  struct A {
    double uu, uv, vv;
  };
  std::vector<A> a(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const NodeGeometry& ng = geo.nodes[static_cast<std::size_t>(k)];
    const Mat2 inv = ng.g.inverse();
    a[static_cast<std::size_t>(k)] = {ng.sqrt_det * inv(0, 0), ng.sqrt_det * inv(0, 1), ng.sqrt_det * inv(1, 1)};
  }
  auto F = [&](const Tap& t) { return f[static_cast<std::size_t>(t.node)]; };
  auto Auv = [&](const Tap& t) {
    const double v = a[static_cast<std::size_t>(t.node)].uv;
    return t.reflected ? -v : v;
  };
  std::vector<double> out(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  const bool bounded = grid.mode == BoundaryMode::DirichletFrozen;
  for (int k = 0; k < n; ++k) {
    const int i = k / grid.nv, j = k % grid.nv;
    if (bounded && (i == 0 || j == 0 || i == grid.nu - 1 || j == grid.nv - 1)) continue;
    const Tap c{k, 0.0, false};
    const Tap up = table.neighbour(k, 1, 0), um = table.neighbour(k, -1, 0);
    const Tap vp = table.neighbour(k, 0, 1), vm = table.neighbour(k, 0, -1);
    const A& a0 = a[static_cast<std::size_t>(k)];
    const double auu_p = 0.5 * (a0.uu + a[static_cast<std::size_t>(up.node)].uu);
    const double auu_m = 0.5 * (a0.uu + a[static_cast<std::size_t>(um.node)].uu);
    const double avv_p = 0.5 * (a0.vv + a[static_cast<std::size_t>(vp.node)].vv);
    const double avv_m = 0.5 * (a0.vv + a[static_cast<std::size_t>(vm.node)].vv);
    double s = (auu_p * (F(up) - F(c)) - auu_m * (F(c) - F(um))) / (hu * hu) +
               (avv_p * (F(vp) - F(c)) - avv_m * (F(c) - F(vm))) / (hv * hv);
    // Cross terms d_u(A^uv f_v) + d_v(A^uv f_u), central.
    const double fv_up = (F(table.neighbour(k, 1, 1)) - F(table.neighbour(k, 1, -1))) / (2 * hv);
    const double fv_um = (F(table.neighbour(k, -1, 1)) - F(table.neighbour(k, -1, -1))) / (2 * hv);
    const double fu_vp = (F(table.neighbour(k, 1, 1)) - F(table.neighbour(k, -1, 1))) / (2 * hu);
    const double fu_vm = (F(table.neighbour(k, 1, -1)) - F(table.neighbour(k, -1, -1))) / (2 * hu);
    s += (Auv(up) * fv_up - Auv(um) * fv_um) / (2 * hu) + (Auv(vp) * fu_vp - Auv(vm) * fu_vm) / (2 * hv);
    out[static_cast<std::size_t>(k)] = s / geo.nodes[static_cast<std::size_t>(k)].sqrt_det;
  }
  return out;
}

std::vector<double> surface_laplacian(const AmbientModel& model, const SurfacePatch& patch,
                                      const std::vector<double>& field) {
  const StencilTable table(patch.grid);
  return surface_laplacian(compute_geometry(model, patch, table), table, field);
}

// ---------------------------------------------------------------- catalog

namespace patches {

namespace {

GridSpec box(int nu, int nv, double u0, double u1, double v0, double v1) {
  GridSpec g;
  g.nu = nu;
  g.nv = nv;
  g.mode = BoundaryMode::DirichletFrozen;
  g.u0 = u0;
  g.u1 = u1;
  g.v0 = v0;
  g.v1 = v1;
  g.validate();
  return g;
}

template <class F>
SurfacePatch sample(const GridSpec& grid, F&& f) {
  SurfacePatch p;
  p.grid = grid;
  p.nodes.reserve(static_cast<std::size_t>(grid.nu * grid.nv));
  for (int i = 0; i < grid.nu; ++i)
    for (int j = 0; j < grid.nv; ++j) p.nodes.push_back(f(grid.u(i), grid.v(j)));
  return p;
}

}  // namespace

SurfacePatch affine_plane(int nu, int nv, const Vec4& origin, const Vec4& a, const Vec4& b, double u0, double u1,
                          double v0, double v1) {
  return sample(box(nu, nv, u0, u1, v0, v1),
                [&](double u, double v) { return ChartPoint{0, Vec4(origin + u * a + v * b)}; });
}

SurfacePatch round_sphere(double r, int nu, int nv, const Vec4& center, const std::vector<double>& stretch,
                          int stencil_order) {
  if (!(r > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  auto theta = [&](double u) {
    double t = u;
    for (std::size_t k = 0; k < stretch.size(); ++k) t += stretch[k] * std::sin(2.0 * (k + 1) * u);
    return t;
  };
  for (int q = 0; q <= 1000; ++q) {
    double d = 1.0;
    const double u = M_PI * q / 1000.0;
    for (std::size_t k = 0; k < stretch.size(); ++k) d += 2.0 * (k + 1) * stretch[k] * std::cos(2.0 * (k + 1) * u);
    if (!(d > 0.0)) throw std::invalid_argument("latitude stretch must keep theta(u) increasing");
  }
  GridSpec g;
  g.nu = nu;
  g.nv = nv;
  g.mode = BoundaryMode::PolarSphere;
  g.stencil_order = stencil_order;
  g.validate();
  return sample(g, [&](double u, double v) {
    const double th = theta(u);
    return ChartPoint{0, Vec4(center + r * Vec4(std::sin(th) * std::cos(v), std::sin(th) * std::sin(v), std::cos(th), 0.0))};
  });
}

SurfacePatch antiholomorphic_graph(int n, double amplitude, double sigma, double half_width) {
  return sample(box(n, n, -half_width, half_width, -half_width, half_width), [&](double u, double v) {
    const std::complex<double> z(u, v);
    const std::complex<double> w = amplitude * std::conj(z) * std::exp(-std::norm(z) / (sigma * sigma));
    return ChartPoint{0, Vec4(u, v, w.real(), w.imag())};
  });
}

SurfacePatch holomorphic_graph(int n, std::complex<double> c0, std::complex<double> c1, std::complex<double> c2,
                               double half_width) {
  return sample(box(n, n, -half_width, half_width, -half_width, half_width), [&](double u, double v) {
    const std::complex<double> z(u, v);
    const std::complex<double> w = c0 + z * (c1 + z * c2);
    return ChartPoint{0, Vec4(u, v, w.real(), w.imag())};
  });
}

SurfacePatch projective_line(const AmbientModel& model, int nu, int nv) {
  if (model.chart_count() < 2) throw std::invalid_argument("projective line needs the two-chart atlas");
  GridSpec g;
  g.nu = nu;
  g.nv = nv;
  g.mode = BoundaryMode::PolarSphere;
  g.validate();
  return sample(g, [&](double u, double v) {
    const double t = std::tan(0.5 * u);
    if (t <= 1.0) return ChartPoint{0, Vec4(t * std::cos(v), t * std::sin(v), 0.0, 0.0)};
    const double w = 1.0 / t;
    return ChartPoint{1, Vec4(w * std::cos(v), -w * std::sin(v), 0.0, 0.0)};
  });
}

SurfacePatch clifford_torus(double r1, double r2, int nu, int nv, int stencil_order) {
  GridSpec g;
  g.nu = nu;
  g.nv = nv;
  g.mode = BoundaryMode::PeriodicBoth;
  g.u0 = 0.0;
  g.u1 = 2.0 * M_PI;
  g.v0 = 0.0;
  g.v1 = 2.0 * M_PI;
  g.stencil_order = stencil_order;
  g.validate();
  return sample(g, [&](double u, double v) {
    return ChartPoint{0, Vec4(r1 * std::cos(u), r1 * std::sin(u), r2 * std::cos(v), r2 * std::sin(v))};
  });
}

}  // namespace patches

// ---------------------------------------------------------------- CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

void write_patch_csv(std::ostream& os, const SurfacePatch& patch) {
  const GridSpec& g = patch.grid;
  os << "# grid nu=" << g.nu << " nv=" << g.nv << " mode=" << to_string(g.mode) << " u0=" << format_double(g.u0)
     << " u1=" << format_double(g.u1) << " v0=" << format_double(g.v0) << " v1=" << format_double(g.v1)
     << " order=" << g.stencil_order << "\n";
  os << "node,chart,x0,x1,x2,x3\n";
  for (int k = 0; k < patch.size(); ++k) {
    const ChartPoint& p = patch.nodes[static_cast<std::size_t>(k)];
    os << k << ',' << p.chart;
    for (int c = 0; c < 4; ++c) os << ',' << format_double(p.x[c]);
    os << '\n';
  }
}

SurfacePatch read_patch_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# grid ", 0) != 0) throw std::runtime_error("missing '# grid' line");
  SurfacePatch patch;
  std::map<std::string, std::string> kv;
  for (const auto& tok : split(line.substr(7), ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad grid token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const char* k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error(std::string("grid line lacks ") + k);
    return it->second;
  };
  patch.grid.nu = parse_int(need("nu"));
  patch.grid.nv = parse_int(need("nv"));
  patch.grid.mode = parse_boundary_mode(need("mode"));
  patch.grid.u0 = parse_double(need("u0"));
  patch.grid.u1 = parse_double(need("u1"));
  patch.grid.v0 = parse_double(need("v0"));
  patch.grid.v1 = parse_double(need("v1"));
  patch.grid.stencil_order = parse_int(need("order"));
  patch.grid.validate();
  if (!std::getline(is, line) || line != "node,chart,x0,x1,x2,x3") throw std::runtime_error("bad CSV header");
  const int n = patch.grid.nu * patch.grid.nv;
  patch.nodes.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    if (!std::getline(is, line)) throw std::runtime_error("CSV ends after " + std::to_string(k) + " nodes");
    const auto f = split(line, ',');
    if (f.size() != 6 || parse_int(f[0]) != k) throw std::runtime_error("bad CSV row " + std::to_string(k));
    ChartPoint& p = patch.nodes[static_cast<std::size_t>(k)];
    p.chart = parse_int(f[1]);
    for (int c = 0; c < 4; ++c) p.x[c] = parse_double(f[static_cast<std::size_t>(c + 2)]);
  }
  return patch;
}

void write_patch_csv(const std::string& path, const SurfacePatch& patch) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_patch_csv(os, patch);
}

SurfacePatch read_patch_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_patch_csv(is);
}

}  // namespace smcf
