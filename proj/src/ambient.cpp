#include "smcf/ambient.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "smcf/errors.hpp"
#include "smcf/jet.hpp"

namespace smcf {

namespace {

template <class T>
using Point = std::array<T, 4>;

template <class T>
T norm_sq(const Point<T>& x) {
  return x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
}

using std::exp;
using std::log;

template <class T>
T flat_potential(const Point<T>& x) {
  return norm_sq(x);
}

template <class T>
T fubini_study_potential(const Point<T>& x, double scale) {
  return log(T(1.0) + norm_sq(x)) * (1.0 / scale);
}

template <class T>
T hyperbolic_potential(const Point<T>& x, double scale) {
  return log(T(1.0) - norm_sq(x)) * (-1.0 / scale);
}

template <class T>
T indefinite_potential(const Point<T>& x) {
  return x[0] * x[0] + x[1] * x[1] - x[2] * x[2] - x[3] * x[3];
}

// exp(1 - 1/(1 - t)) on t < 1, zero otherwise; C-infinity with bump(0) = 1.
template <class T>
T bump(const T& t) {
  if (scalar_value(t) >= 1.0) return T(0.0);
  return exp(T(1.0) - reciprocal(T(1.0) - t));
}

template <class T>
T perturbation_chart0(const Point<T>& z, Perturbation kind, double rho) {
  const T r2 = norm_sq(z);
  if (scalar_value(r2) >= rho * rho) return T(0.0);
  // The Gaussian factor keeps the derivatives near the edge of the support
  // negligible, so epsilon of order 1e-2 changes the curvature by a few percent.
  const T b = bump(r2 * (1.0 / (rho * rho))) * exp(r2 * (-16.0 / (rho * rho)));
  switch (kind) {
    case Perturbation::RadialBump:
      return r2 * r2 * b;
    case Perturbation::MixedBump:
      return (z[0] * z[0] + z[1] * z[1]) * (z[2] * z[2] + z[3] * z[3]) * b;
  }
  return T(0.0);
}

// The affine-chart transition (w1, w2) -> (1/w1, w2/w1); it is its own inverse.
template <class T>
Point<T> swap_affine_chart(const Point<T>& w) {
  const T n = w[0] * w[0] + w[1] * w[1];
  const T inv = reciprocal(n);
  return {w[0] * inv, -w[1] * inv, (w[2] * w[0] + w[3] * w[1]) * inv, (w[3] * w[0] - w[2] * w[1]) * inv};
}

template <class T>
T perturbation(const Point<T>& x, int chart, Perturbation kind, double rho) {
  if (chart == 0) return perturbation_chart0(x, kind, rho);
  const double n = scalar_value(x[0]) * scalar_value(x[0]) + scalar_value(x[1]) * scalar_value(x[1]);
  // Points of chart 1 with |z| >= rho in chart 0 lie outside the support.
  if (n == 0.0) return T(0.0);
  return perturbation_chart0(swap_affine_chart(x), kind, rho);
}

struct PotentialJets {
  Mat4 d2 = Mat4::Zero();
  Tensor3 d3;
  Tensor4 d4;
};

template <int D, class F>
PotentialJets exact_jets(const Vec4& x, F&& phi) {
  Point<Jet<D>> v;
  for (int i = 0; i < 4; ++i) v[static_cast<std::size_t>(i)] = Jet<D>::variable(i, x[i]);
  const Jet<D> f = phi(v);
  PotentialJets out;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      std::array<int, 4> e{};
      ++e[static_cast<std::size_t>(i)];
      ++e[static_cast<std::size_t>(j)];
      out.d2(i, j) = f.derivative(e);
      if constexpr (D >= 3) {
        for (int k = 0; k < 4; ++k) {
          auto e3 = e;
          ++e3[static_cast<std::size_t>(k)];
          out.d3(i, j, k) = f.derivative(e3);
          if constexpr (D >= 4) {
            for (int l = 0; l < 4; ++l) {
              auto e4 = e3;
              ++e4[static_cast<std::size_t>(l)];
              out.d4(i, j, k, l) = f.derivative(e4);
            }
          }
        }
      }
    }
  return out;
}

// Fourth-order central stencils for the m-th derivative, m = 1..4.
struct Stencil1D {
  std::vector<int> offsets;
  std::vector<double> weights;
};

const Stencil1D& central_stencil(int m) {
  static const Stencil1D s1{{-2, -1, 1, 2}, {1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0}};
  static const Stencil1D s2{{-2, -1, 0, 1, 2}, {-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0}};
  static const Stencil1D s3{{-3, -2, -1, 1, 2, 3}, {1.0 / 8.0, -1.0, 13.0 / 8.0, -13.0 / 8.0, 1.0, -1.0 / 8.0}};
  static const Stencil1D s4{{-3, -2, -1, 0, 1, 2, 3},
                            {-1.0 / 6.0, 2.0, -13.0 / 2.0, 28.0 / 3.0, -13.0 / 2.0, 2.0, -1.0 / 6.0}};
  switch (m) {
    case 1: return s1;
    case 2: return s2;
    case 3: return s3;
    default: return s4;
  }
}

template <class F>
double fd_partial(const Vec4& x, const std::array<int, 4>& mult, double h, F&& f) {
  std::array<const Stencil1D*, 4> st{};
  std::array<std::size_t, 4> len{};
  double scale = 1.0;
  for (int v = 0; v < 4; ++v) {
    const int m = mult[static_cast<std::size_t>(v)];
    if (m > 0) {
      st[static_cast<std::size_t>(v)] = &central_stencil(m);
      len[static_cast<std::size_t>(v)] = st[static_cast<std::size_t>(v)]->offsets.size();
      scale *= std::pow(h, -m);
    } else {
      len[static_cast<std::size_t>(v)] = 1;
    }
  }
  double acc = 0.0;
  for (std::size_t a = 0; a < len[0]; ++a)
    for (std::size_t b = 0; b < len[1]; ++b)
      for (std::size_t c = 0; c < len[2]; ++c)
        for (std::size_t d = 0; d < len[3]; ++d) {
          const std::array<std::size_t, 4> idx{a, b, c, d};
          double w = 1.0;
          Point<double> y{x[0], x[1], x[2], x[3]};
          for (std::size_t v = 0; v < 4; ++v) {
            if (!st[v]) continue;
            w *= st[v]->weights[idx[v]];
            y[v] += h * st[v]->offsets[idx[v]];
          }
          acc += w * f(y);
        }
  return acc * scale;
}

template <class F>
PotentialJets fd_jets(const Vec4& x, int order, double h, F&& f) {
  PotentialJets out;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      std::array<int, 4> m{};
      ++m[static_cast<std::size_t>(i)];
      ++m[static_cast<std::size_t>(j)];
      const double v2 = fd_partial(x, m, h, f);
      out.d2(i, j) = out.d2(j, i) = v2;
      if (order < 3) continue;
      for (int k = j; k < 4; ++k) {
        auto m3 = m;
        ++m3[static_cast<std::size_t>(k)];
        const double v3 = fd_partial(x, m3, h, f);
        const int p3[6][3] = {{i, j, k}, {i, k, j}, {j, i, k}, {j, k, i}, {k, i, j}, {k, j, i}};
        for (const auto& p : p3) out.d3(p[0], p[1], p[2]) = v3;
        if (order < 4) continue;
        for (int l = k; l < 4; ++l) {
          auto m4 = m3;
          ++m4[static_cast<std::size_t>(l)];
          const double v4 = fd_partial(x, m4, h, f);
          std::array<int, 4> q{i, j, k, l};
          std::sort(q.begin(), q.end());
          do {
            out.d4(q[0], q[1], q[2], q[3]) = v4;
          } while (std::next_permutation(q.begin(), q.end()));
        }
      }
    }
  return out;
}

void add_scaled(PotentialJets& acc, const PotentialJets& other, double s) {
  acc.d2 += s * other.d2;
  for (std::size_t i = 0; i < acc.d3.a.size(); ++i) acc.d3.a[i] += s * other.d3.a[i];
  for (std::size_t i = 0; i < acc.d4.a.size(); ++i) acc.d4.a[i] += s * other.d4.a[i];
}

Mat4 levi_part(const Mat4& hess, const Mat4& J) { return 0.25 * (hess + J.transpose() * hess * J); }

}  // namespace

Mat4 standard_complex_structure() {
  Mat4 J = Mat4::Zero();
  J(1, 0) = 1.0;
  J(0, 1) = -1.0;
  J(3, 2) = 1.0;
  J(2, 3) = -1.0;
  return J;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::FlatC2: return "FlatC2";
    case ModelKind::FubiniStudy: return "FubiniStudy";
    case ModelKind::PerturbedFS: return "PerturbedFS";
    case ModelKind::ComplexHyperbolic: return "ComplexHyperbolic";
    case ModelKind::Indefinite: return "Indefinite";
  }
  return "?";
}

std::string to_string(Perturbation p) {
  return p == Perturbation::RadialBump ? "radial_bump" : "mixed_bump";
}

std::string to_string(DerivativeMode m) {
  return m == DerivativeMode::Analytic ? "analytic" : "finite_difference";
}

ModelKind parse_model_kind(const std::string& s) {
  for (auto k : {ModelKind::FlatC2, ModelKind::FubiniStudy, ModelKind::PerturbedFS, ModelKind::ComplexHyperbolic,
                 ModelKind::Indefinite})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown model id '" + s + "'");
}

Perturbation parse_perturbation(const std::string& s) {
  if (s == "radial_bump") return Perturbation::RadialBump;
  if (s == "mixed_bump") return Perturbation::MixedBump;
  throw std::invalid_argument("unknown perturbation '" + s + "'");
}

DerivativeMode parse_derivative_mode(const std::string& s) {
  if (s == "analytic") return DerivativeMode::Analytic;
  if (s == "finite_difference") return DerivativeMode::FiniteDifference;
  throw std::invalid_argument("unknown derivative mode '" + s + "'");
}

AmbientModel::AmbientModel(ModelSpec spec) : spec_(spec) {
  if (!(spec_.scale > 0.0)) throw std::invalid_argument("model scale must be positive");
  if (!(spec_.fd_step > 0.0)) throw std::invalid_argument("fd_step must be positive");
  if (!(spec_.chart_radius > 0.0)) throw std::invalid_argument("chart_radius must be positive");
  if (!(spec_.margin_fraction >= 0.0 && spec_.margin_fraction < 1.0))
    throw std::invalid_argument("margin_fraction must lie in [0, 1)");
  if (!(spec_.bump_radius > 0.0)) throw std::invalid_argument("bump_radius must be positive");
  chart_count_ = (spec_.kind == ModelKind::FubiniStudy || spec_.kind == ModelKind::PerturbedFS) ? 2 : 1;
}

std::string AmbientModel::describe() const {
  std::ostringstream os;
  os << to_string(spec_.kind);
  if (spec_.kind != ModelKind::FlatC2 && spec_.kind != ModelKind::Indefinite) os << "(scale=" << spec_.scale;
  if (spec_.kind == ModelKind::PerturbedFS)
    os << ", epsilon=" << spec_.epsilon << ", " << to_string(spec_.perturbation) << ", rho=" << spec_.bump_radius
       << ", " << to_string(spec_.perturbation_derivatives);
  if (spec_.kind != ModelKind::FlatC2 && spec_.kind != ModelKind::Indefinite) os << ")";
  return os.str();
}

bool AmbientModel::finite_difference_curvature() const {
  return spec_.kind == ModelKind::PerturbedFS && spec_.perturbation_derivatives == DerivativeMode::FiniteDifference;
}

double AmbientModel::chart_radius() const {
  return spec_.kind == ModelKind::ComplexHyperbolic ? 1.0 : spec_.chart_radius;
}

bool AmbientModel::in_domain(const ChartPoint& p) const {
  if (p.chart < 0 || p.chart >= chart_count_) return false;
  if (!p.x.allFinite()) return false;
  return p.x.norm() < chart_radius() - margin();
}

void AmbientModel::require_in_domain(const ChartPoint& p) const {
  if (p.chart < 0 || p.chart >= chart_count_) throw DomainError(p.chart, "no such chart");
  if (!in_domain(p)) {
    std::ostringstream os;
    os << "point outside domain (|x| = " << p.x.norm() << ", admissible radius " << chart_radius() - margin() << ")";
    throw DomainError(p.chart, os.str());
  }
}

std::optional<Vec4> AmbientModel::to_chart(const ChartPoint& p, int to) const {
  if (to == p.chart) return p.x;
  if (to < 0 || to >= chart_count_ || p.chart < 0 || p.chart >= chart_count_) return std::nullopt;
  if (p.x[0] == 0.0 && p.x[1] == 0.0) return std::nullopt;
  const auto y = swap_affine_chart<double>({p.x[0], p.x[1], p.x[2], p.x[3]});
  return Vec4(y[0], y[1], y[2], y[3]);
}

Mat4 AmbientModel::transition_jacobian(const ChartPoint& p, int to) const {
  if (to == p.chart) return Mat4::Identity();
  if (!to_chart(p, to)) throw DomainError(p.chart, "point not covered by target chart");
  // (w1, w2) -> (1/w1, w2/w1): dz1 = -dw1/w1^2, dz2 = dw2/w1 - w2 dw1/w1^2.
  const std::complex<double> w1(p.x[0], p.x[1]), w2(p.x[2], p.x[3]);
  const std::complex<double> a = -1.0 / (w1 * w1), b = -w2 / (w1 * w1), c = 1.0 / w1;
  auto block = [](Mat4& m, int r, int col, std::complex<double> v) {
    m(r, col) = v.real();
    m(r, col + 1) = -v.imag();
    m(r + 1, col) = v.imag();
    m(r + 1, col + 1) = v.real();
  };
  Mat4 jac = Mat4::Zero();
  block(jac, 0, 0, a);
  block(jac, 2, 0, b);
  block(jac, 2, 2, c);
  return jac;
}

ChartPoint AmbientModel::best_chart(const ChartPoint& p) const {
  ChartPoint best = p;
  double best_norm = p.x.norm();
  for (int c = 0; c < chart_count_; ++c) {
    if (c == p.chart) continue;
    const auto y = to_chart(p, c);
    if (!y) continue;
    const double n = y->norm();
    if (n < best_norm) {
      best_norm = n;
      best = ChartPoint{c, *y};
    }
  }
  return best;
}

MetricJet AmbientModel::metric_jet(const ChartPoint& p, int order) const {
  PotentialJets jets;
  const Vec4& x = p.x;
  const double s = spec_.scale;
  auto dispatch = [&](auto&& phi) {
    switch (order) {
      case 0: return exact_jets<2>(x, phi);
      case 1: return exact_jets<3>(x, phi);
      default: return exact_jets<4>(x, phi);
    }
  };
  switch (spec_.kind) {
    case ModelKind::FlatC2: {
      jets.d2 = 2.0 * Mat4::Identity();
      break;
    }
    case ModelKind::Indefinite:
      jets = dispatch([](const auto& v) { return indefinite_potential(v); });
      break;
    case ModelKind::ComplexHyperbolic:
      jets = dispatch([s](const auto& v) { return hyperbolic_potential(v, s); });
      break;
    case ModelKind::FubiniStudy:
      jets = dispatch([s](const auto& v) { return fubini_study_potential(v, s); });
      break;
    case ModelKind::PerturbedFS: {
      jets = dispatch([s](const auto& v) { return fubini_study_potential(v, s); });
      if (spec_.epsilon != 0.0) {
        const int chart = p.chart;
        const Perturbation kind = spec_.perturbation;
        const double rho = spec_.bump_radius;
        PotentialJets pert;
        if (spec_.perturbation_derivatives == DerivativeMode::Analytic) {
          pert = dispatch([=](const auto& v) { return perturbation(v, chart, kind, rho); });
        } else {
          pert = fd_jets(x, order + 2, spec_.fd_step,
                         [=](const Point<double>& y) { return perturbation(y, chart, kind, rho); });
        }
        add_scaled(jets, pert, spec_.epsilon);
      }
      break;
    }
  }

  const Mat4 J = standard_complex_structure();
  MetricJet out;
  out.g = levi_part(jets.d2, J);
  if (order >= 1) {
    for (int m = 0; m < 4; ++m) {
      Mat4 h;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) h(i, j) = jets.d3(m, i, j);
      out.dg[static_cast<std::size_t>(m)] = levi_part(h, J);
    }
  } else {
    for (auto& d : out.dg) d.setZero();
  }
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) {
      auto& dd = out.ddg[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
      if (order >= 2) {
        Mat4 h;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) h(i, j) = jets.d4(m, n, i, j);
        dd = levi_part(h, J);
      } else {
        dd.setZero();
      }
    }
  return out;
}

namespace {

Mat4 checked_inverse(const Mat4& g, int chart) {
  Eigen::LLT<Mat4> llt(g);
  if (llt.info() != Eigen::Success) throw DomainError(chart, "metric not positive definite");
  return llt.solve(Mat4::Identity());
}

// First-kind symbols gamma1(k, i, j) = (1/2)(d_i g_jk + d_j g_ik - d_k g_ij).
Tensor3 first_kind(const MetricJet& mj) {
  Tensor3 g1;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        g1(k, i, j) = 0.5 * (mj.dg[static_cast<std::size_t>(i)](j, k) + mj.dg[static_cast<std::size_t>(j)](i, k) -
                             mj.dg[static_cast<std::size_t>(k)](i, j));
  return g1;
}

Tensor3 second_kind(const Tensor3& g1, const Mat4& g_inv) {
  Tensor3 g2;
  for (int l = 0; l < 4; ++l)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += g_inv(l, k) * g1(k, i, j);
        g2(l, i, j) = s;
      }
  return g2;
}

}  // namespace

MetricData AmbientModel::metric_at(const ChartPoint& p) const {
  require_in_domain(p);
  MetricData m;
  m.point = p;
  if (is_flat()) {
    m.g = Mat4::Identity();
    m.g_inv = Mat4::Identity();
  } else {
    m.g = metric_jet(p, 0).g;
    m.g_inv = checked_inverse(m.g, p.chart);
  }
  m.J = standard_complex_structure();
  m.omega = m.J.transpose() * m.g;
  return m;
}

Tensor3 AmbientModel::christoffels_at(const ChartPoint& p) const {
  require_in_domain(p);
  if (is_flat()) return Tensor3{};
  const MetricJet mj = metric_jet(p, 1);
  const Mat4 g_inv = checked_inverse(mj.g, p.chart);
  return second_kind(first_kind(mj), g_inv);
}

CurvatureTensor AmbientModel::riemann_at(const ChartPoint& p) const {
  require_in_domain(p);
  CurvatureTensor ct;
  ct.point = p;
  if (is_flat()) {
    ct.ricci.setZero();
    return ct;
  }
  const MetricJet mj = metric_jet(p, 2);
  const Mat4 g_inv = checked_inverse(mj.g, p.chart);
  const Tensor3 g1 = first_kind(mj);
  const Tensor3 g2 = second_kind(g1, g_inv);
  auto dd = [&](int m, int n, int i, int j) {
    return mj.ddg[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)](i, j);
  };
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c)
        for (int d = 0; d < 4; ++d) {
          double v = 0.5 * (dd(a, d, b, c) - dd(a, c, b, d) - dd(b, d, a, c) + dd(b, c, a, d));
          for (int l = 0; l < 4; ++l) v += -g1(l, a, c) * g2(l, b, d) + g1(l, b, c) * g2(l, a, d);
          ct.R(a, b, c, d) = v;
        }
  for (int a = 0; a < 4; ++a)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int b = 0; b < 4; ++b)
        for (int d = 0; d < 4; ++d) s += g_inv(b, d) * ct.R(a, b, c, d);
      ct.ricci(a, c) = s;
    }
  ct.scalar = (g_inv.cwiseProduct(ct.ricci)).sum();
  return ct;
}

KahlerReport AmbientModel::check_kahler(const ChartPoint& p, double tol) const {
  KahlerReport rep;
  rep.point = p;
  rep.tolerance = tol;
  auto add = [&](const std::string& name, double v) {
    const bool ok = std::isfinite(v) && v <= tol;
    rep.residuals.push_back({name, v, ok});
    if (!ok && rep.failure.empty()) rep.failure = name;
  };

  if (!in_domain(p)) {
    add("domain", std::numeric_limits<double>::infinity());
    rep.passed = false;
    return rep;
  }
  const Mat4 J = standard_complex_structure();
  const Mat4 g = is_flat() ? Mat4::Identity() : metric_jet(p, 0).g;
  Eigen::SelfAdjointEigenSolver<Mat4> eig(g);
  const double min_eig = eig.eigenvalues().minCoeff();
  add("positive_definite", min_eig > 0.0 ? 0.0 : -min_eig + std::numeric_limits<double>::min());
  add("metric_symmetry", (g - g.transpose()).cwiseAbs().maxCoeff());
  add("J_squared", (J * J + Mat4::Identity()).cwiseAbs().maxCoeff());
  add("J_orthogonal", (J.transpose() * g * J - g).cwiseAbs().maxCoeff());
  if (!rep.failure.empty() && rep.failure == "positive_definite") {
    rep.passed = false;
    return rep;
  }

  const Tensor3 gamma = christoffels_at(p);
  double nabla_j = 0.0;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double v = 0.0;
        for (int m = 0; m < 4; ++m) v += gamma(i, k, m) * J(m, j) - gamma(m, k, j) * J(i, m);
        nabla_j = std::max(nabla_j, std::abs(v));
      }
  add("nabla_J", nabla_j);

  // d omega by fourth-order central differences of the Kähler form.
  const double h = 1e-3 * std::max(1.0, 0.1 * chart_radius());
  auto omega_at = [&](const Vec4& y) -> Mat4 {
    const Mat4 gy = is_flat() ? Mat4::Identity() : metric_jet(ChartPoint{p.chart, y}, 0).g;
    return J.transpose() * gy;
  };
  std::array<Mat4, 4> domega;
  for (int k = 0; k < 4; ++k) {
    Vec4 e = Vec4::Zero();
    e[k] = h;
    domega[static_cast<std::size_t>(k)] =
        (omega_at(p.x - 2 * e) - 8.0 * omega_at(p.x - e) + 8.0 * omega_at(p.x + e) - omega_at(p.x + 2 * e)) /
        (12.0 * h);
  }
  double d_omega = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) {
        const double v = domega[static_cast<std::size_t>(i)](j, k) + domega[static_cast<std::size_t>(j)](k, i) +
                         domega[static_cast<std::size_t>(k)](i, j);
        d_omega = std::max(d_omega, std::abs(v));
      }
  add("d_omega", d_omega);
  rep.passed = rep.failure.empty();
  return rep;
}

}  // namespace smcf
