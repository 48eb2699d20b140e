#include "smcf/curvtools.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "smcf/errors.hpp"

namespace smcf {

PointCurvature curvature_at(const AmbientModel& model, const ChartPoint& p) {
  return PointCurvature{model.metric_at(p), model.riemann_at(p)};
}

double wedge_norm_sq(const Mat4& g, const Vec4& X, const Vec4& Y) {
  const double xx = X.dot(g * X), yy = Y.dot(g * Y), xy = X.dot(g * Y);
  return xx * yy - xy * xy;
}

double sectional(const Tensor4& R, const Vec4& X, const Vec4& Y) { return contract(R, X, Y, X, Y); }

double sectional_normalized(const Tensor4& R, const Mat4& g, const Vec4& X, const Vec4& Y) {
  const double a = wedge_norm_sq(g, X, Y);
  if (!(a >= 1e-14)) throw DegenerateError("sectional curvature of a degenerate plane");
  return sectional(R, X, Y) / a;
}

double hol_sectional(const Tensor4& R, const Mat4& J, const Vec4& X) {
  const Vec4 JX = J * X;
  return contract(R, X, JX, X, JX);
}

double hol_sectional_normalized(const Tensor4& R, const Mat4& g, const Mat4& J, const Vec4& X) {
  const double n2 = X.dot(g * X);
  if (!(std::sqrt(std::max(n2, 0.0)) >= 1e-14)) throw DegenerateError("holomorphic sectional curvature of a null vector");
  return hol_sectional(R, J, X) / (n2 * n2);
}

HolSecEvaluator::HolSecEvaluator(const CurvatureTensor& curvature, const MetricData& metric)
    : curvature_(&curvature), metric_(&metric) {}

double HolSecEvaluator::operator()(const Vec4& V) const {
  const std::array<double, 4> key{V[0], V[1], V[2], V[3]};
  const auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  const double v = hol_sectional(curvature_->R, metric_->J, V);
  cache_.emplace(key, v);
  return v;
}

double HolSecEvaluator::normalized(const Vec4& V) const {
  const double n2 = V.dot(metric_->g * V);
  if (!(std::sqrt(std::max(n2, 0.0)) >= 1e-14)) throw DegenerateError("holomorphic sectional curvature of a null vector");
  return (*this)(V) / (n2 * n2);
}

double sectional_via_polarization(const HolSecEvaluator& K, const Vec4& X, const Vec4& Y) {
  const Mat4& J = K.metric().J;
  const Vec4 JY = J * Y;
  return (3.0 * K(X + JY) + 3.0 * K(X - JY) - K(X + Y) - K(X - Y) - 4.0 * K(X) - 4.0 * K(Y)) / 32.0;
}

MixedPolarization mixed_via_polarization(const HolSecEvaluator& K, const Vec4& X, const Vec4& Y, const Vec4& Z) {
  MixedPolarization out;
  const Vec4 YZ = Y + Z;
  out.short_form =
      0.5 * (sectional_via_polarization(K, YZ, X) - sectional_via_polarization(K, X, Y) -
             sectional_via_polarization(K, X, Z));
  const Vec4 JX = K.metric().J * X;
  out.long_form = (3.0 * K(YZ + JX) + 3.0 * K(YZ - JX) - K(YZ + X) - K(YZ - X)            //
                   - 3.0 * K(Y + JX) - 3.0 * K(Y - JX) - 3.0 * K(Z + JX) - 3.0 * K(Z - JX)  //
                   - 4.0 * K(YZ) + K(Y + X) + K(Y - X) + K(Z + X) + K(Z - X)               //
                   + 4.0 * K(X) + 4.0 * K(Y) + 4.0 * K(Z)) /
                  64.0;
  out.direct = contract(K.curvature().R, X, Y, X, Z);
  return out;
}

double relative_error(double a, double b, double scale) {
  const double d = std::abs(a - b);
  if (d == 0.0) return 0.0;
  const double den = std::max(std::abs(b), scale);
  return den > 0.0 ? d / den : std::numeric_limits<double>::infinity();
}

double curvature_scale(const PointCurvature& pc, const Vec4& X, const Vec4& Y) {
  const Mat4& g = pc.metric.g;
  return X.dot(g * X) * Y.dot(g * Y) * std::abs(pc.curvature.scalar) / 12.0;
}

Vec4 random_tangent(std::mt19937_64& rng, const Mat4& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec4 u(n(rng), n(rng), n(rng), n(rng));
  return orthonormal_basis(g) * u;
}

Mat4 orthonormal_basis(const Mat4& g) {
  Eigen::LLT<Mat4> llt(g);
  if (llt.info() != Eigen::Success) throw DomainError(-1, "metric not positive definite");
  // g = L L^T, so the columns of L^{-T} are g-orthonormal.
  const Mat4 L = llt.matrixL();
  return L.transpose().triangularView<Eigen::Upper>().solve(Mat4::Identity());
}

namespace {

// Curvature at one point expressed in a g-orthonormal basis E.
struct OrthoCurvature {
  ChartPoint point;
  Mat4 E;
  Tensor4 R;
  Mat4 J;
};

OrthoCurvature ortho_curvature(const AmbientModel& model, const ChartPoint& p) {
  const PointCurvature pc = curvature_at(model, p);
  OrthoCurvature oc;
  oc.point = p;
  oc.E = orthonormal_basis(pc.metric.g);
  oc.R = change_basis(pc.curvature.R, oc.E);
  oc.J = oc.E.inverse() * pc.metric.J * oc.E;
  return oc;
}

double hol_value(const OrthoCurvature& oc, const Vec4& u) {
  const Vec4 Ju = oc.J * u;
  return contract(oc.R, u, Ju, u, Ju);
}

Vec4 hol_gradient(const OrthoCurvature& oc, const Vec4& u) {
  const Vec4 Ju = oc.J * u;
  Vec4 a, b, grad;
  for (int m = 0; m < 4; ++m) {
    const Vec4 e = Vec4::Unit(m);
    a[m] = contract(oc.R, u, e, u, Ju);
    b[m] = contract(oc.R, u, Ju, u, e);
    grad[m] = contract(oc.R, e, Ju, u, Ju) + contract(oc.R, u, Ju, e, Ju);
  }
  return grad + oc.J.transpose() * (a + b);
}

double sec_value(const OrthoCurvature& oc, const Vec4& x, const Vec4& y) { return contract(oc.R, x, y, x, y); }

void orthonormalize(Vec4& x, Vec4& y) {
  x.normalize();
  y -= y.dot(x) * x;
  y.normalize();
}

// Projected ascent (sign = +1) or descent (sign = -1) on the unit sphere with
// accept-if-improved step halving; never returns a worse value.
double refine_holomorphic(const OrthoCurvature& oc, Vec4& u, int iterations, double sign) {
  double best = sign * hol_value(oc, u);
  double eta = 0.5;
  for (int it = 0; it < iterations && eta > 1e-12; ++it) {
    Vec4 g = sign * hol_gradient(oc, u);
    g -= g.dot(u) * u;
    const double gn = g.norm();
    if (gn < 1e-300) break;
    const Vec4 trial = (u + eta * g / gn).normalized();
    const double v = sign * hol_value(oc, trial);
    if (v > best) {
      best = v;
      u = trial;
      eta = std::min(1.0, eta * 1.5);
    } else {
      eta *= 0.5;
    }
  }
  return sign * best;
}

double refine_sectional(const OrthoCurvature& oc, Vec4& x, Vec4& y, int iterations, double sign) {
  double best = sign * sec_value(oc, x, y);
  double eta = 0.5;
  for (int it = 0; it < iterations && eta > 1e-12; ++it) {
    Vec4 gx, gy;
    for (int m = 0; m < 4; ++m) {
      const Vec4 e = Vec4::Unit(m);
      gx[m] = 2.0 * contract(oc.R, e, y, x, y);
      gy[m] = 2.0 * contract(oc.R, x, e, x, y);
    }
    gx *= sign;
    gy *= sign;
    // Tangent space of the Stiefel manifold at (x, y), moved in the plane's complement.
    gx -= gx.dot(x) * x + gx.dot(y) * y;
    gy -= gy.dot(x) * x + gy.dot(y) * y;
    const double gn = std::sqrt(gx.squaredNorm() + gy.squaredNorm());
    if (gn < 1e-300) break;
    Vec4 tx = x + eta * gx / gn, ty = y + eta * gy / gn;
    orthonormalize(tx, ty);
    const double v = sign * sec_value(oc, tx, ty);
    if (v > best) {
      best = v;
      x = tx;
      y = ty;
      eta = std::min(1.0, eta * 1.5);
    } else {
      eta *= 0.5;
    }
  }
  return sign * best;
}

Vec4 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 u;
  do {
    u = Vec4(n(rng), n(rng), n(rng), n(rng));
  } while (u.norm() < 1e-8);
  return u.normalized();
}

}  // namespace

CurvatureExtrema estimate_extrema(const AmbientModel& model, const SampleSpec& spec) {
  if (spec.points < 1 || spec.directions < 1 || spec.refine_iterations < 0)
    throw std::invalid_argument("sample spec needs points >= 1, directions >= 1, refine_iterations >= 0");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double admissible = model.chart_radius() - model.margin();
  const double radius = std::min(spec.point_radius, 0.999 * admissible);

  CurvatureExtrema ex;
  ex.k1 = ex.K_min = std::numeric_limits<double>::infinity();
  ex.k2 = ex.K_max = -std::numeric_limits<double>::infinity();
  ex.points = spec.points;
  ex.directions = spec.directions;

  for (int i = 0; i < spec.points; ++i) {
    // Radial strata uniform in the volume of the 4-ball.
    const double r = radius * std::pow((i + uni(rng)) / spec.points, 0.25);
    const ChartPoint p{0, random_unit(rng) * r};
    const OrthoCurvature oc = ortho_curvature(model, p);

    struct Candidate {
      double value;
      Vec4 x, y;
    };
    Candidate hmin{std::numeric_limits<double>::infinity(), {}, {}}, hmax{-hmin.value, {}, {}};
    Candidate smin = hmin, smax = hmax;
    for (int d = 0; d < spec.directions; ++d) {
      const Vec4 u = random_unit(rng);
      const double h = hol_value(oc, u);
      if (h < hmin.value) hmin = {h, u, Vec4::Zero()};
      if (h > hmax.value) hmax = {h, u, Vec4::Zero()};
      Vec4 x = random_unit(rng), y = random_unit(rng);
      orthonormalize(x, y);
      const double s = sec_value(oc, x, y);
      if (s < smin.value) smin = {s, x, y};
      if (s > smax.value) smax = {s, x, y};
    }
    hmin.value = refine_holomorphic(oc, hmin.x, spec.refine_iterations, -1.0);
    hmax.value = refine_holomorphic(oc, hmax.x, spec.refine_iterations, 1.0);
    smin.value = refine_sectional(oc, smin.x, smin.y, spec.refine_iterations, -1.0);
    smax.value = refine_sectional(oc, smax.x, smax.y, spec.refine_iterations, 1.0);

    auto witness = [&](const Candidate& c) { return Witness{p, oc.E * c.x, oc.E * c.y, c.value}; };
    if (hmin.value < ex.k1) {
      ex.k1 = hmin.value;
      ex.k1_witness = witness(hmin);
    }
    if (hmax.value > ex.k2) {
      ex.k2 = hmax.value;
      ex.k2_witness = witness(hmax);
    }
    if (smin.value < ex.K_min) {
      ex.K_min = smin.value;
      ex.K_min_witness = witness(smin);
    }
    if (smax.value > ex.K_max) {
      ex.K_max = smax.value;
      ex.K_max_witness = witness(smax);
    }
  }

  ex.positive = ex.k1 > 0.0;
  if (ex.positive) {
    ex.lambda = ex.k2 / ex.k1;
  } else {
    ex.lambda = std::numeric_limits<double>::quiet_NaN();
    std::ostringstream os;
    os << "holomorphic sectional curvature not positive (k1 = " << ex.k1 << ")";
    ex.flag = os.str();
  }
  return ex;
}

double holomorphic_witness_value(const AmbientModel& model, const Witness& w) {
  const PointCurvature pc = curvature_at(model, w.point);
  return hol_sectional_normalized(pc.curvature.R, pc.metric.g, pc.metric.J, w.x);
}

double sectional_witness_value(const AmbientModel& model, const Witness& w) {
  const PointCurvature pc = curvature_at(model, w.point);
  return sectional_normalized(pc.curvature.R, pc.metric.g, w.x, w.y);
}

PinchingReport check_pinching_bounds(const CurvatureExtrema& ex, double tol) {
  PinchingReport r;
  r.upper_bound = 1.5 * ex.k2 - 0.5 * ex.k1;
  r.lower_bound = 0.75 * ex.k1 - 0.5 * ex.k2;
  r.slack_upper = r.upper_bound - ex.K_max;
  r.slack_lower = ex.K_min - r.lower_bound;
  r.passed = r.slack_upper >= -tol && r.slack_lower >= -tol;
  return r;
}

void require_orthonormal(const Mat4& g, const Mat4& frame, double tol) {
  const double err = (frame.transpose() * g * frame - Mat4::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= tol)) {
    std::ostringstream os;
    os << "frame not orthonormal (max deviation " << err << ")";
    throw FrameError(os.str());
  }
}

BergerReport berger_mixed_check(const Tensor4& R, const Mat4& g, const Mat4& frame, const CurvatureExtrema& ex,
                                double tol) {
  require_orthonormal(g, frame);
  BergerReport r;
  const Vec4 e1 = frame.col(0), e2 = frame.col(1), e3 = frame.col(2), e4 = frame.col(3);
  r.K3121 = contract(R, e3, e1, e2, e1);
  r.K3424 = contract(R, e3, e4, e2, e4);
  r.lhs = std::abs(r.K3121) + std::abs(r.K3424);
  r.spread = ex.K_max - ex.K_min;
  r.pinched = 2.0 * ex.k2 - 1.25 * ex.k1;
  r.slack_spread = r.spread - r.lhs;
  r.slack_pinched = r.pinched - r.spread;
  r.passed = r.slack_spread >= -tol && r.slack_pinched >= -tol;
  return r;
}

AsdFrameReport check_asd_frame(const MetricData& m, const Mat4& frame) {
  require_orthonormal(m.g, frame, 1e-8);
  AsdFrameReport r;
  r.frame = frame;
  auto entries = [&](const Mat4& f) { return Mat4(f.transpose() * m.omega * f); };
  Mat4 M = entries(frame);
  auto asd_dev = [](const Mat4& A) {
    return std::max({std::abs(A(0, 1) - A(2, 3)), std::abs(A(0, 2) + A(1, 3)), std::abs(A(0, 3) - A(1, 2))});
  };
  auto sd_dev = [](const Mat4& A) {
    return std::max({std::abs(A(0, 1) + A(2, 3)), std::abs(A(0, 2) - A(1, 3)), std::abs(A(0, 3) + A(1, 2))});
  };
  // A self-dual Kähler form becomes anti-self-dual after an odd permutation of the frame.
  if (sd_dev(M) < asd_dev(M)) {
    r.frame.col(2).swap(r.frame.col(3));
    r.swapped = true;
    M = entries(r.frame);
  }
  r.y = M(0, 1);
  r.z = M(0, 2);
  r.w = M(0, 3);
  r.pattern_residual = std::max(asd_dev(M), (M + M.transpose()).cwiseAbs().maxCoeff());
  r.norm_residual = std::abs(r.y * r.y + r.z * r.z + r.w * r.w - 1.0);
  return r;
}

}  // namespace smcf
