#include "smcf/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "smcf/errors.hpp"

namespace smcf {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::I: return "I";
    case Regime::II: return "II";
    case Regime::OutOfRange: return "OutOfRange";
  }
  return "?";
}

double threshold_regime_I(double lambda) {
  const double a = 53.0 * lambda - 53.0, b = 48.0 - 24.0 * lambda;
  return 53.0 * (lambda - 1.0) / std::sqrt(a * a + b * b);
}

double threshold_regime_II(double lambda) {
  const double a = 8.0 * lambda - 5.0, b = 12.0 - 6.0 * lambda;
  return a / std::sqrt(a * a + b * b);
}

DeltaThreshold delta_threshold(double lambda) {
  if (!(lambda >= 1.0)) throw std::invalid_argument("lambda = k2/k1 must be >= 1");
  if (lambda >= 2.0) return {1.0, Regime::OutOfRange};
  if (lambda < 11.0 / 7.0) return {threshold_regime_I(lambda), Regime::I};
  return {threshold_regime_II(lambda), Regime::II};
}

namespace {

double sine_of(double c) {
  if (!(std::abs(c) <= 1.0)) throw std::invalid_argument("cos alpha must lie in [-1, 1]");
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

double ric_bound_A(double c, double k1, double k2) {
  const double s = sine_of(c);
  const double q = 53.0 / 16.0;
  return (3.0 * c + q * s) * k1 - (1.5 * c + q * s) * k2;
}

double ric_bound_B(double c, double k1, double k2) {
  const double s = sine_of(c);
  return c * (3.0 * k1 - 1.5 * k2) - s * (2.0 * k2 - 1.25 * k1);
}

double constant_C(double delta, double k1, double k2) {
  if (!(k1 > 0.0) || !(k2 >= k1)) throw HypothesisError("constant C needs 0 < k1 <= k2");
  const DeltaThreshold t = delta_threshold(k2 / k1);
  if (t.regime == Regime::OutOfRange)
    throw HypothesisError("constant C needs lambda < 2, got lambda = " + fmt(k2 / k1));
  if (!(delta > t.delta_star)) {
    throw HypothesisError("delta = " + fmt(delta) + " does not exceed the threshold " + fmt(t.delta_star) +
                          " (deficit " + fmt(t.delta_star - delta) + ")");
  }
  if (delta > 1.0) throw HypothesisError("delta must not exceed 1");
  auto f = [&](double c) { return std::max(ric_bound_A(c, k1, k2), ric_bound_B(c, k1, k2)); };
  const int n = 10000;
  const double h = (1.0 - delta) / n;
  int best = 0;
  double best_value = f(delta);
  for (int i = 1; i <= n; ++i) {
    const double v = f(i == n ? 1.0 : delta + i * h);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }
  double lo = delta + std::max(best - 1, 0) * h, hi = std::min(1.0, delta + (best + 1) * h);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({best_value, f1, f2, f(lo), f(hi)});
}

ThresholdProfile make_profile(double k1, double k2, double delta) {
  ThresholdProfile p;
  p.k1 = k1;
  p.k2 = k2;
  p.delta = delta;
  if (!(k1 > 0.0)) {
    p.lambda = std::numeric_limits<double>::quiet_NaN();
    p.note = "k1 = " + fmt(k1) + " is not positive";
    return p;
  }
  p.lambda = k2 / k1;
  if (!(p.lambda >= 1.0)) {
    p.note = "lambda = " + fmt(p.lambda) + " is below 1";
    return p;
  }
  const DeltaThreshold t = delta_threshold(p.lambda);
  p.regime = t.regime;
  p.delta_star = t.delta_star;
  if (t.regime == Regime::OutOfRange) {
    p.note = "lambda = " + fmt(p.lambda) + " is not below 2";
    return p;
  }
  if (!(delta > t.delta_star) || delta > 1.0) {
    p.note = "min cos alpha = " + fmt(delta) + " does not exceed delta* = " + fmt(t.delta_star);
    return p;
  }
  p.C = constant_C(delta, k1, k2);
  p.hypothesis_met = true;
  return p;
}

// ---------------------------------------------------------------- pointwise check

const BoundCheck& PointwiseRicReport::check(const std::string& name) const {
  for (const BoundCheck& c : checks)
    if (c.name == name) return c;
  throw std::out_of_range("no bound named " + name);
}

bool PointwiseRicReport::all_passed(const std::vector<std::string>& excluded) const {
  for (const BoundCheck& c : checks) {
    if (std::find(excluded.begin(), excluded.end(), c.name) != excluded.end()) continue;
    if (!c.passed) return false;
  }
  return true;
}

PointwiseRicReport pointwise_ric_check(const AmbientModel& model, const ChartPoint& p, const AdaptedFrame& frame,
                                       double k1, double k2, double tol) {
  const MetricData m = model.metric_at(p);
  const FrameResiduals res = frame_residuals(m, frame);
  const double worst = std::max({res.orthonormality, res.omega_form, res.j_form, res.angle_identity});
  if (!(worst <= 1e-8)) throw FrameError("frame is not adapted (residual " + fmt(worst) + ")");

  const CurvatureTensor curv = model.riemann_at(p);
  const Tensor4 R = change_basis(curv.R, frame.matrix());
  PointwiseRicReport r;
  const double c = frame.cos_alpha, s = frame.sin_alpha;
  r.cos_alpha = c;
  r.sin_alpha = s;
  r.k1 = k1;
  r.k2 = k2;
  r.k1_positive = k1 > 0.0;
  r.orientation_ok = c >= 0.0;
  r.ric_direct = (m.J * frame.e1).dot(curv.ricci * frame.e2);
  // Indices 0..3 stand for e1..e4.
  r.K2121 = R(1, 0, 1, 0);
  r.K2323 = R(1, 2, 1, 2);
  r.K2424 = R(1, 3, 1, 3);
  r.K3121 = R(2, 0, 1, 0);
  r.K3424 = R(2, 3, 1, 3);
  r.R22 = r.K2121 + r.K2323 + r.K2424;
  r.ric_decomposed = c * r.R22 + s * (r.K3121 + r.K3424);
  r.decomposition_residual = std::abs(r.ric_direct - r.ric_decomposed);
  r.A = ric_bound_A(c, k1, k2);
  r.B = ric_bound_B(c, k1, k2);

  const double sc = s * c;
  auto lower = [&](const std::string& name, double value, double bound) {
    r.checks.push_back({name, value, bound, false, value - bound, value - bound >= -tol});
  };
  auto upper = [&](const std::string& name, double value, double bound) {
    r.checks.push_back({name, value, bound, true, bound - value, bound - value >= -tol});
  };
  lower("K2121_lower", r.K2121, 0.25 * ((3.0 + 3.0 * c * c) * k1 - 2.0 * k2));
  lower("K2323_lower", r.K2323, 0.25 * (3.0 * k1 - 2.0 * k2));
  lower("K2424_lower", r.K2424, 0.25 * ((3.0 + 3.0 * s * s) * k1 - 2.0 * k2));
  lower("R22_lower", r.R22, 3.0 * k1 - 1.5 * k2);
  lower("K3121_lower_coef48", r.K3121, ((53.0 + 48.0 * sc) * k1 - 53.0 * k2) / 32.0);
  lower("K3424_lower_coef48", r.K3424, ((53.0 - 48.0 * sc) * k1 - 53.0 * k2) / 32.0);
  lower("K3121_lower_coef24", r.K3121, ((53.0 + 24.0 * sc) * k1 - 53.0 * k2) / 32.0);
  lower("K3424_lower_coef24", r.K3424, ((53.0 - 24.0 * sc) * k1 - 53.0 * k2) / 32.0);
  lower("mixed_sum_lower", r.K3121 + r.K3424, -53.0 / 16.0 * (k2 - k1));
  upper("mixed_sum_abs_upper", std::abs(r.K3121 + r.K3424), 53.0 / 16.0 * (k2 - k1));
  upper("mixed_berger_upper", std::abs(r.K3121) + std::abs(r.K3424), 2.0 * k2 - 1.25 * k1);
  if (r.orientation_ok) {
    lower("ric_lower_A", r.ric_direct, r.A);
    lower("ric_lower_B", r.ric_direct, r.B);
    lower("ric_lower_max_AB", r.ric_direct, std::max(r.A, r.B));
  }
  return r;
}

std::vector<BoundSurvey> survey_bounds(const std::vector<PointwiseRicReport>& reports) {
  std::vector<BoundSurvey> out;
  for (const PointwiseRicReport& r : reports) {
    for (const BoundCheck& c : r.checks) {
      auto it = std::find_if(out.begin(), out.end(), [&](const BoundSurvey& s) { return s.name == c.name; });
      if (it == out.end()) {
        out.push_back({c.name, 0, 0, std::numeric_limits<double>::infinity(), 0.0, 0.0, 0.0});
        it = out.end() - 1;
      }
      ++it->samples;
      if (!c.passed) ++it->violations;
      if (c.slack < it->min_slack) {
        it->min_slack = c.slack;
        it->value_at_min = c.value;
        it->bound_at_min = c.bound;
        it->sincos_at_min = r.sin_alpha * r.cos_alpha;
      }
    }
  }
  return out;
}

void write_discrepancy_report(std::ostream& os, const std::vector<BoundSurvey>& survey, const std::string& context) {
  os << "Pointwise curvature bound survey\n";
  os << "context: " << context << "\n\n";
  os << "name,samples,violations,min_slack,value_at_min,bound_at_min,sincos_at_min\n";
  for (const BoundSurvey& s : survey) {
    os << s.name << ',' << s.samples << ',' << s.violations << ',' << format_double(s.min_slack) << ','
       << format_double(s.value_at_min) << ',' << format_double(s.bound_at_min) << ','
       << format_double(s.sincos_at_min) << '\n';
  }
  os << "\nviolated bounds:\n";
  bool any = false;
  for (const BoundSurvey& s : survey) {
    if (s.violations == 0) continue;
    any = true;
    os << "  " << s.name << ": " << s.violations << " of " << s.samples << " frames, worst slack "
       << format_double(s.min_slack) << "\n";
  }
  if (!any) os << "  none\n";
  os << "\nnote: the coef48 bounds take 48 sin(a)cos(a) k1 inside the bracket. Expanding the long mixed\n"
        "polarization form with Je1 = cos(a) e2 + sin(a) e3 term by term gives 24 sin(a)cos(a) k1 (the\n"
        "coef24 bounds). On the round metric K3121 = -K3424 = (3/4) sin(a)cos(a) k, so coef48 fails\n"
        "whenever sin(a)cos(a) != 0 under either orientation of e3, while coef24 holds with equality.\n"
        "The sum of the two lower bounds, and every bound built from it, is unchanged.\n";
}

void write_threshold_table(std::ostream& os, double lambda_start, double lambda_step, int rows,
                           const std::vector<double>& deltas) {
  os << "lambda,regime,delta_star";
  for (double d : deltas) os << ",C_at_" << format_double(d);
  os << '\n';
  for (int i = 0; i < rows; ++i) {
    const double lambda = lambda_start + i * lambda_step;
    const DeltaThreshold t = delta_threshold(lambda);
    os << format_double(lambda) << ',' << to_string(t.regime) << ',' << format_double(t.delta_star);
    for (double d : deltas) {
      os << ',';
      if (t.regime != Regime::OutOfRange && d > t.delta_star && d <= 1.0)
        os << format_double(constant_C(d, 1.0, lambda));
      else
        os << "NA";
    }
    os << '\n';
  }
}

}  // namespace smcf
