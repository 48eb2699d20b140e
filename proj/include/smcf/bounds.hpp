#pragma once

// Scalar estimates for the Kähler angle under MCF in a pinched Kähler surface:
// thresholds on cos alpha as functions of the pinching ratio lambda = k2 / k1,
// the Ricci lower bounds A and B, the constant C, and a pointwise check of the
// frame curvature bounds against an actual curvature tensor.

#include <iosfwd>
#include <string>
#include <vector>

#include "smcf/ambient.hpp"
#include "smcf/surface.hpp"

namespace smcf {

enum class Regime { I, II, OutOfRange };

std::string to_string(Regime r);

// 53 (lambda - 1) / sqrt((53 lambda - 53)^2 + (48 - 24 lambda)^2)
double threshold_regime_I(double lambda);
// (8 lambda - 5) / sqrt((8 lambda - 5)^2 + (12 - 6 lambda)^2)
double threshold_regime_II(double lambda);

struct DeltaThreshold {
  double delta_star = 0.0;
  Regime regime = Regime::I;
};

// Regime I on [1, 11/7), II on [11/7, 2), OutOfRange (delta_star = 1) from 2 on.
// Throws std::invalid_argument for lambda < 1 or NaN.
DeltaThreshold delta_threshold(double lambda);

// A(c) = (3c + 53/16 s) k1 - (3/2 c + 53/16 s) k2 and
// B(c) = c (3 k1 - 3/2 k2) - s (2 k2 - 5/4 k1), with s = sqrt(max(0, 1 - c^2)).
double ric_bound_A(double c, double k1, double k2);
double ric_bound_B(double c, double k1, double k2);

// min over c in [delta, 1] of max(A(c), B(c)), from 10^4 samples refined by golden section.
// Throws HypothesisError unless k1 > 0, lambda < 2 and delta_star < delta <= 1.
double constant_C(double delta, double k1, double k2);

struct ThresholdProfile {
  double k1 = 0.0, k2 = 0.0, lambda = 0.0;
  Regime regime = Regime::OutOfRange;
  double delta_star = 1.0;
  double delta = 0.0;
  double C = 0.0;  // 0 when the hypothesis fails
  bool hypothesis_met = false;
  std::string note;  // why the hypothesis fails, empty otherwise
};

// Never throws for finite input; failures of k1 > 0, lambda < 2 or delta > delta_star
// are reported through hypothesis_met and note.
ThresholdProfile make_profile(double k1, double k2, double delta);

struct BoundCheck {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool upper = false;  // value <= bound instead of value >= bound
  double slack = 0.0;  // value - bound, or bound - value for upper bounds
  bool passed = false;
};

struct PointwiseRicReport {
  double cos_alpha = 0.0, sin_alpha = 0.0;
  double k1 = 0.0, k2 = 0.0;
  bool k1_positive = false;
  bool orientation_ok = false;  // cos alpha >= 0, where the A and B bounds are derived
  double ric_direct = 0.0;      // Ric(J e1, e2)
  double ric_decomposed = 0.0;  // cos R22 + sin (K3121 + K3424)
  double decomposition_residual = 0.0;
  double K2121 = 0.0, K2323 = 0.0, K2424 = 0.0, K3121 = 0.0, K3424 = 0.0, R22 = 0.0;
  double A = 0.0, B = 0.0;
  std::vector<BoundCheck> checks;

  const BoundCheck& check(const std::string& name) const;
  // Every check whose name is not in `excluded` passed.
  bool all_passed(const std::vector<std::string>& excluded = {}) const;
};

// The K3121 and K3424 lower bounds appear twice: with coefficient 48 on sin cos
// (suffix coef48) and with coefficient 24 (suffix coef24). Expanding the mixed
// polarization term by term gives 24, and the coef48 version already fails on
// the round metric whenever sin alpha cos alpha != 0.
inline const std::vector<std::string>& coef48_bound_names() {
  static const std::vector<std::string> names{"K3121_lower_coef48", "K3424_lower_coef48"};
  return names;
}

// Frame must satisfy the adapted-frame invariants to 1e-8 (FrameError otherwise).
PointwiseRicReport pointwise_ric_check(const AmbientModel& model, const ChartPoint& p, const AdaptedFrame& frame,
                                       double k1, double k2, double tol = 1e-6);

struct BoundSurvey {
  std::string name;
  int samples = 0;
  int violations = 0;
  double min_slack = 0.0;
  double value_at_min = 0.0;
  double bound_at_min = 0.0;
  double sincos_at_min = 0.0;
};

std::vector<BoundSurvey> survey_bounds(const std::vector<PointwiseRicReport>& reports);

// Plain-text report of the bounds that fail systematically, with the per-bound survey table.
void write_discrepancy_report(std::ostream& os, const std::vector<BoundSurvey>& survey, const std::string& context);

// CSV: lambda,regime,delta_star,C_at_<delta>... with k1 = 1, k2 = lambda; "NA" where C is undefined.
void write_threshold_table(std::ostream& os, double lambda_start, double lambda_step, int rows,
                           const std::vector<double>& deltas);

}  // namespace smcf
