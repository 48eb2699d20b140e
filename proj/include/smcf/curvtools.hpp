#pragma once

// Curvature algebra on a CurvatureTensor: sectional and holomorphic sectional
// quartics, their polarization identities, sampled curvature extrema and the
// pinching checks built on them.
//
// Quartics are unnormalized: K(X, Y) = R(X, Y, X, Y) and K(X) = R(X, JX, X, JX).
// The normalized variants divide by |X ^ Y|^2 and |X|^4.

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "smcf/ambient.hpp"

namespace smcf {

struct PointCurvature {
  MetricData metric;
  CurvatureTensor curvature;
};

PointCurvature curvature_at(const AmbientModel& model, const ChartPoint& p);

double wedge_norm_sq(const Mat4& g, const Vec4& X, const Vec4& Y);

double sectional(const Tensor4& R, const Vec4& X, const Vec4& Y);
double sectional_normalized(const Tensor4& R, const Mat4& g, const Vec4& X, const Vec4& Y);
double hol_sectional(const Tensor4& R, const Mat4& J, const Vec4& X);
double hol_sectional_normalized(const Tensor4& R, const Mat4& g, const Mat4& J, const Vec4& X);

// K(V) for one (curvature, metric) pair, memoized by the exact direction.
class HolSecEvaluator {
 public:
  HolSecEvaluator(const CurvatureTensor& curvature, const MetricData& metric);

  double operator()(const Vec4& V) const;
  double normalized(const Vec4& V) const;

  const CurvatureTensor& curvature() const { return *curvature_; }
  const MetricData& metric() const { return *metric_; }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  const CurvatureTensor* curvature_;
  const MetricData* metric_;
  mutable std::map<std::array<double, 4>, double> cache_;
};

// (1/32)[3K(X+JY) + 3K(X-JY) - K(X+Y) - K(X-Y) - 4K(X) - 4K(Y)]
double sectional_via_polarization(const HolSecEvaluator& hse, const Vec4& X, const Vec4& Y);

struct MixedPolarization {
  double short_form = 0.0;  // (1/2)[K(Y+Z, X) - K(X, Y) - K(X, Z)], sectional terms polarized
  double long_form = 0.0;   // expansion in holomorphic sectional quartics only
  double direct = 0.0;      // R(X, Y, X, Z)
};

MixedPolarization mixed_via_polarization(const HolSecEvaluator& hse, const Vec4& X, const Vec4& Y, const Vec4& Z);

// |a - b| / max(|b|, scale), with 0/0 read as 0.
double relative_error(double a, double b, double scale);

// Natural size of R(X, Y, ., .)-type quantities: |X|^2 |Y|^2 times the mean curvature scale.
double curvature_scale(const PointCurvature& pc, const Vec4& X, const Vec4& Y);

// Random vector with independent standard normal components in a g-orthonormal basis.
Vec4 random_tangent(std::mt19937_64& rng, const Mat4& g);
// Columns form a g-orthonormal basis (Cholesky based).
Mat4 orthonormal_basis(const Mat4& g);

struct SampleSpec {
  int points = 16;
  int directions = 256;
  int refine_iterations = 60;
  std::uint64_t seed = 1;
  double point_radius = 1.0;  // sample points of chart 0 with |x| <= point_radius
};

struct Witness {
  ChartPoint point;
  Vec4 x = Vec4::Zero();
  Vec4 y = Vec4::Zero();  // unused for holomorphic witnesses
  double value = 0.0;
};

struct CurvatureExtrema {
  double k1 = 0.0;
  double k2 = 0.0;
  double K_min = 0.0;
  double K_max = 0.0;
  double lambda = 0.0;  // NaN when k1 <= 0
  Witness k1_witness, k2_witness, K_min_witness, K_max_witness;
  bool positive = false;  // k1 > 0
  std::string flag;       // non-empty when the positivity hypothesis fails
  int points = 0;
  int directions = 0;
};

CurvatureExtrema estimate_extrema(const AmbientModel& model, const SampleSpec& spec);
// Recomputes a witness value from scratch.
double holomorphic_witness_value(const AmbientModel& model, const Witness& w);
double sectional_witness_value(const AmbientModel& model, const Witness& w);

struct PinchingReport {
  double upper_bound = 0.0;  // (3/2) k2 - (1/2) k1
  double lower_bound = 0.0;  // (3/4) k1 - (1/2) k2
  double slack_upper = 0.0;  // upper_bound - K_max
  double slack_lower = 0.0;  // K_min - lower_bound
  bool passed = false;
};

PinchingReport check_pinching_bounds(const CurvatureExtrema& ex, double tol = 1e-6);

struct BergerReport {
  double K3121 = 0.0;
  double K3424 = 0.0;
  double lhs = 0.0;          // |K3121| + |K3424|
  double spread = 0.0;       // K_max - K_min
  double pinched = 0.0;      // 2 k2 - (5/4) k1
  double slack_spread = 0.0;   // spread - lhs
  double slack_pinched = 0.0;  // pinched - spread
  bool passed = false;
};

// frame columns e1..e4 must be g-orthonormal to 1e-10.
BergerReport berger_mixed_check(const Tensor4& R, const Mat4& g, const Mat4& frame, const CurvatureExtrema& ex,
                                double tol = 1e-6);

void require_orthonormal(const Mat4& g, const Mat4& frame, double tol = 1e-10);

struct AsdFrameReport {
  Mat4 frame;     // possibly with e3, e4 swapped
  bool swapped = false;
  double y = 0.0, z = 0.0, w = 0.0;  // J e1 = y e2 + z e3 + w e4
  double pattern_residual = 0.0;     // deviation of the J matrix from the anti-self-dual pattern
  double norm_residual = 0.0;        // |y^2 + z^2 + w^2 - 1|
};

// Orients an orthonormal frame so that the Kähler form is anti-self-dual and
// reads off the J matrix entries.
AsdFrameReport check_asd_frame(const MetricData& m, const Mat4& frame);

}  // namespace smcf
