#include <gtest/gtest.h>

#include <complex>
#include <random>

#include "smcf/ambient.hpp"
#include "smcf/errors.hpp"

using namespace smcf;

namespace {

AmbientModel fs(double s = 1.0) {
  ModelSpec m;
  m.kind = ModelKind::FubiniStudy;
  m.scale = s;
  return AmbientModel(m);
}

Vec4 random_point(std::mt19937_64& rng, double radius) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec4 v(n(rng), n(rng), n(rng), n(rng));
  return v.normalized() * radius * std::pow(u(rng), 0.25);
}

// Hermitian form h_ab = d_a dbar_b of (1/s) log(1 + |z|^2), independent of the jet code.
Mat4 fs_metric_closed_form(const Vec4& x, double s) {
  using C = std::complex<double>;
  const C z[2] = {C(x[0], x[1]), C(x[2], x[3])};
  const double n = 1.0 + std::norm(z[0]) + std::norm(z[1]);
  C h[2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) h[a][b] = ((a == b ? n : 0.0) - std::conj(z[a]) * z[b]) / (n * n * s);
  auto as_complex = [&](int i) {
    C v[2] = {0.0, 0.0};
    v[i / 2] = (i % 2 == 0) ? C(1, 0) : C(0, 1);
    return std::array<C, 2>{v[0], v[1]};
  };
  Mat4 g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const auto X = as_complex(i), Y = as_complex(j);
      C acc = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) acc += h[a][b] * X[a] * std::conj(Y[b]);
      g(i, j) = acc.real();
    }
  return g;
}

// Constant holomorphic sectional curvature k space form.
double space_form(const MetricData& m, double k, const Vec4& X, const Vec4& Y, const Vec4& Z, const Vec4& W) {
  auto g = [&](const Vec4& a, const Vec4& b) { return a.dot(m.g * b); };
  auto w = [&](const Vec4& a, const Vec4& b) { return a.dot(m.omega * b); };
  return 0.25 * k *
         (g(X, Z) * g(Y, W) - g(X, W) * g(Y, Z) + w(X, Z) * w(Y, W) - w(X, W) * w(Y, Z) + 2.0 * w(X, Y) * w(Z, W));
}

}  // namespace

TEST(Ambient, FlatOrigin) {
  AmbientModel flat(ModelSpec{ModelKind::FlatC2});
  const MetricData m = flat.metric_at({0, Vec4::Zero()});
  EXPECT_EQ(m.g, Mat4::Identity());
  EXPECT_EQ(m.J, standard_complex_structure());
  EXPECT_EQ(m.omega, m.J.transpose());
  EXPECT_DOUBLE_EQ(m.omega(0, 1), 1.0);
  const CurvatureTensor ct = flat.riemann_at({0, Vec4(0.3, 0.1, -0.2, 0.5)});
  for (double v : ct.R.a) EXPECT_EQ(v, 0.0);
  for (double v : flat.christoffels_at({0, Vec4(1, 2, 3, 4)}).a) EXPECT_EQ(v, 0.0);
}

TEST(Ambient, FubiniStudyOriginScale) {
  for (double s : {1.0, 2.5, 0.3}) {
    const MetricData m = fs(s).metric_at({0, Vec4::Zero()});
    EXPECT_LT((m.g - Mat4::Identity() / s).cwiseAbs().maxCoeff(), 1e-15);
    for (double v : fs(s).christoffels_at({0, Vec4::Zero()}).a) EXPECT_LT(std::abs(v), 1e-15);
  }
}

TEST(Ambient, MetricMatchesClosedForm) {
  std::mt19937_64 rng(7);
  for (double s : {1.0, 0.5}) {
    const AmbientModel model = fs(s);
    for (int t = 0; t < 100; ++t) {
      const Vec4 x = random_point(rng, 3.0);
      const MetricData m = model.metric_at({0, x});
      EXPECT_LT((m.g - fs_metric_closed_form(x, s)).cwiseAbs().maxCoeff(), 1e-13);
      EXPECT_LT((m.g * m.g_inv - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((m.J * m.J + Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_LT((m.J.transpose() * m.g * m.J - m.g).cwiseAbs().maxCoeff(), 1e-14);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(m.omega(i, j), m.g.col(j).dot(m.J.col(i)), 1e-15);
    }
  }
}

TEST(Ambient, ChristoffelsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  const AmbientModel model = fs(1.3);
  const double h = 1e-4;
  for (int t = 0; t < 20; ++t) {
    const Vec4 x = random_point(rng, 2.0);
    const Tensor3 gamma = model.christoffels_at({0, x});
    std::array<Mat4, 4> dg;
    for (int m = 0; m < 4; ++m) {
      Vec4 e = Vec4::Zero();
      e[m] = h;
      dg[m] = (model.metric_at({0, x + e}).g - model.metric_at({0, x - e}).g) / (2 * h);
    }
    const MetricData md = model.metric_at({0, x});
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          EXPECT_EQ(gamma(k, i, j), gamma(k, j, i));
          double ref = 0.0;
          for (int l = 0; l < 4; ++l) ref += 0.5 * md.g_inv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
          EXPECT_NEAR(gamma(k, i, j), ref, 1e-6);
        }
    // Metric compatibility: d_m g_ij = Gamma_{i m}^l g_lj + Gamma_{j m}^l g_il.
    for (int m = 0; m < 4; ++m)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double v = 0.0;
          for (int l = 0; l < 4; ++l) v += gamma(l, m, i) * md.g(l, j) + gamma(l, m, j) * md.g(i, l);
          EXPECT_NEAR(dg[m](i, j), v, 1e-6);
        }
  }
}

TEST(Ambient, FubiniStudyIsSpaceForm) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double s : {1.0, 2.0}) {
    const AmbientModel model = fs(s);
    for (int t = 0; t < 10; ++t) {
      const ChartPoint p{0, random_point(rng, 4.0)};
      const MetricData m = model.metric_at(p);
      const CurvatureTensor ct = model.riemann_at(p);
      double scale = 0.0;
      for (double v : ct.R.a) scale = std::max(scale, std::abs(v));
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          for (int c = 0; c < 4; ++c)
            for (int d = 0; d < 4; ++d) {
              const double ref = space_form(m, 4.0 * s, Vec4::Unit(a), Vec4::Unit(b), Vec4::Unit(c), Vec4::Unit(d));
              EXPECT_NEAR(ct.R(a, b, c, d), ref, 1e-11 * scale + 1e-13);
            }
      EXPECT_LT((ct.ricci - 6.0 * s * m.g).cwiseAbs().maxCoeff(), 1e-10 * (1 + m.g.norm()));
      EXPECT_NEAR(ct.scalar, 24.0 * s, 1e-9);
    }
  }
}

TEST(Ambient, CurvatureSymmetries) {
  std::mt19937_64 rng(5);
  ModelSpec spec;
  spec.kind = ModelKind::PerturbedFS;
  spec.epsilon = 0.05;
  spec.perturbation = Perturbation::MixedBump;
  spec.perturbation_derivatives = DerivativeMode::Analytic;
  for (const AmbientModel& model : {fs(1.0), AmbientModel(spec)}) {
    for (int t = 0; t < 20; ++t) {
      const ChartPoint p{0, random_point(rng, 0.9)};
      const CurvatureTensor ct = model.riemann_at(p);
      const Mat4 J = model.metric_at(p).J;
      const auto& R = ct.R;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          for (int c = 0; c < 4; ++c)
            for (int d = 0; d < 4; ++d) {
              EXPECT_NEAR(R(a, b, c, d), -R(b, a, c, d), 1e-8);
              EXPECT_NEAR(R(a, b, c, d), -R(a, b, d, c), 1e-8);
              EXPECT_NEAR(R(a, b, c, d), R(c, d, a, b), 1e-8);
              EXPECT_NEAR(R(a, b, c, d) + R(a, c, d, b) + R(a, d, b, c), 0.0, 1e-8);
              EXPECT_NEAR(R(a, b, c, d), contract(R, Vec4::Unit(a), Vec4::Unit(b), J.col(c), J.col(d)), 1e-8);
            }
    }
  }
}

TEST(Ambient, FiniteDifferencePerturbationMatchesAnalytic) {
  std::mt19937_64 rng(9);
  for (auto kind : {Perturbation::RadialBump, Perturbation::MixedBump}) {
    ModelSpec spec;
    spec.kind = ModelKind::PerturbedFS;
    spec.epsilon = 0.01;
    spec.perturbation = kind;
    ModelSpec exact = spec;
    exact.perturbation_derivatives = DerivativeMode::Analytic;
    const AmbientModel fd(spec), an(exact);
    for (int t = 0; t < 10; ++t) {
      const ChartPoint p{0, random_point(rng, 0.9)};
      const CurvatureTensor a = fd.riemann_at(p), b = an.riemann_at(p);
      for (std::size_t i = 0; i < a.R.a.size(); ++i) EXPECT_NEAR(a.R.a[i], b.R.a[i], 1e-5);
      EXPECT_LT((fd.metric_at(p).g - an.metric_at(p).g).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Ambient, ZeroEpsilonReproducesFubiniStudy) {
  std::mt19937_64 rng(1);
  ModelSpec spec;
  spec.kind = ModelKind::PerturbedFS;
  spec.scale = 1.7;
  const AmbientModel pert(spec), base = fs(1.7);
  for (int t = 0; t < 20; ++t) {
    const ChartPoint p{t % 2, random_point(rng, 5.0)};
    EXPECT_LT((pert.metric_at(p).g - base.metric_at(p).g).cwiseAbs().maxCoeff(), 1e-14);
    const auto a = pert.riemann_at(p), b = base.riemann_at(p);
    for (std::size_t i = 0; i < a.R.a.size(); ++i) EXPECT_NEAR(a.R.a[i], b.R.a[i], 1e-14);
  }
}

TEST(Ambient, ChartTransitionConsistency) {
  std::mt19937_64 rng(13);
  ModelSpec spec;
  spec.kind = ModelKind::PerturbedFS;
  spec.epsilon = 0.02;
  spec.bump_radius = 1.5;
  spec.perturbation = Perturbation::MixedBump;
  spec.perturbation_derivatives = DerivativeMode::Analytic;
  for (const AmbientModel& model : {fs(1.0), AmbientModel(spec)}) {
    int tested = 0;
    while (tested < 20) {
      const ChartPoint p{0, random_point(rng, 2.5)};
      if (std::hypot(p.x[0], p.x[1]) < 0.6) continue;
      const auto y = model.to_chart(p, 1);
      ASSERT_TRUE(y);
      const ChartPoint q{1, *y};
      ASSERT_LT((model.to_chart(q, 0).value() - p.x).norm(), 1e-12);
      const Mat4 jac = model.transition_jacobian(p, 1);
      const Mat4 g0 = model.metric_at(p).g, g1 = model.metric_at(q).g;
      EXPECT_LT((jac.transpose() * g1 * jac - g0).cwiseAbs().maxCoeff(), 1e-10);
      // The transition is holomorphic.
      const Mat4 J = standard_complex_structure();
      EXPECT_LT((jac * J - J * jac).cwiseAbs().maxCoeff(), 1e-12);
      const auto r0 = model.riemann_at(p), r1 = model.riemann_at(q);
      EXPECT_NEAR(r0.scalar, r1.scalar, 1e-6);
      const Vec4 X = Vec4(0.3, -0.2, 0.7, 0.1);
      const Vec4 Xq = jac * X;
      EXPECT_NEAR(contract(r0.R, X, J * X, X, J * X), contract(r1.R, Xq, J * Xq, Xq, J * Xq), 1e-6);
      ++tested;
    }
  }
}

TEST(Ambient, BestChartPicksSmallerCoordinates) {
  const AmbientModel model = fs();
  const ChartPoint far{0, Vec4(5.0, 0.0, 1.0, 0.0)};
  const ChartPoint b = model.best_chart(far);
  EXPECT_EQ(b.chart, 1);
  EXPECT_LT(b.x.norm(), far.x.norm());
  const ChartPoint near{0, Vec4(0.1, 0.0, 0.2, 0.0)};
  EXPECT_EQ(model.best_chart(near).chart, 0);
}

TEST(Ambient, DomainErrorsNameTheChart) {
  const AmbientModel model = fs();
  try {
    model.metric_at({1, Vec4(9.5, 0, 0, 0)});
    FAIL() << "expected domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("chart 1"), std::string::npos);
  }
  EXPECT_THROW(model.metric_at({2, Vec4::Zero()}), DomainError);
  ModelSpec bad;
  bad.kind = ModelKind::Indefinite;
  EXPECT_THROW(AmbientModel(bad).metric_at({0, Vec4::Zero()}), DomainError);
}

TEST(Ambient, CheckKahler) {
  const auto flat = AmbientModel(ModelSpec{ModelKind::FlatC2}).check_kahler({0, Vec4(1, 2, 3, 4)}, 1e-12);
  EXPECT_TRUE(flat.passed);
  for (const auto& r : flat.residuals) EXPECT_EQ(r.value, 0.0) << r.name;

  std::mt19937_64 rng(2);
  ModelSpec pert;
  pert.kind = ModelKind::PerturbedFS;
  pert.epsilon = 0.01;
  for (const AmbientModel& model : {fs(1.0), AmbientModel(pert)}) {
    for (int t = 0; t < 10; ++t) {
      const auto rep = model.check_kahler({0, random_point(rng, 2.0)}, 1e-6);
      EXPECT_TRUE(rep.passed) << rep.failure;
      for (const auto& r : rep.residuals)
        if (r.name == "d_omega") EXPECT_LE(r.value, 1e-5);
    }
  }

  ModelSpec indefinite;
  indefinite.kind = ModelKind::Indefinite;
  const auto rep = AmbientModel(indefinite).check_kahler({0, Vec4(0.1, 0, 0, 0)}, 1e-6);
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.failure, "positive_definite");
}

TEST(Ambient, ComplexHyperbolicHasNegativeHolomorphicCurvature) {
  ModelSpec spec;
  spec.kind = ModelKind::ComplexHyperbolic;
  spec.scale = 1.0;
  const AmbientModel model(spec);
  const ChartPoint p{0, Vec4(0.2, 0.1, -0.3, 0.05)};
  const MetricData m = model.metric_at(p);
  const CurvatureTensor ct = model.riemann_at(p);
  const Vec4 X = Vec4(1, 0.5, -0.2, 0.3);
  const Vec4 JX = m.J * X;
  const double n2 = X.dot(m.g * X);
  EXPECT_NEAR(contract(ct.R, X, JX, X, JX) / (n2 * n2), -4.0, 1e-9);
  EXPECT_FALSE(model.in_domain({0, Vec4(0.95, 0, 0, 0)}));
}
