#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "zeq/spaces.hpp"

using namespace zeq;

namespace {

SpacePtr make(const WeightModel& m, int n) { return std::make_shared<const SectionSpace>(build_space(m, n)); }

CVector unit_vector(int d, int j) {
  CVector e = CVector::Zero(d);
  e[j] = 1.0;
  return e;
}

double max_identity_error(const CMatrix& a) {
  return (a - CMatrix::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(PolynomialSpace, FubiniStudyNormsMatchBetaFunction) {
  for (int n : {1, 2, 5, 17, 50}) {
    const auto sp = build_space(WeightModel::fubini_study(), n);
    ASSERT_EQ(sp.dim(), n + 1);
    for (int j = 0; j <= n; ++j) {
      const double log_beta = std::lgamma(j + 1.0) + std::lgamma(n - j + 1.0) - std::lgamma(n + 2.0);
      EXPECT_NEAR(2.0 * sp.log_scales()[j], log_beta, 1e-8) << "N=" << n << " j=" << j;
    }
  }
}

TEST(PolynomialSpace, FubiniStudyDegreeTwoDiagonal) {
  const auto sp = build_space(WeightModel::fubini_study(), 2);
  const double want[] = {1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0};
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(std::exp(2.0 * sp.log_scales()[j]), want[j], 1e-10);
  EXPECT_EQ(max_identity_error(sp.transform()), 0.0);
}

TEST(PolynomialSpace, PoincareBasisOrthonormalUnderPolarQuadrature) {
  const auto m = WeightModel::poincare(0.05);
  const int n = 10;
  const auto sp = build_space(m, n);
  ASSERT_EQ(sp.dim(), n);
  boost::math::quadrature::exp_sinh<double> radial;
  const int na = 48;
  std::vector<cplx> logs;
  std::vector<double> errs;
  for (int j = 0; j < n; ++j)
    for (int k = j; k < n; ++k) {
      auto part = [&](bool imag) {
        return radial.integrate([&](double r) {
          double s = 0.0;
          for (int a = 0; a < na; ++a) {
            const cplx z = std::polar(r, 2.0 * kPi * (a + 0.25) / na);
            sp.raw_logs(z, logs, errs);
            const cplx v = std::exp(logs[j] + std::conj(logs[k]) + weight_log(m, n, z)) * base_density(m, z);
            s += imag ? v.imag() : v.real();
          }
          return s * 2.0 * kPi / na * r;
        });
      };
      EXPECT_NEAR(part(false), j == k ? 1.0 : 0.0, 1e-7) << j << "," << k;
      EXPECT_NEAR(part(true), 0.0, 1e-7) << j << "," << k;
    }
}

TEST(PolynomialSpace, DimensionsAndDegreeChecks) {
  EXPECT_EQ(build_space(WeightModel::poincare(0.05), 7).dim(), 7);
  EXPECT_EQ(expected_dimension(ModelKind::kFubiniStudy, 7), 8);
  EXPECT_THROW(build_space(WeightModel::fubini_study(), 0), DomainError);
  EXPECT_THROW(build_space(WeightModel::hyperbolic_gamma2(), 2), DomainError);
}

TEST(Orthonormalize, TwoByTwo) {
  CMatrix g(2, 2);
  g << 2.0, 1.0, 1.0, 2.0;
  const auto o = orthonormalize(g);
  EXPECT_LT(max_identity_error(o.transform.adjoint() * g * o.transform), 1e-14);
  EXPECT_EQ(o.transform(0, 1), cplx(0.0));
  EXPECT_NEAR(o.min_eig, 1.0, 1e-14);
  EXPECT_NEAR(o.max_eig, 3.0, 1e-14);
}

TEST(Orthonormalize, ComplexHermitian) {
  CMatrix g(3, 3);
  g << 4.0, cplx(1, 1), 0.5, cplx(1, -1), 3.0, cplx(0, 0.2), 0.5, cplx(0, -0.2), 2.0;
  const auto o = orthonormalize(g);
  EXPECT_LT(max_identity_error(o.transform.adjoint() * g * o.transform), 1e-13);
}

TEST(Orthonormalize, RejectsIndefiniteAndNonHermitian) {
  CMatrix g(2, 2);
  g << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(orthonormalize(g), NumericalError);
  g << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(orthonormalize(g), NumericalError);
}

TEST(Theta, Theta3AndTheta3FourthCoefficients) {
  const auto t = modular::theta3_series(10);
  const std::vector<double> want{1, 2, 0, 0, 2, 0, 0, 0, 0, 2, 0};
  EXPECT_EQ(t, want);
  // Sums of four squares.
  const auto b = modular::theta3_4th_series(9);
  const std::vector<double> r4{1, 8, 24, 32, 24, 48, 96, 64, 24, 104};
  EXPECT_EQ(b, r4);
}

TEST(Theta, JacobiIdentityOnSeries) {
  const int m = 200;
  const auto a = modular::theta2_4th_series(m), b = modular::theta3_4th_series(m), c = modular::theta4_4th_series(m);
  for (int k = 0; k <= m; ++k) EXPECT_EQ(b[k], a[k] + c[k]) << "k=" << k;
}

TEST(Theta, JacobiIdentityAtPoints) {
  for (cplx tau : {cplx(0, 1), cplx(0.3, 0.7), cplx(-0.45, 1.9)}) {
    const auto t = modular::theta_logs(tau);
    const cplx a = std::exp(4.0 * t.log_theta[0]), b = std::exp(4.0 * t.log_theta[1]), c = std::exp(4.0 * t.log_theta[2]);
    EXPECT_LT(std::abs(b - a - c), 1e-13 * std::abs(b));
  }
}

TEST(CuspForms, DimensionIsDegreeMinusTwo) {
  for (int n = 3; n <= 12; ++n) {
    EXPECT_EQ(modular::cusp_form_dimension(n), n - 2);
    EXPECT_EQ(static_cast<int>(cusp_monomials(n).size()), n - 2);
    EXPECT_EQ(expected_dimension(ModelKind::kHyperbolicGamma2, n), n - 2);
  }
}

TEST(CuspForms, MonomialsVanishAtTheCusp) {
  for (const auto& mono : cusp_monomials(7)) EXPECT_EQ(monomial_qseries(mono, 20)[0], 0.0);
  const auto sp = build_space(WeightModel::hyperbolic_gamma2(), 6);
  for (const auto& s : sp.qexp()) EXPECT_LT(std::abs(s[0]), 1e-9 * std::abs(s[1]) + 1e-12);
}

TEST(CuspForms, GramIsPositiveAndOrthonormalized) {
  const auto sp = build_space(WeightModel::hyperbolic_gamma2(), 3);
  EXPECT_EQ(sp.dim(), 1);
  EXPECT_GT(sp.min_eigenvalue(), 0.0);
  const auto sp5 = build_space(WeightModel::hyperbolic_gamma2(), 5);
  EXPECT_GT(sp5.min_eigenvalue(), 0.0);
  EXPECT_LT(max_identity_error(sp5.transform().adjoint() * sp5.gram() * sp5.transform()), 1e-10);
}

TEST(CuspForms, DirectPeterssonQuadratureAgrees) {
  for (int n : {3, 4, 6, 8, 10}) {
    const auto sp = build_space(WeightModel::hyperbolic_gamma2(), n);
    const CMatrix g = petersson_gram_direct(sp);
    EXPECT_LT(max_identity_error(sp.transform().adjoint() * g * sp.transform()), 1e-6) << "N=" << n;
  }
}

TEST(CuspForms, DirectQuadratureIndependentOfDomainShift) {
  const auto sp = build_space(WeightModel::hyperbolic_gamma2(), 5);
  const CMatrix g = petersson_gram_direct(sp, 2.0);
  EXPECT_LT(max_identity_error(sp.transform().adjoint() * g * sp.transform()), 1e-6);
}

TEST(Evaluate, SingleTermPolynomial) {
  const auto sp = make(WeightModel::fubini_study(), 6);
  const cplx z(0.4, -1.3);
  for (int j = 0; j <= 6; ++j) {
    const double log_beta = std::lgamma(j + 1.0) + std::lgamma(7.0 - j) - std::lgamma(8.0);
    const cplx want = std::pow(z, j) / std::exp(0.5 * log_beta);
    EXPECT_LT(std::abs(evaluate(*sp, unit_vector(7, j), z).value() - want), 1e-12 * std::abs(want));
  }
}

TEST(Evaluate, Linearity) {
  for (const auto& sp : {make(WeightModel::poincare(0.05), 12), make(WeightModel::hyperbolic_gamma2(), 6)}) {
    const auto a = sample_section(sp, 1), b = sample_section(sp, 2);
    const cplx alpha(0.3, -2.0), beta(1.5, 0.25);
    const CVector c = alpha * a.coeffs + beta * b.coeffs;
    const cplx z = sp->model().is_polynomial() ? cplx(0.7, 0.2) : cplx(0.2, 0.8);
    const auto va = evaluate(a, z), vb = evaluate(b, z), vc = evaluate(*sp, c, z);
    const double scale = std::abs(alpha) * std::exp(va.log_scale) + std::abs(beta) * std::exp(vb.log_scale);
    EXPECT_LT(std::abs(vc.value() - alpha * va.value() - beta * vb.value()), 1e-10 * scale);
  }
}

TEST(Evaluate, QSeriesAgreesWithThetaRoute) {
  const auto sp = make(WeightModel::hyperbolic_gamma2(), 4);
  const auto s = sample_section(sp, 9);
  const cplx tau(0.0, 1.0);
  const auto q = evaluate_qseries(*sp, s.coeffs, tau);
  const int len = static_cast<int>(sp->qexp().front().size());
  const auto q2 = evaluate_qseries(*sp, s.coeffs, tau, std::min(2 * sp->q_truncation(), len - 1));
  const auto th = evaluate(s, tau);
  const double scale = std::exp(q.log_scale);
  EXPECT_LE(std::abs(q.value() - q2.value()), (q.rel_error + q2.rel_error) * scale + 1e-14 * scale);
  EXPECT_LE(std::abs(q.value() - th.value()), q.rel_error * scale + th.rel_error * std::exp(th.log_scale));
  EXPECT_LE(q.rel_error, 1e-10);
}

TEST(Evaluate, QSeriesRejectsPointsBelowCuspHeight) {
  const auto sp = make(WeightModel::hyperbolic_gamma2(), 4);
  EXPECT_THROW(evaluate_qseries(*sp, sample_section(sp, 1).coeffs, cplx(0, 0.1)), DomainError);
}

TEST(Sampling, DeterministicInSeed) {
  const auto sp = make(WeightModel::poincare(0.05), 20);
  EXPECT_EQ(sample_section(sp, 77).coeffs, sample_section(sp, 77).coeffs);
  EXPECT_NE(sample_section(sp, 77).coeffs, sample_section(sp, 78).coeffs);
}

TEST(Sampling, MeanSquaredNormIsDimension) {
  const auto sp = make(WeightModel::fubini_study(), 15);
  const int m = 10000;
  double s = 0.0;
  for (int i = 0; i < m; ++i) s += sample_section(sp, sample_seed(5, 15, i)).coeffs.squaredNorm();
  const double se = std::sqrt(static_cast<double>(sp->dim()) / m);
  EXPECT_NEAR(s / m, sp->dim(), 3.0 * se);
}

TEST(Sampling, ScalarMultipleScalesValues) {
  for (const auto& sp : {make(WeightModel::fubini_study(), 9), make(WeightModel::hyperbolic_gamma2(), 5)}) {
    const auto s = sample_section(sp, 3);
    const cplx k(0.0, 7.0);
    for (cplx z : {cplx(0.1, 0.9), cplx(-0.3, 0.4), cplx(0.45, 2.0)}) {
      const auto v = evaluate(s, z), w = evaluate(*sp, k * s.coeffs, z);
      EXPECT_LT(std::abs(w.value() - k * v.value()), 1e-12 * std::abs(k) * std::exp(v.log_scale));
    }
  }
}

TEST(Modularity, InvariantUnderGammaTwoGenerators) {
  const auto sp = make(WeightModel::hyperbolic_gamma2(), 6);
  const auto s = sample_section(sp, 11);
  const int n = sp->degree();
  for (cplx tau : {cplx(0.1, 0.9), cplx(-0.4, 0.5), cplx(0.3, 1.6), cplx(0.05, 0.3)}) {
    const auto f = evaluate(s, tau);
    const auto f2 = evaluate(s, tau + 2.0);
    const double tol = 1e-9 * std::exp(f.log_scale);
    EXPECT_LT(std::abs(f2.value() - f.value()), tol) << tau;
    const cplx j = 2.0 * tau + 1.0;
    const auto g = evaluate(s, tau / j);
    const cplx want_log = std::log(f.unit) + f.log_scale + 2.0 * n * std::log(j);
    const cplx got_log = std::log(g.unit) + g.log_scale;
    EXPECT_LT(std::abs(std::exp(got_log - want_log) - 1.0), 1e-8) << tau;
  }
}

TEST(Cache, RoundTripThroughParts) {
  for (const auto& m : {WeightModel::poincare(0.05), WeightModel::hyperbolic_gamma2()}) {
    const auto sp = build_space(m, 7);
    const auto back = std::make_shared<const SectionSpace>(SectionSpace::from_parts(m, 7, parts_of(sp), sp.options()));
    EXPECT_EQ(back->transform(), sp.transform());
    EXPECT_EQ(back->log_scales(), sp.log_scales());
    const auto a = sample_section(std::make_shared<const SectionSpace>(sp), 4);
    const auto b = sample_section(back, 4);
    const cplx z(0.2, 0.6);
    EXPECT_EQ(evaluate(a, z).value(), evaluate(b, z).value());
  }
}

TEST(Cache, RejectsMismatchedParts) {
  const auto sp = build_space(WeightModel::fubini_study(), 4);
  EXPECT_THROW(SectionSpace::from_parts(WeightModel::fubini_study(), 5, parts_of(sp), {}), DomainError);
}
