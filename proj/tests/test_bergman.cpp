#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "zeq/bergman.hpp"

using namespace zeq;

namespace {

SpacePtr make(const WeightModel& m, int n) { return std::make_shared<const SectionSpace>(build_space(m, n)); }

}  // namespace

TEST(BergmanDiag, FubiniStudyIsConstant) {
  for (int n : {1, 5, 40}) {
    const auto sp = make(WeightModel::fubini_study(), n);
    for (cplx z : {cplx(0.0), cplx(0.3, -0.2), cplx(4.0, 1.0), cplx(-30.0, 12.0)})
      EXPECT_NEAR(bergman_diag(*sp, z), n + 1.0, 1e-9 * n) << "N=" << n << " z=" << z;
  }
}

TEST(BergmanDiag, MatchesSumOfSquaresOfBasis) {
  const auto m = WeightModel::poincare(0.05);
  const auto sp = make(m, 9);
  const cplx z(0.6, -0.4);
  double s = 0.0;
  for (int j = 0; j < sp->dim(); ++j) {
    CVector e = CVector::Zero(sp->dim());
    e[j] = 1.0;
    s += std::norm(evaluate(*sp, e, z).value());
  }
  EXPECT_NEAR(bergman_diag(*sp, z), s * std::exp(weight_log(m, 9, z)), 1e-12 * s);
}

TEST(BergmanDiag, CuspFormKernelIsModularInvariant) {
  const auto sp = make(WeightModel::hyperbolic_gamma2(), 7);
  for (cplx tau : {cplx(0.1, 0.9), cplx(-0.3, 1.4), cplx(0.45, 0.6)}) {
    const double p = bergman_diag(*sp, tau);
    EXPECT_NEAR(bergman_diag(*sp, tau + 1.0), p, 1e-8 * p);
    EXPECT_NEAR(bergman_diag(*sp, -1.0 / tau), p, 1e-8 * p);
    EXPECT_NEAR(bergman_diag(*sp, tau / (2.0 * tau + 1.0)), p, 1e-8 * p);
  }
}

TEST(BergmanDiag, CuspFormSlashedDensityMatchesKernelAtImage) {
  const auto sp = make(WeightModel::hyperbolic_gamma2(), 5);
  const cplx tau(0.2, 1.1);
  for (int k = 0; k < 6; ++k) {
    const cplx image = modular::cosets()[k].matrix.apply(tau);
    const double p = bergman_diag(*sp, image);
    EXPECT_NEAR(detail::slashed_density(*sp, tau, k), p, 1e-8 * p) << "coset " << k;
  }
}

TEST(TraceCheck, PolynomialModels) {
  for (int n : {3, 20}) {
    EXPECT_NEAR(trace_check(*make(WeightModel::fubini_study(), n)), 1.0, 1e-8);
    EXPECT_NEAR(trace_check(*make(WeightModel::poincare(0.05), n)), 1.0, 1e-8);
  }
}

TEST(TraceCheck, CuspForms) {
  for (int n : {3, 5}) EXPECT_NEAR(trace_check(*make(WeightModel::hyperbolic_gamma2(), n)), 1.0, 1e-7);
}

TEST(LeadingCoefficient, FubiniStudyExact) {
  const auto fit = leading_coeff_fit(WeightModel::fubini_study(), {5, 10, 20}, cplx(0.7, 0.1));
  EXPECT_NEAR(fit.b0, 1.0, 1e-9);
  EXPECT_NEAR(fit.b1, 1.0, 1e-8);
  EXPECT_NEAR(fit.predicted, 1.0, 1e-15);
  EXPECT_LT(fit.max_residual, 1e-8);
}

TEST(LeadingCoefficient, PoincareNearCurvatureRatio) {
  const auto m = WeightModel::poincare(0.05);
  for (cplx z : {cplx(0.0), cplx(1.0, 1.0)}) {
    const auto fit = leading_coeff_fit(m, {25, 50, 100, 200}, z);
    EXPECT_NEAR(fit.predicted, 1.0, 1e-8);
    EXPECT_LT(fit.relative_error(), 0.02) << z;
  }
}

TEST(LeadingCoefficient, RejectsTooFewOrUnsortedDegrees) {
  const auto m = WeightModel::fubini_study();
  EXPECT_THROW(leading_coeff_fit(m, {5, 10}, 0.0), DomainError);
  EXPECT_THROW(leading_coeff_fit(m, {5, 20, 10}, 0.0), DomainError);
}

TEST(Pullback, FubiniStudyEqualsCurvature) {
  const auto sp = make(WeightModel::fubini_study(), 12);
  for (cplx z : {cplx(0.0), cplx(0.5, 0.5), cplx(-1.5, 0.2)}) {
    const auto p = fs_pullback_density(*sp, z);
    EXPECT_LT(p.deviation(), 1e-7 * p.curvature);
    EXPECT_FALSE(p.flagged);
  }
}

TEST(Pullback, PoincareApproachesCurvature) {
  const auto m = WeightModel::poincare(0.05);
  const cplx z(0.3, -0.2);
  const double d20 = fs_pullback_density(*make(m, 20), z).deviation();
  const double d80 = fs_pullback_density(*make(m, 80), z).deviation();
  EXPECT_LT(d80, d20);
}

TEST(Pullback, RejectsBadStep) {
  const auto sp = make(WeightModel::fubini_study(), 4);
  EXPECT_THROW(fs_pullback_density(*sp, 0.0, 0.0), DomainError);
  const auto hy = make(WeightModel::hyperbolic_gamma2(), 4);
  EXPECT_THROW(fs_pullback_density(*hy, cplx(0.0, 0.003), 1e-3), DomainError);
}

TEST(Profile, CsvLayout) {
  const auto sp = make(WeightModel::fubini_study(), 3);
  const auto p = bergman_profile(sp, {cplx(0.0), cplx(1.0, 2.0)});
  ASSERT_EQ(p.values.size(), 2u);
  EXPECT_NEAR(p.values[1], 4.0, 1e-12);
  const std::string csv = profile_csv(p);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "re,im,P_N,logP_N");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
