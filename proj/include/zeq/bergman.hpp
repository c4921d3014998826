#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zeq/error.hpp"
#include "zeq/geometry.hpp"
#include "zeq/quadrature.hpp"
#include "zeq/spaces.hpp"

namespace zeq {

/// log P_N(z,z) = log sum_j |S_j(z)|^2 + weight_log(N, z) over the orthonormal basis.
inline double bergman_log_diag(const SectionSpace& sp, cplx z) {
  std::vector<cplx> logs;
  std::vector<double> errs;
  sp.raw_logs(z, logs, errs);
  const int d = sp.dim();
  double peak = -kInf;
  for (const auto& l : logs) peak = std::max(peak, l.real());
  if (peak == -kInf) return -kInf;
  const double w = weight_log(sp.model(), sp.degree(), z);
  if (sp.diagonal()) {
    double s = 0.0;
    for (const auto& l : logs) s += std::exp(2.0 * (l.real() - peak));
    return 2.0 * peak + std::log(s) + w;
  }
  CVector u(d);
  for (int i = 0; i < d; ++i) u[i] = std::exp(logs[i] - peak);
  // S_j = sum_i T(i,j) u_i
  const CVector s = sp.transform().transpose() * u;
  return 2.0 * peak + std::log(s.squaredNorm()) + w;
}

inline double bergman_diag(const SectionSpace& sp, cplx z) { return std::exp(bergman_log_diag(sp, z)); }

struct BergmanProfile {
  SpacePtr space;
  std::vector<cplx> grid;
  std::vector<double> values;
  std::vector<double> log_values;
};

inline BergmanProfile bergman_profile(const SpacePtr& sp, const std::vector<cplx>& grid) {
  BergmanProfile p{sp, grid, {}, {}};
  for (const auto& z : grid) {
    const double l = bergman_log_diag(*sp, z);
    p.log_values.push_back(l);
    p.values.push_back(std::exp(l));
  }
  return p;
}

inline std::string profile_csv(const BergmanProfile& p) {
  std::string out = "re,im,P_N,logP_N\n";
  char buf[160];
  for (size_t i = 0; i < p.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.grid[i].real(), p.grid[i].imag(), p.values[i],
                  p.log_values[i]);
    out += buf;
  }
  return out;
}

namespace detail {

// Sum over j of |(S_j | g_k)(tau)|^2 y^{2N}, the Bergman density pulled back by g_k.
inline double slashed_density(const SectionSpace& sp, cplx tau, int coset) {
  std::vector<cplx> logs;
  std::vector<double> errs;
  sp.raw_logs_slashed(tau, coset, logs, errs);
  double peak = -kInf;
  for (const auto& l : logs) peak = std::max(peak, l.real());
  CVector u(sp.dim());
  for (int i = 0; i < sp.dim(); ++i) u[i] = std::exp(logs[i] - peak);
  const CVector s = sp.transform().transpose() * u;
  return std::exp(2.0 * peak + std::log(s.squaredNorm()) + 2.0 * sp.degree() * std::log(tau.imag()));
}

}  // namespace detail

/// (integral of P_N against the base measure) / d_N.
inline double trace_check(const SectionSpace& sp, double quad_tol = 1e-10) {
  const auto& m = sp.model();
  if (m.is_polynomial()) {
    // Radial: dA = pi e^x dx with x = log |z|^2.
    auto f = [&](double x) {
      const cplx z(std::exp(0.5 * x), 0.0);
      return std::exp(bergman_log_diag(sp, z) + m.log_base_radial(x) + x + std::log(kPi));
    };
    // The integrand decays like e^{-|x|}; beyond |x| = 700 it is below 1e-300.
    const double v = gk_integrate(f, -700.0, 0.0, quad_tol, "trace_check") +
                     gk_integrate(f, 0.0, 700.0, quad_tol, "trace_check");
    return v / sp.dim();
  }
  // Gamma(2)\H as the six coset images of the SL2(Z) fundamental domain.
  const double inner_tol = 0.1 * quad_tol;
  auto column = [&](double x) {
    const double y0 = std::sqrt(1.0 - x * x);
    double s = 0.0;
    for (int k = 0; k < 6; ++k) {
      auto g = [&](double y) {
        const cplx tau(x, y);
        return detail::slashed_density(sp, tau, k) / (y * y);
      };
      s += gk_integrate(g, y0, 1.5, inner_tol, "trace_check") + gk_integrate(g, 1.5, kInf, inner_tol, "trace_check");
    }
    return s;
  };
  const double v = gk_integrate(column, -0.5, 0.0, quad_tol, "trace_check") +
                   gk_integrate(column, 0.0, 0.5, quad_tol, "trace_check");
  return v / sp.dim();
}

struct LeadingCoeffFit {
  std::vector<int> degrees;
  std::vector<double> values;  // P_N(z,z)
  double b0 = 0.0;
  double b1 = 0.0;
  double max_residual = 0.0;
  double predicted = 0.0;  // curvature_density / base_density at z
  double relative_error() const { return std::abs(b0 - predicted) / std::abs(predicted); }
};

/// Least-squares fit P_N(z,z) = b0 N + b1 over the given spaces (ascending degrees).
inline LeadingCoeffFit leading_coeff_fit(const std::vector<SpacePtr>& spaces, cplx z) {
  if (spaces.size() < 3) throw DomainError("leading-coefficient fit needs at least 3 degrees");
  LeadingCoeffFit fit;
  for (size_t i = 0; i < spaces.size(); ++i) {
    if (i > 0 && spaces[i]->degree() <= spaces[i - 1]->degree())
      throw DomainError("leading-coefficient fit needs strictly ascending degrees");
    fit.degrees.push_back(spaces[i]->degree());
    fit.values.push_back(bergman_diag(*spaces[i], z));
  }
  const int n = static_cast<int>(spaces.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    a(i, 0) = fit.degrees[i];
    a(i, 1) = 1.0;
    b[i] = fit.values[i];
  }
  const Eigen::Vector2d c = a.colPivHouseholderQr().solve(b);
  if (!std::isfinite(c[0]) || !std::isfinite(c[1])) throw NumericalError("degenerate leading-coefficient fit");
  fit.b0 = c[0];
  fit.b1 = c[1];
  fit.max_residual = (a * c - b).cwiseAbs().maxCoeff();
  const auto& m = spaces.front()->model();
  fit.predicted = curvature_density(m, z) / base_density(m, z);
  return fit;
}

inline LeadingCoeffFit leading_coeff_fit(const WeightModel& model, const std::vector<int>& degrees, cplx z,
                                         const SpaceOptions& opts = {}) {
  std::vector<SpacePtr> spaces;
  for (int n : degrees) spaces.push_back(std::make_shared<const SectionSpace>(build_space(model, n, opts)));
  return leading_coeff_fit(spaces, z);
}

struct PullbackDensity {
  double value = 0.0;       // density of (1/N) Phi_N^* omega_FS at z
  double value_2h = 0.0;    // same with twice the step
  double curvature = 0.0;   // curvature_density(z)
  bool flagged = false;     // step-halving disagreement above 1e-3 relative
  double deviation() const { return std::abs(value - curvature); }
};

/// (1/N) [N curvature_density(z) + Lap log P_N(z,z) / (4 pi)] with the
/// Laplacian by the centred five-point stencil.
inline PullbackDensity fs_pullback_density(const SectionSpace& sp, cplx z, double fd_step = 1e-3) {
  if (!(fd_step > 0.0)) throw DomainError("finite-difference step must be positive");
  const auto& m = sp.model();
  if (m.chart() == Chart::kUpperHalfPlane && z.imag() <= 4.0 * fd_step)
    throw DomainError("point too close to the chart boundary for the stencil");
  const double c = curvature_density(m, z);
  auto lap = [&](double h) {
    const double f0 = bergman_log_diag(sp, z);
    const double s = bergman_log_diag(sp, z + h) + bergman_log_diag(sp, z - h) + bergman_log_diag(sp, z + cplx(0, h)) +
                     bergman_log_diag(sp, z - cplx(0, h));
    if (!std::isfinite(f0) || !std::isfinite(s))
      throw NumericalError("Bergman kernel vanishes in the finite-difference stencil");
    return (s - 4.0 * f0) / (h * h);
  };
  PullbackDensity out;
  out.curvature = c;
  const double n = sp.degree();
  out.value = c + lap(fd_step) / (4.0 * kPi * n);
  out.value_2h = c + lap(2.0 * fd_step) / (4.0 * kPi * n);
  out.flagged = std::abs(out.value - out.value_2h) > 1e-3 * std::abs(out.value);
  return out;
}

}  // namespace zeq
