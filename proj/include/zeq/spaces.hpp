#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <boost/math/special_functions/gamma.hpp>

#include "zeq/error.hpp"
#include "zeq/geometry.hpp"
#include "zeq/quadrature.hpp"
#include "zeq/rng.hpp"
#include "zeq/theta.hpp"

namespace zeq {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using CQSeries = std::vector<cplx>;

struct SpaceOptions {
  double quad_tol = 1e-10;   // Gram quadrature tolerance
  double q_tail_tol = 1e-3;  // q-table tail at the cusp height, relative to the element scale there
  int max_q = 4000;          // cap on q-table length and theta truncation exponent
  double eval_tol = 1e-10;   // largest acceptable truncation error on evaluation
};

/// f(z) stored as unit * exp(log_scale), exp(log_scale) being the sum of the
/// absolute values of the terms that make up f(z); so |unit| <= 1.
struct SectionValue {
  cplx unit;
  double log_scale = 0.0;
  double rel_error = 0.0;  // bound on |error| / exp(log_scale)

  cplx value() const { return unit * std::exp(log_scale); }
  double log_abs() const { return std::log(std::abs(unit)) + log_scale; }
};

/// dim of the L^2 section space: N+1, N, N-2 for the three models.
inline int expected_dimension(ModelKind kind, int degree) {
  switch (kind) {
    case ModelKind::kFubiniStudy: return degree + 1;
    case ModelKind::kPoincareWeighted: return degree;
    case ModelKind::kHyperbolicGamma2: return modular::cusp_form_dimension(degree);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Theta-monomial basis of S_{2N}(Gamma(2)) as q-expansions.

/// A^{1+a} B C^{1+b}, a + b = N - 3, with A = theta2^4, B = theta3^4, C = theta4^4.
inline std::vector<modular::Monomial> cusp_monomials(int degree) {
  if (degree < 3) throw DomainError("S_{2N}(Gamma(2)) is zero for N < 3");
  std::vector<modular::Monomial> out;
  for (int a = 0; a <= degree - 3; ++a) out.push_back({1 + a, 1, 1 + (degree - 3 - a)});
  return out;
}

/// q-expansion (nome exp(pi i tau)) of a theta monomial up to q^{max_exp}.
inline modular::QSeries monomial_qseries(const modular::Monomial& m, int max_exp) {
  using namespace modular;
  QSeries s = pow(theta2_4th_series(max_exp), m.e2, max_exp);
  s = mul(s, pow(theta3_4th_series(max_exp), m.e3, max_exp), max_exp);
  return mul(s, pow(theta4_4th_series(max_exp), m.e4, max_exp), max_exp);
}

namespace detail {

// Tail sum_{k > M} |c_k| r^k of a theta monomial relative to sum_k |c_k| r^k,
// from the majorant A^{e2} B^{e3+e4} (C has the absolute coefficients of B).
inline double monomial_rel_tail(const modular::Monomial& m, int max_exp, double r) {
  using namespace modular;
  const Monomial maj{m.e2, m.e3 + m.e4, 0};
  const QSeries s = monomial_qseries(maj, max_exp);
  const ThetaLogs t = theta_logs(cplx(0.0, -std::log(r) / kPi));
  const double log_total = log_monomial(t, maj).real();
  double partial = 0.0;
  for (int k = static_cast<int>(s.size()) - 1; k >= 0; --k) partial = partial * r + s[k];
  return std::max(0.0, 1.0 - partial * std::exp(-log_total));
}

}  // namespace detail

struct CuspBasis {
  std::vector<modular::Monomial> monomials;
  std::vector<modular::QSeries> series;
  int truncation = 0;
  double rel_tail_bound = 0.0;  // worst element, at the cusp height
};

/// Raw theta-monomial basis of S_{2N}(Gamma(2)) truncated at the first power of
/// two where every majorant tail at Im tau = cusp_height is below q_tail_tol.
inline CuspBasis cusp_basis(int degree, double cusp_height = 0.25, double q_tail_tol = 1e-3, int max_q = 4000) {
  CuspBasis out;
  out.monomials = cusp_monomials(degree);
  const double r = std::exp(-kPi * cusp_height);
  for (int m = 16;; m = std::min(max_q, 2 * m)) {
    double worst = 0.0;
    for (const auto& mono : out.monomials) worst = std::max(worst, detail::monomial_rel_tail(mono, m, r));
    if (worst < q_tail_tol || m >= max_q) {
      out.truncation = m;
      out.rel_tail_bound = worst;
      break;
    }
  }
  for (const auto& mono : out.monomials) out.series.push_back(monomial_qseries(mono, out.truncation));
  return out;
}

// ---------------------------------------------------------------------------
// Cusp-symmetric coordinates.
//
// Sections of weight 2N are ABC (A - rho' B)^D p(w) with D = N - 3, p of degree
// <= D, rho = exp(i pi/3), rho' = conj(rho) and w = (A - rho B)/(A - rho' B).
// The three cusps sit at the cube roots of unity in the w-plane.

namespace detail {

inline const cplx kRho = std::polar(1.0, kPi / 3.0);

struct CuspPoint {
  cplx w;
  cplx log_base;    // log of ABC (A - rho' B)^D, plus any caller-supplied factor
  double base_err;  // relative error of exp(log_base) from ABC and the theta tails
  double e1, e2;    // relative errors of A - rho B and A - rho' B
};

inline CuspPoint cusp_point(const modular::ThetaLogs& t, const modular::SignedPerm& p, int big_d,
                            cplx log_factor) {
  std::array<cplx, 3> l;
  double tail = 0.0;
  for (int x = 0; x < 3; ++x) {
    l[x] = 4.0 * t.log_theta[p.target[x]] + (p.sign[x] < 0 ? cplx(0.0, kPi) : cplx(0.0));
    tail = std::max(tail, 4.0 * t.rel_tail[p.target[x]]);
  }
  const cplx a = std::exp(l[0]), b = std::exp(l[1]);
  const cplx l1 = a - kRho * b, l2 = a - std::conj(kRho) * b;
  const double eps = std::numeric_limits<double>::epsilon();
  const double mag = std::abs(a) + std::abs(b);
  const double e1 = (tail + eps) * mag / std::abs(l1), e2 = (tail + eps) * mag / std::abs(l2);
  return {l1 / l2, log_factor + l[0] + l[1] + l[2] + static_cast<double>(big_d) * std::log(l2), 3.0 * tail + eps,
          e1, e2};
}

// p_0..p_{d-1} at w from the Arnoldi recurrence
//   p_0 = exp(-log_h0), p_{k+1} = (w p_k - sum_{j<=k} H(j,k) p_j) / H(k+1,k),
// returned as mantissas times exp(log_scale). With dp non-null the
// logarithmic derivatives w p_k'(w) / p_k(w) are returned as well.
inline void arnoldi_values(const CMatrix& hess, double log_h0, cplx w, std::vector<cplx>& p, double& log_scale,
                           std::vector<cplx>* dlog = nullptr) {
  const int d = static_cast<int>(hess.rows());
  p.assign(d, 0.0);
  std::vector<cplx> dp(dlog ? d : 0, 0.0);
  p[0] = 1.0;
  log_scale = -log_h0;
  for (int k = 0; k + 1 < d; ++k) {
    cplx v = w * p[k];
    for (int j = 0; j <= k; ++j) v -= hess(j, k) * p[j];
    p[k + 1] = v / hess(k + 1, k);
    if (dlog) {
      cplx dv = p[k] + w * dp[k];
      for (int j = 0; j <= k; ++j) dv -= hess(j, k) * dp[j];
      dp[k + 1] = dv / hess(k + 1, k);
    }
    const double m = std::abs(p[k + 1]);
    if (m > 1e150 || (m < 1e-150 && m > 0.0)) {
      for (int j = 0; j <= k + 1; ++j) p[j] /= m;
      for (auto& x : dp) x /= m;
      log_scale += std::log(m);
    }
  }
  if (dlog) {
    dlog->resize(d);
    for (int k = 0; k < d; ++k) (*dlog)[k] = p[k] == 0.0 ? cplx(0.0) : w * dp[k] / p[k];
  }
}

}  // namespace detail

/// Orthonormalized space of L^2 holomorphic sections at degree N.
///
/// Raw basis u_i (scaled by exp(-log_scales[i])): z^i, i < dim, for the
/// polynomial models; for Gamma(2) the Arnoldi basis ABC (A - rho' B)^D p_i(w)
/// built against a coarse Petersson quadrature (it spans the same space as the
/// theta monomials of cusp_basis, which are too ill-conditioned for large N).
/// gram(i, j) = <u_i, u_j> has unit diagonal, and S_j = sum_i transform(i, j) u_i
/// is orthonormal with transform lower triangular.
class SectionSpace {
 public:
  const WeightModel& model() const { return model_; }
  int degree() const { return degree_; }
  int dim() const { return dim_; }
  const CMatrix& gram() const { return gram_; }
  const CMatrix& transform() const { return transform_; }
  const std::vector<double>& log_scales() const { return log_scales_; }
  bool diagonal() const { return model_.is_polynomial(); }
  const CMatrix& hessenberg() const { return hess_; }
  double log_h0() const { return log_h0_; }
  const std::vector<CQSeries>& qexp() const { return qexp_; }
  /// Absolute noise level of c_n r0^n in each table (r0 = |q| at the cusp height).
  const std::vector<double>& qexp_noise() const { return qexp_noise_; }
  int q_truncation() const { return q_truncation_; }
  double q_tail_bound() const { return q_tail_bound_; }
  double min_eigenvalue() const { return min_eig_; }
  double max_eigenvalue() const { return max_eig_; }
  const SpaceOptions& options() const { return options_; }

  /// Complex logs of u_i(z) and per-element relative error bounds.
  void raw_logs(cplx z, std::vector<cplx>& logs, std::vector<double>& errs) const;

  /// Same for the slashed basis u_i | g_k at tau (g_k the k-th coset representative).
  void raw_logs_slashed(cplx tau, int coset, std::vector<cplx>& logs, std::vector<double>& errs) const;

  /// Raw coefficients r = T c of the section with orthonormal coordinates c.
  CVector raw_coefficients(const CVector& coeffs) const {
    if (coeffs.size() != dim_) throw DomainError("coefficient vector has the wrong length");
    if (diagonal()) return coeffs;
    return transform_ * coeffs;
  }

  struct Parts {
    CMatrix gram;
    std::vector<double> log_scales;
    CMatrix hessenberg;  // Gamma(2) only
    double log_h0 = 0.0;
  };
  static SectionSpace from_parts(const WeightModel& model, int degree, Parts parts, const SpaceOptions& options);

 private:
  friend SectionSpace build_space(const WeightModel&, int, const SpaceOptions&);
  SectionSpace(const WeightModel& m, int n, const SpaceOptions& o)
      : model_(m), degree_(n), dim_(expected_dimension(m.kind(), n)), options_(o) {}
  void finish(CMatrix gram);
  void build_qexp();
  void cusp_logs(cplx tau, const modular::SignedPerm& perm, cplx log_factor, std::vector<cplx>& logs,
                 std::vector<double>& errs) const;

  WeightModel model_;
  int degree_;
  int dim_;
  CMatrix gram_;
  CMatrix transform_;
  std::vector<double> log_scales_;
  CMatrix hess_;
  double log_h0_ = 0.0;
  std::vector<CQSeries> qexp_;
  std::vector<double> qexp_noise_;
  int q_truncation_ = 0;
  double q_tail_bound_ = 0.0;
  double min_eig_ = 1.0, max_eig_ = 1.0;
  SpaceOptions options_;
};

using SpacePtr = std::shared_ptr<const SectionSpace>;

inline void SectionSpace::raw_logs(cplx z, std::vector<cplx>& logs, std::vector<double>& errs) const {
  require_in_chart(model_, z);
  logs.resize(dim_);
  errs.assign(dim_, 0.0);
  if (model_.is_polynomial()) {
    const cplx lz = std::log(z);
    for (int i = 0; i < dim_; ++i) logs[i] = (i == 0 ? cplx(0.0) : static_cast<double>(i) * lz) - log_scales_[i];
    return;
  }
  // Direct theta series above the cusp height, reduction to the SL2(Z)
  // fundamental domain below it: f(tau) = (c tau' + d)^{2N} (f|g)(tau'), g = M^{-1}.
  if (z.imag() >= model_.cusp_height()) return cusp_logs(z, modular::SignedPerm{}, 0.0, logs, errs);
  const auto red = modular::reduce_to_fundamental(z);
  const modular::Mat2 g = red.m.inverse();
  const cplx log_factor = 2.0 * degree_ * std::log(static_cast<double>(g.c) * red.tau + static_cast<double>(g.d));
  cusp_logs(red.tau, modular::cosets()[modular::coset_index(g)].perm, log_factor, logs, errs);
}

inline void SectionSpace::raw_logs_slashed(cplx tau, int coset, std::vector<cplx>& logs,
                                           std::vector<double>& errs) const {
  if (model_.is_polynomial()) throw DomainError("slash action needs a cusp-form space");
  if (coset < 0 || coset >= 6) throw DomainError("coset index out of range");
  require_in_chart(model_, tau);
  cusp_logs(tau, modular::cosets()[coset].perm, 0.0, logs, errs);
}

inline void SectionSpace::cusp_logs(cplx tau, const modular::SignedPerm& perm, cplx log_factor,
                                    std::vector<cplx>& logs, std::vector<double>& errs) const {
  logs.resize(dim_);
  errs.assign(dim_, 0.0);
  const auto t = modular::theta_logs(tau, options_.max_q);
  const double tail = 4.0 * std::max({t.rel_tail[0], t.rel_tail[1], t.rel_tail[2]});
  if (tail * degree_ > options_.eval_tol)
    throw NumericalError("theta truncation error " + std::to_string(tail * degree_) +
                         " exceeds tolerance; increase max_q (M_q)");
  const auto cp = detail::cusp_point(t, perm, degree_ - 3, log_factor);
  std::vector<cplx> p, g;
  double ls = 0.0;
  detail::arnoldi_values(hess_, log_h0_, cp.w, p, ls, &g);
  const double eps = std::numeric_limits<double>::epsilon();
  // First order in the errors of l1 = A - rho B and l2 = A - rho' B: the
  // element is l2^D p_i(l1/l2), so l2 enters with exponent D - w p_i'/p_i.
  const double big_d = degree_ - 3;
  for (int i = 0; i < dim_; ++i) {
    logs[i] = cp.log_base + ls + std::log(p[i]) - log_scales_[i];
    errs[i] = cp.base_err + std::abs(big_d - g[i]) * cp.e2 + std::abs(g[i]) * cp.e1 + 8.0 * (i + 1) * eps;
  }
}

/// Value of sum_i raw[i] exp(logs[i]) as a SectionValue; rel_error combines the
/// per-term bounds with the summation rounding.
inline SectionValue combine_logs(const CVector& raw, const std::vector<cplx>& logs, const std::vector<double>& errs) {
  const double ninf = -std::numeric_limits<double>::infinity();
  double peak = ninf;
  std::vector<double> re(logs.size());
  for (size_t i = 0; i < logs.size(); ++i) {
    const double a = std::abs(raw[i]);
    re[i] = a > 0.0 && std::isfinite(logs[i].real()) ? std::log(a) + logs[i].real() : ninf;
    peak = std::max(peak, re[i]);
  }
  if (peak == ninf) return {cplx(0.0), ninf, 0.0};
  cplx sum = 0.0;
  double abs_sum = 0.0, err = 0.0;
  for (size_t i = 0; i < logs.size(); ++i) {
    if (re[i] == ninf) continue;
    const double mag = std::exp(re[i] - peak);
    sum += raw[i] / std::abs(raw[i]) * std::polar(mag, logs[i].imag());
    abs_sum += mag;
    err += mag * errs[i];
  }
  const double eps = std::numeric_limits<double>::epsilon();
  return {sum / abs_sum, peak + std::log(abs_sum), err / abs_sum + 4.0 * eps * static_cast<double>(logs.size())};
}

// ---------------------------------------------------------------------------
// Quadrature.

namespace detail {

// Diagonal radial Gram entries log ||z^j||^2 (integration variable x = log|z|^2).
inline std::vector<double> radial_log_norms(const WeightModel& m, int degree, int dim, double tol) {
  std::vector<double> out(dim);
  for (int j = 0; j < dim; ++j) {
    auto log_f = [&](double x) {
      return (j + 1) * x + std::log(kPi) + m.log_weight_radial(degree, x) + m.log_base_radial(x);
    };
    out[j] = adaptive_log_integral(log_f, -80.0, 700.0, tol);
  }
  return out;
}

struct PeterssonNode {
  cplx tau;
  double log_weight;  // log(quadrature weight * y^{2N-2})
};

// Tensor Gauss-Legendre nodes on the truncated SL2(Z) fundamental domain
// |x| <= 1/2, sqrt(1-x^2) <= y <= y_max.
inline std::vector<PeterssonNode> fundamental_nodes(int degree, double y_max, int x_order, double y_panel) {
  const auto& gx = GaussLegendre::get(x_order);
  const auto& gy = GaussLegendre::get(16);
  std::vector<PeterssonNode> nodes;
  for (int half = 0; half < 2; ++half) {
    const double xa = half == 0 ? -0.5 : 0.0;
    for (int i = 0; i < gx.size(); ++i) {
      const double x = xa + 0.25 * (1.0 + gx.nodes[i]);
      const double wx = 0.25 * gx.weights[i];
      const double ylo = std::sqrt(1.0 - x * x);
      const int panels = std::max(1, static_cast<int>(std::ceil((y_max - ylo) / y_panel)));
      const double h = (y_max - ylo) / panels;
      for (int p = 0; p < panels; ++p) {
        for (int k = 0; k < gy.size(); ++k) {
          const double y = ylo + h * (p + 0.5 * (1.0 + gy.nodes[k]));
          nodes.push_back({cplx(x, y), std::log(wx * 0.5 * h * gy.weights[k]) + (2.0 * degree - 2.0) * std::log(y)});
        }
      }
    }
  }
  return nodes;
}

// Height above which e^{-2 pi y} y^{2N-2} (a form vanishing to first order at
// the cusp) carries less than `tail` of its mass.
inline double petersson_y_max(int degree, double tail) {
  return std::max(3.0, boost::math::gamma_q_inv(2.0 * degree - 1.0, tail) / (2.0 * kPi));
}

// Arnoldi iteration for multiplication by w on the discrete Petersson space
// (nodes of F times the six coset representatives).
inline void cusp_arnoldi(int degree, const std::vector<PeterssonNode>& nodes, int max_q, CMatrix& hess,
                         double& log_h0) {
  const int d = modular::cusp_form_dimension(degree);
  const auto& reps = modular::cosets();
  const size_t npts = nodes.size() * reps.size();
  std::vector<cplx> w(npts), lb(npts);
  size_t idx = 0;
  for (const auto& node : nodes) {
    const auto t = modular::theta_logs(node.tau, max_q);
    for (const auto& rep : reps) {
      const auto cp = cusp_point(t, rep.perm, degree - 3, 0.5 * node.log_weight);
      w[idx] = cp.w;
      lb[idx] = cp.log_base;
      ++idx;
    }
  }
  double acc = -std::numeric_limits<double>::infinity();
  for (const auto& l : lb) acc = log_add(acc, 2.0 * l.real());
  log_h0 = 0.5 * acc;
  CMatrix q(static_cast<Eigen::Index>(npts), d);
  for (size_t i = 0; i < npts; ++i) q(i, 0) = std::exp(lb[i] - log_h0);
  hess = CMatrix::Zero(d, d);
  for (int k = 0; k + 1 < d; ++k) {
    CVector v(static_cast<Eigen::Index>(npts));
    for (size_t i = 0; i < npts; ++i) v[i] = w[i] * q(i, k);
    for (int pass = 0; pass < 2; ++pass) {
      const CVector c = q.leftCols(k + 1).adjoint() * v;
      v.noalias() -= q.leftCols(k + 1) * c;
      hess.col(k).head(k + 1) += c;
    }
    const double h = v.norm();
    if (!(h > 0.0)) throw NumericalError("Arnoldi breakdown: cusp-form basis is degenerate on the quadrature grid");
    hess(k + 1, k) = h;
    q.col(k + 1) = v / h;
  }
}

// Gram sum_k int_F (u_i|g_k) conj(u_j|g_k) y^{2N} dmu of the raw basis.
inline CMatrix petersson_gram_cosets(const SectionSpace& sp, const std::vector<PeterssonNode>& nodes) {
  const int d = sp.dim(), n = sp.degree();
  constexpr int kBlock = 2048;
  CMatrix acc = CMatrix::Zero(d, d);
  CMatrix u(kBlock, d);
  int row = 0;
  std::vector<cplx> p;
  auto flush = [&] {
    acc.noalias() += u.topRows(row).adjoint() * u.topRows(row);
    row = 0;
  };
  for (const auto& node : nodes) {
    const auto t = modular::theta_logs(node.tau, sp.options().max_q);
    for (const auto& rep : modular::cosets()) {
      const auto cp = cusp_point(t, rep.perm, n - 3, 0.5 * node.log_weight);
      double ls = 0.0;
      arnoldi_values(sp.hessenberg(), sp.log_h0(), cp.w, p, ls);
      for (int i = 0; i < d; ++i) u(row, i) = std::exp(cp.log_base + ls - sp.log_scales()[i]) * p[i];
      if (++row == kBlock) flush();
    }
  }
  flush();
  // acc(i, j) = sum conj(u_i) u_j
  return acc.conjugate();
}

// q-expansion helpers on complex series.
inline CQSeries cmul(const CQSeries& a, const CQSeries& b, int m) {
  CQSeries c(m + 1, 0.0);
  for (int i = 0; i <= m && i < static_cast<int>(a.size()); ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; i + j <= m && j < static_cast<int>(b.size()); ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

inline CQSeries cinv(const CQSeries& a, int m) {
  if (a.empty() || a[0] == 0.0) throw NumericalError("q-series not invertible");
  CQSeries r(m + 1, 0.0);
  r[0] = 1.0 / a[0];
  for (int n = 1; n <= m; ++n) {
    cplx s = 0.0;
    for (int k = 1; k <= n && k < static_cast<int>(a.size()); ++k) s += a[k] * r[n - k];
    r[n] = -s * r[0];
  }
  return r;
}

inline CQSeries to_complex(const modular::QSeries& s) { return CQSeries(s.begin(), s.end()); }

// Tail estimate of sum_n c_n r^n beyond the table: last coefficient magnitude
// times a geometric factor whose ratio includes the observed coefficient growth.
inline double qtable_tail(const CQSeries& c, double r) {
  const int m = static_cast<int>(c.size()) - 1;
  if (m < 16) return kInf;
  double hi = 0.0, lo = 0.0;
  for (int n = m - 7; n <= m; ++n) hi = std::max(hi, std::abs(c[n]));
  for (int n = m - 15; n <= m - 8; ++n) lo = std::max(lo, std::abs(c[n]));
  if (hi == 0.0) return 0.0;
  const double growth = lo > 0.0 ? std::max(1.0, std::pow(hi / lo, 1.0 / 8.0)) : kInf;
  const double ratio = r * growth;
  if (ratio >= 1.0) return kInf;
  return hi * std::pow(r, m + 1) / (1.0 - ratio);
}

}  // namespace detail

/// Lower-triangular T with T^* G T = I for Hermitian positive definite G, plus
/// the extreme eigenvalues of G.
struct Orthonormalization {
  CMatrix transform;
  double min_eig;
  double max_eig;
};

inline Orthonormalization orthonormalize(const CMatrix& gram) {
  const Eigen::Index d = gram.rows();
  if (gram.cols() != d) throw DomainError("Gram matrix must be square");
  if ((gram - gram.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, gram.cwiseAbs().maxCoeff()))
    throw NumericalError("Gram matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(gram, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 1e-13 * hi))
    throw NumericalError("Gram matrix not positive definite: eigenvalues in [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
  // Reverse, factor G_rev = L L^*, T_rev = L^{-*} (upper), reverse back (lower).
  Eigen::PermutationMatrix<Eigen::Dynamic> rev(d);
  for (Eigen::Index i = 0; i < d; ++i) rev.indices()[i] = static_cast<int>(d - 1 - i);
  const CMatrix id = CMatrix::Identity(d, d);
  auto factor = [&](const CMatrix& g) {
    Eigen::LLT<CMatrix> llt(rev.transpose() * g * rev);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed");
    return CMatrix(rev * CMatrix(llt.matrixL().solve(id)).adjoint() * rev.transpose());
  };
  CMatrix t = factor(gram);
  // One refinement sweep against the residual Gram.
  try {
    const CMatrix t2 = t * factor(t.adjoint() * gram * t);
    if ((t2.adjoint() * gram * t2 - id).cwiseAbs().maxCoeff() < (t.adjoint() * gram * t - id).cwiseAbs().maxCoeff())
      t = t2;
  } catch (const NumericalError&) {
  }
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) t(i, j) = 0.0;
  const double err = (t.adjoint() * gram * t - id).cwiseAbs().maxCoeff();
  if (err > 1e-8) throw NumericalError("orthonormalization residual " + std::to_string(err) + " exceeds 1e-8");
  return {t, lo, hi};
}

inline void SectionSpace::finish(CMatrix gram) {
  gram_ = std::move(gram);
  if (diagonal()) {
    transform_ = CMatrix::Identity(dim_, dim_);
    min_eig_ = max_eig_ = 1.0;
    return;
  }
  auto o = orthonormalize(gram_);
  transform_ = std::move(o.transform);
  min_eig_ = o.min_eig;
  max_eig_ = o.max_eig;
}

inline void SectionSpace::build_qexp() {
  if (model_.is_polynomial()) return;
  // Coefficients from a DFT of samples on Im tau = y0 (period 2 in Re tau):
  // f(x + i y0) = sum_n c_n r0^n e^{i pi n x}. The sample count doubles until
  // the upper half of the spectrum is at rounding level.
  const double y0 = model_.cusp_height();
  const double log_r0 = -kPi * y0;
  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<cplx> logs;
  std::vector<double> errs;
  Eigen::FFT<double> fft;
  for (int ms = 64;; ms *= 2) {
    std::vector<std::vector<cplx>> vals(dim_, std::vector<cplx>(ms));
    std::vector<double> noise(dim_, 0.0);
    for (int j = 0; j < ms; ++j) {
      raw_logs(cplx(-1.0 + 2.0 * j / ms, y0), logs, errs);
      for (int i = 0; i < dim_; ++i) {
        vals[i][j] = std::exp(logs[i]);
        noise[i] = std::max(noise[i], std::abs(vals[i][j]) * (errs[i] + 4.0 * eps * std::log2(ms)));
      }
    }
    std::vector<CQSeries> hat(dim_);
    bool resolved = true;
    for (int i = 0; i < dim_; ++i) {
      fft.fwd(hat[i], vals[i]);
      double top = 0.0, peak = 0.0;
      for (int n = 0; n < ms; ++n) {
        hat[i][n] *= (n % 2 ? -1.0 : 1.0) / ms;  // shift of the sample origin to x = -1
        peak = std::max(peak, std::abs(hat[i][n]));
        if (n >= ms / 2) top = std::max(top, std::abs(hat[i][n]));
      }
      if (top > std::max(1e-13 * peak, 10.0 * noise[i])) resolved = false;
    }
    if (!resolved && ms < 2 * options_.max_q) continue;
    // Keep coefficients above the noise level; beyond them the table is noise.
    int len = 1;
    for (int i = 0; i < dim_; ++i)
      for (int n = 0; n < ms / 2; ++n)
        if (std::abs(hat[i][n]) > noise[i]) len = std::max(len, n + 1);
    qexp_.assign(dim_, CQSeries(len));
    qexp_noise_ = noise;
    std::vector<double> scale(dim_, 0.0);
    for (int i = 0; i < dim_; ++i)
      for (int n = 0; n < len; ++n) {
        qexp_[i][n] = hat[i][n] * std::exp(-n * log_r0);
        scale[i] += std::abs(hat[i][n]);
      }
    // Smallest truncation whose tail at y0 is below q_tail_tol of the element scale.
    q_truncation_ = 0;
    for (int i = 0; i < dim_; ++i) {
      double tail = 0.0;
      int m = len - 1;
      while (m > 0 && tail + std::abs(hat[i][m]) < options_.q_tail_tol * scale[i]) tail += std::abs(hat[i][m--]);
      q_truncation_ = std::max(q_truncation_, m);
    }
    q_tail_bound_ = 0.0;
    for (int i = 0; i < dim_; ++i) {
      double tail = 0.0;
      for (int n = q_truncation_ + 1; n < len; ++n) tail += std::abs(hat[i][n]);
      q_tail_bound_ = std::max(q_tail_bound_, tail / scale[i]);
    }
    return;
  }
}

/// Builds the section space of degree N: Gram by quadrature, then orthonormalization.
inline SectionSpace build_space(const WeightModel& model, int degree, const SpaceOptions& opts = {}) {
  if (degree < 1) throw DomainError("degree must be >= 1");
  if (model.kind() == ModelKind::kHyperbolicGamma2 && degree < 3)
    throw DomainError("S_{2N}(Gamma(2)) is zero for N < 3");
  SectionSpace sp(model, degree, opts);
  if (model.is_polynomial()) {
    const auto logs = detail::radial_log_norms(model, degree, sp.dim_, opts.quad_tol);
    sp.log_scales_.resize(sp.dim_);
    for (int j = 0; j < sp.dim_; ++j) sp.log_scales_[j] = 0.5 * logs[j];
    sp.finish(CMatrix::Identity(sp.dim_, sp.dim_));
    return sp;
  }
  const double y_max = detail::petersson_y_max(degree, 1e-13);
  int x_order = 12;
  double y_panel = 0.5;
  detail::cusp_arnoldi(degree, detail::fundamental_nodes(degree, y_max, x_order, y_panel), opts.max_q, sp.hess_,
                       sp.log_h0_);
  sp.log_scales_.assign(sp.dim_, 0.0);
  // The Arnoldi basis is orthonormal on the coarse grid; refine until the Gram
  // stops changing.
  CMatrix prev = CMatrix::Identity(sp.dim_, sp.dim_);
  double change = kInf;
  for (int round = 0; round < 5 && !(change < opts.quad_tol); ++round) {
    x_order = x_order * 3 / 2;
    y_panel *= 0.6;
    CMatrix cur = detail::petersson_gram_cosets(sp, detail::fundamental_nodes(degree, y_max, x_order, y_panel));
    change = (cur - prev).cwiseAbs().maxCoeff();
    prev = std::move(cur);
  }
  if (!(change < opts.quad_tol)) throw QuadratureError("Petersson Gram quadrature did not converge", change);
  CMatrix g(sp.dim_, sp.dim_);
  for (int i = 0; i < sp.dim_; ++i) {
    sp.log_scales_[i] = 0.5 * std::log(prev(i, i).real());
    for (int j = 0; j < sp.dim_; ++j) g(i, j) = prev(i, j) / std::sqrt(prev(i, i).real() * prev(j, j).real());
  }
  sp.finish(0.5 * (g + g.adjoint()));
  sp.build_qexp();
  return sp;
}

inline SectionSpace SectionSpace::from_parts(const WeightModel& model, int degree, Parts parts,
                                             const SpaceOptions& options) {
  SectionSpace sp(model, degree, options);
  if (static_cast<int>(parts.log_scales.size()) != sp.dim_ || parts.gram.rows() != sp.dim_ ||
      parts.gram.cols() != sp.dim_)
    throw DomainError("section space parts have the wrong dimension");
  if (!model.is_polynomial() && (parts.hessenberg.rows() != sp.dim_ || parts.hessenberg.cols() != sp.dim_))
    throw DomainError("cusp-form space needs its Arnoldi recurrence");
  sp.log_scales_ = std::move(parts.log_scales);
  sp.hess_ = std::move(parts.hessenberg);
  sp.log_h0_ = parts.log_h0;
  sp.finish(std::move(parts.gram));
  sp.build_qexp();
  return sp;
}

inline SectionSpace::Parts parts_of(const SectionSpace& sp) {
  return {sp.gram(), sp.log_scales(), sp.hessenberg(), sp.log_h0()};
}

/// Raw Gram <u_i, u_j> integrated directly in the tau-plane over the Gamma(2)
/// fundamental domain {|x - shift| < 1, |2(tau - shift) -+ 1| > 1}, evaluating
/// the basis through raw_logs. Independent of the coset route of build_space.
inline CMatrix petersson_gram_direct(const SectionSpace& sp, double shift = 0.0, int x_panels = 32, int order = 12) {
  if (sp.model().kind() != ModelKind::kHyperbolicGamma2) throw DomainError("Petersson Gram needs a cusp-form space");
  const int d = sp.dim(), n = sp.degree();
  const double y_max = detail::petersson_y_max(n, 1e-13);
  const auto& g = GaussLegendre::get(order);
  CMatrix out = CMatrix::Zero(d, d);
  std::vector<cplx> logs;
  std::vector<double> errs;
  CVector u(d);
  auto add = [&](cplx tau, double wt) {
    sp.raw_logs(tau, logs, errs);
    const double lw = 0.5 * (std::log(wt) + (2.0 * n - 2.0) * std::log(tau.imag()));
    for (int i = 0; i < d; ++i) u[i] = std::exp(logs[i] + lw);
    out.noalias() += u * u.adjoint();
  };
  auto span = [&](double x, double wx, double a, double b, int panels) {
    const double h = (b - a) / panels;
    for (int q = 0; q < panels; ++q)
      for (int k = 0; k < g.size(); ++k)
        add(cplx(x + shift, a + h * (q + 0.5 * (1.0 + g.nodes[k]))), wx * 0.5 * h * g.weights[k]);
  };
  const double hx = 2.0 / x_panels;
  for (int p = 0; p < x_panels; ++p) {
    for (int i = 0; i < g.size(); ++i) {
      const double x = -1.0 + hx * (p + 0.5 * (1.0 + g.nodes[i]));
      const double wx = 0.5 * hx * g.weights[i];
      const double c = std::abs(x) - 0.5;
      const double ylo = std::sqrt(std::max(0.0, 0.25 - c * c));
      span(x, wx, ylo, 1.0, 8);
      span(x, wx, 1.0, y_max, std::max(1, static_cast<int>(std::ceil((y_max - 1.0) / 0.5))));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sections.

/// Section with coordinates in the orthonormal basis.
struct RandomSection {
  SpacePtr space;
  CVector coeffs;
  std::uint64_t seed_tag = 0;
};

/// i.i.d. standard complex Gaussian coordinates; deterministic in the seed.
inline RandomSection sample_section(const SpacePtr& space, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  CVector c(space->dim());
  for (int i = 0; i < space->dim(); ++i) c[i] = rng.complex_normal();
  return {space, std::move(c), seed};
}

inline SectionValue evaluate(const SectionSpace& sp, const CVector& coeffs, cplx z) {
  std::vector<cplx> logs;
  std::vector<double> errs;
  sp.raw_logs(z, logs, errs);
  return combine_logs(sp.raw_coefficients(coeffs), logs, errs);
}

inline SectionValue evaluate(const RandomSection& s, cplx z) { return evaluate(*s.space, s.coeffs, z); }

/// Cusp-form evaluation from the stored q-expansion tables (Horner in
/// q = exp(pi i tau)) truncated after q^M, M = q_truncation() by default.
/// rel_error is the tail of the stored table beyond M (plus an estimate past
/// the table end) and rounding.
inline SectionValue evaluate_qseries(const SectionSpace& sp, const CVector& coeffs, cplx tau, int truncation = 0) {
  if (sp.model().kind() != ModelKind::kHyperbolicGamma2) throw DomainError("q-series evaluation needs cusp forms");
  require_in_chart(sp.model(), tau);
  if (tau.imag() < sp.model().cusp_height())
    throw DomainError("q-table evaluation needs Im tau >= cusp height");
  const int len = static_cast<int>(sp.qexp().front().size());
  const int m = truncation > 0 ? std::min(truncation, len - 1) : sp.q_truncation();
  const cplx q = std::exp(cplx(0.0, kPi) * tau);
  const double r = std::abs(q), r0 = std::exp(-kPi * sp.model().cusp_height());
  const CVector raw = sp.raw_coefficients(coeffs);
  cplx sum = 0.0;
  double abs_sum = 0.0, tail = 0.0;
  for (int i = 0; i < sp.dim(); ++i) {
    const auto& s = sp.qexp()[i];
    cplx h = 0.0;
    double ha = 0.0;
    for (int k = m; k >= 0; --k) {
      h = h * q + s[k];
      ha = ha * r + std::abs(s[k]);
    }
    double t = detail::qtable_tail(s, r);
    for (int k = m + 1; k < len; ++k) t += std::abs(s[k]) * std::pow(r, k);
    // Table noise carried up from the sampling height.
    const double ratio = r / r0;
    t += sp.qexp_noise()[i] * (ratio < 1.0 ? (1.0 - std::pow(ratio, m + 1)) / (1.0 - ratio) : m + 1.0);
    sum += raw[i] * h;
    abs_sum += std::abs(raw[i]) * ha;
    tail += std::abs(raw[i]) * t;
  }
  if (abs_sum == 0.0) return {0.0, -kInf, 0.0};
  const double eps = std::numeric_limits<double>::epsilon();
  SectionValue v{sum / abs_sum, std::log(abs_sum), tail / abs_sum + 4.0 * eps * (m + 1)};
  if (v.rel_error > sp.options().eval_tol)
    throw NumericalError("q-expansion error bound " + std::to_string(v.rel_error) +
                         " exceeds tolerance (tail beyond M_q plus table noise)");
  return v;
}

}  // namespace zeq
