#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "zeq/error.hpp"
#include "zeq/geometry.hpp"

// Theta constants in the nome q = exp(pi i tau), the weight-2 forms
// A = theta2^4, B = theta3^4, C = theta4^4 for Gamma(2), and the action of
// SL2(Z) on monomials A^e2 B^e3 C^e4 (signed permutations of {A, B, C}).

namespace zeq::modular {

using QSeries = std::vector<double>;

/// theta3 = sum_n q^{n^2}, truncated after q^{max_exp}.
inline QSeries theta3_series(int max_exp) {
  QSeries s(max_exp + 1, 0.0);
  s[0] = 1.0;
  for (int n = 1; n * n <= max_exp; ++n) s[n * n] += 2.0;
  return s;
}

inline QSeries theta4_series(int max_exp) {
  QSeries s(max_exp + 1, 0.0);
  s[0] = 1.0;
  for (int n = 1; n * n <= max_exp; ++n) s[n * n] += (n % 2 ? -2.0 : 2.0);
  return s;
}

inline QSeries mul(const QSeries& a, const QSeries& b, int max_exp) {
  QSeries c(max_exp + 1, 0.0);
  for (int i = 0; i < static_cast<int>(a.size()) && i <= max_exp; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; j < static_cast<int>(b.size()) && i + j <= max_exp; ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

inline QSeries pow(const QSeries& a, int e, int max_exp) {
  QSeries r(max_exp + 1, 0.0);
  r[0] = 1.0;
  QSeries base = a;
  base.resize(max_exp + 1, 0.0);
  while (e > 0) {
    if (e & 1) r = mul(r, base, max_exp);
    e >>= 1;
    if (e) base = mul(base, base, max_exp);
  }
  return r;
}

/// theta2^4 = 16 q (sum_{n>=0} q^{n(n+1)})^4, an integer-power series.
inline QSeries theta2_4th_series(int max_exp) {
  QSeries inner(max_exp + 1, 0.0);
  for (int n = 0; n * (n + 1) <= max_exp; ++n) inner[n * (n + 1)] += 1.0;
  QSeries p = pow(inner, 4, max_exp);
  QSeries r(max_exp + 1, 0.0);
  for (int k = 0; k + 1 <= max_exp; ++k) r[k + 1] = 16.0 * p[k];
  return r;
}

inline QSeries theta3_4th_series(int max_exp) { return pow(theta3_series(max_exp), 4, max_exp); }
inline QSeries theta4_4th_series(int max_exp) { return pow(theta4_series(max_exp), 4, max_exp); }

/// Exponents of A^e2 B^e3 C^e4 (weight 2 (e2+e3+e4)).
struct Monomial {
  int e2 = 0, e3 = 0, e4 = 0;
  int weight_half() const { return e2 + e3 + e4; }
  bool operator==(const Monomial&) const = default;
};

/// Logarithms of theta2, theta3, theta4 at tau plus relative truncation bounds.
struct ThetaLogs {
  std::array<cplx, 3> log_theta;  // theta2, theta3, theta4
  std::array<double, 3> rel_tail;
  int max_exponent_used = 0;
};

/// Evaluates the three theta constants by their q-series, truncating at the
/// first exponent whose geometric tail bound is below 1e-17 relative, but never
/// beyond max_exp. rel_tail reports the bound actually achieved.
inline ThetaLogs theta_logs(cplx tau, int max_exp = 4000) {
  if (!(tau.imag() > 0.0)) throw DomainError("theta constants need Im tau > 0");
  const cplx ipi(0.0, kPi);
  const cplx q = std::exp(ipi * tau);
  const double aq = std::abs(q);
  const double geo = 1.0 / (1.0 - aq);
  ThetaLogs out{};
  // theta3 / theta4
  cplx s3 = 1.0, s4 = 1.0;
  int n = 1;
  double tail3 = 0.0;
  for (;; ++n) {
    const int e = n * n;
    if (e > max_exp) {
      tail3 = 2.0 * std::pow(aq, e) * geo;
      break;
    }
    const cplx t = 2.0 * std::exp(ipi * tau * static_cast<double>(e));
    s3 += t;
    s4 += (n % 2 ? -t : t);
    out.max_exponent_used = std::max(out.max_exponent_used, e);
    const double next = 2.0 * std::pow(aq, (n + 1) * (n + 1)) * geo;
    if (next < 1e-17 * std::min(std::abs(s3), std::abs(s4))) {
      tail3 = next;
      break;
    }
  }
  // theta2 = 2 q^{1/4} sum_{n>=0} q^{n(n+1)}
  cplx s2 = 1.0;
  double tail2 = 0.0;
  for (n = 1;; ++n) {
    const int e = n * (n + 1);
    if (e > max_exp) {
      tail2 = std::pow(aq, e) * geo;
      break;
    }
    s2 += std::exp(ipi * tau * static_cast<double>(e));
    const double next = std::pow(aq, (n + 1) * (n + 2)) * geo;
    if (next < 1e-17 * std::abs(s2)) {
      tail2 = next;
      break;
    }
  }
  out.log_theta[0] = std::log(2.0) + ipi * tau / 4.0 + std::log(s2);
  out.log_theta[1] = std::log(s3);
  out.log_theta[2] = std::log(s4);
  out.rel_tail = {tail2 / std::abs(s2), tail3 / std::abs(s3), tail3 / std::abs(s4)};
  return out;
}

/// log of A^e2 B^e3 C^e4 at the point whose theta logs are given.
inline cplx log_monomial(const ThetaLogs& t, const Monomial& m) {
  return 4.0 * (static_cast<double>(m.e2) * t.log_theta[0] + static_cast<double>(m.e3) * t.log_theta[1] +
                static_cast<double>(m.e4) * t.log_theta[2]);
}

/// Relative error bound of the monomial value implied by the theta truncations.
inline double monomial_rel_error(const ThetaLogs& t, const Monomial& m) {
  const double d = 4.0 * (m.e2 * t.rel_tail[0] + m.e3 * t.rel_tail[1] + m.e4 * t.rel_tail[2]);
  return std::expm1(d);
}

struct Mat2 {
  std::int64_t a = 1, b = 0, c = 0, d = 1;
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  Mat2 inverse() const { return {d, -b, -c, a}; }
  cplx apply(cplx tau) const {
    return (static_cast<double>(a) * tau + static_cast<double>(b)) /
           (static_cast<double>(c) * tau + static_cast<double>(d));
  }
  bool operator==(const Mat2&) const = default;
};

inline const Mat2 kT{1, 1, 0, 1};
inline const Mat2 kS{0, -1, 1, 0};

/// Action of a matrix on {A, B, C} under the weight-2 slash operator:
/// X | g = sign[X] * target[X].
struct SignedPerm {
  std::array<int, 3> target{0, 1, 2};
  std::array<int, 3> sign{1, 1, 1};

  /// Action of g1 g2 given this = g1 and o = g2: (X|g1)|g2.
  SignedPerm then(const SignedPerm& o) const {
    SignedPerm r;
    for (int x = 0; x < 3; ++x) {
      r.target[x] = o.target[target[x]];
      r.sign[x] = sign[x] * o.sign[target[x]];
    }
    return r;
  }

  /// Sign and image monomial of A^e2 B^e3 C^e4 | g.
  std::pair<int, Monomial> apply(const Monomial& m) const {
    std::array<int, 3> e{m.e2, m.e3, m.e4}, out{0, 0, 0};
    int s = 1;
    for (int x = 0; x < 3; ++x) {
      out[target[x]] += e[x];
      if (sign[x] < 0 && (e[x] % 2)) s = -s;
    }
    return {s, Monomial{out[0], out[1], out[2]}};
  }
};

inline SignedPerm perm_T() { return {{0, 2, 1}, {-1, 1, 1}}; }
inline SignedPerm perm_S() { return {{2, 1, 0}, {-1, -1, -1}}; }

/// Coset representatives of Gamma(2) in SL2(Z): I, T, S, TS, ST, TST.
struct Coset {
  Mat2 matrix;
  SignedPerm perm;
};

inline const std::array<Coset, 6>& cosets() {
  static const std::array<Coset, 6> reps = [] {
    const SignedPerm id{}, t = perm_T(), s = perm_S();
    const Mat2 I{};
    return std::array<Coset, 6>{Coset{I, id},
                                Coset{kT, t},
                                Coset{kS, s},
                                Coset{kT * kS, t.then(s)},
                                Coset{kS * kT, s.then(t)},
                                Coset{kT * kS * kT, t.then(s).then(t)}};
  }();
  return reps;
}

inline int mod2(std::int64_t v) { return static_cast<int>(((v % 2) + 2) % 2); }

/// Index of the coset Gamma(2) g among cosets().
inline int coset_index(const Mat2& g) {
  const auto& reps = cosets();
  for (int k = 0; k < 6; ++k) {
    const Mat2& r = reps[k].matrix;
    if (mod2(r.a) == mod2(g.a) && mod2(r.b) == mod2(g.b) && mod2(r.c) == mod2(g.c) &&
        mod2(r.d) == mod2(g.d))
      return k;
  }
  throw NumericalError("matrix not in SL2(Z)");
}

/// tau' = M tau with tau' in the closed standard fundamental domain of SL2(Z).
struct Reduction {
  cplx tau;
  Mat2 m;
};

inline Reduction reduce_to_fundamental(cplx tau) {
  if (!(tau.imag() > 0.0)) throw DomainError("reduction needs Im tau > 0");
  Mat2 m{};
  for (int it = 0; it < 10000; ++it) {
    const double n = std::round(tau.real());
    if (n != 0.0) {
      tau -= n;
      m = Mat2{1, -static_cast<std::int64_t>(n), 0, 1} * m;
    }
    if (std::norm(tau) < 1.0 - 1e-14) {
      tau = -1.0 / tau;
      m = kS * m;
    } else {
      return {tau, m};
    }
  }
  throw NumericalError("fundamental-domain reduction did not terminate");
}

/// Valence/Riemann-Roch dimension of cusp forms of weight 2N for Gamma(2):
/// genus 0, three cusps, no elliptic points.
inline int cusp_form_dimension(int n) {
  if (n < 2) return 0;
  return std::max(0, -(2 * n - 1) + 3 * (n - 1));
}

}  // namespace zeq::modular
