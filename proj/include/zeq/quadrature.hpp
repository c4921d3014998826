#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "zeq/error.hpp"

namespace zeq {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    if (n == 1) {
      nodes[0] = 0.0;
      weights[0] = 2.0;
      return;
    }
    // Newton on P_n from the Chebyshev-like initial guess; symmetric fill.
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      // Recompute the derivative at the converged node.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      nodes[i] = -x;
      nodes[n - 1 - i] = x;
      weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }

  int size() const { return static_cast<int>(nodes.size()); }

  /// Shared rule of the given order; built once per order.
  static const GaussLegendre& get(int n) {
    static std::mutex mu;
    static std::map<int, GaussLegendre> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, GaussLegendre(n)).first;
    return it->second;
  }
};

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// Composite Gauss-Legendre on `panels` equal panels of [a, b]; the integrand is
/// supplied as its logarithm and the result is returned as a logarithm.
inline double composite_log_integral(const std::function<double(double)>& log_f, double a, double b,
                                     int panels, int order = 20) {
  const auto& gl = GaussLegendre::get(order);
  const double h = (b - a) / panels;
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(panels) * order);
  double peak = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int k = 0; k < order; ++k) {
      const double v = log_f(mid + 0.5 * h * gl.nodes[k]) + std::log(0.5 * h * gl.weights[k]);
      terms.push_back(v);
      peak = std::max(peak, v);
    }
  }
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (double v : terms) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

/// Support of a unimodal-ish log-integrand: the interval where log_f exceeds
/// (max - drop), located by a coarse scan over [lo, hi] and bisection at the ends.
struct LogSupport {
  double a;
  double b;
  double peak;
};

inline LogSupport find_log_support(const std::function<double(double)>& log_f, double lo, double hi,
                                   double step, double drop) {
  const int n = static_cast<int>(std::ceil((hi - lo) / step));
  std::vector<double> xs(n + 1), vs(n + 1);
  int best = 0;
  for (int i = 0; i <= n; ++i) {
    xs[i] = lo + (hi - lo) * i / n;
    vs[i] = log_f(xs[i]);
    if (vs[i] > vs[best]) best = i;
  }
  // Golden-section refinement of the peak.
  double l = xs[std::max(best - 1, 0)], r = xs[std::min(best + 1, n)];
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 80 && r - l > 1e-12 * (1.0 + std::abs(l)); ++it) {
    double m1 = r - g * (r - l), m2 = l + g * (r - l);
    if (log_f(m1) < log_f(m2)) l = m1; else r = m2;
  }
  const double peak = std::max(vs[best], log_f(0.5 * (l + r)));
  const double thr = peak - drop;
  int first = 0, last = n;
  while (first < n && vs[first] < thr) ++first;
  while (last > 0 && vs[last] < thr) --last;
  auto refine = [&](double inside, double outside) {
    for (int it = 0; it < 60; ++it) {
      double m = 0.5 * (inside + outside);
      if (log_f(m) >= thr) inside = m; else outside = m;
    }
    return outside;
  };
  double a = first > 0 ? refine(xs[first], xs[first - 1]) : lo;
  double b = last < n ? refine(xs[last], xs[last + 1]) : hi;
  return {a, b, peak};
}

/// Integral of exp(log_f) over its numerical support with panel doubling until
/// the relative change drops below rel_tol. Returns the logarithm.
inline double adaptive_log_integral(const std::function<double(double)>& log_f, double lo, double hi,
                                    double rel_tol, double scan_step = 0.25) {
  const auto sup = find_log_support(log_f, lo, hi, scan_step, 60.0);
  int panels = 8;
  double prev = composite_log_integral(log_f, sup.a, sup.b, panels);
  double change = 0.0;
  for (int round = 0; round < 14; ++round) {
    panels *= 2;
    double cur = composite_log_integral(log_f, sup.a, sup.b, panels);
    change = std::abs(std::expm1(cur - prev));
    if (change < rel_tol) return cur;
    prev = cur;
  }
  throw QuadratureError("radial quadrature did not converge", change);
}

/// Adaptive Gauss-Kronrod (boost) with an explicit convergence check.
template <class F>
double gk_integrate(F f, double a, double b, double rel_tol, const char* what = "quadrature") {
  double err = 0.0, l1 = 0.0;
  double v;
  if (std::isfinite(a) && std::isfinite(b)) {
    // boost compares unscaled error estimates, which stalls on narrow intervals; map to [0, 1].
    const double w = b - a;
    auto g = [&](double t) { return w * f(a + w * t); };
    v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 25, rel_tol, &err, &l1);
  } else {
    v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 25, rel_tol, &err, &l1);
  }
  const double scale = std::max(std::abs(v), 1e-300);
  if (!std::isfinite(v) || err > 10.0 * rel_tol * std::max(scale, l1 * 1e-3)) {
    throw QuadratureError(std::string(what) + " did not converge", err / scale);
  }
  return v;
}

}  // namespace zeq
