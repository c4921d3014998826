#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <variant>

#include "zeq/error.hpp"
#include "zeq/quadrature.hpp"

namespace zeq {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ModelKind { kFubiniStudy, kPoincareWeighted, kHyperbolicGamma2 };
enum class Chart { kPlane, kUpperHalfPlane };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kFubiniStudy: return "FUBINI_STUDY";
    case ModelKind::kPoincareWeighted: return "POINCARE_WEIGHTED";
    case ModelKind::kHyperbolicGamma2: return "HYPERBOLIC_GAMMA2";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "FUBINI_STUDY") return ModelKind::kFubiniStudy;
  if (s == "POINCARE_WEIGHTED") return ModelKind::kPoincareWeighted;
  if (s == "HYPERBOLIC_GAMMA2") return ModelKind::kHyperbolicGamma2;
  throw DomainError("unknown model kind: " + s);
}

namespace detail {

// log(1 + e^x)
inline double log1p_exp(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(a2 + e^x)
inline double log_a2_plus_exp(double a2, double x) {
  const double la = std::log(a2);
  return x > la ? x + std::log1p(a2 * std::exp(-x)) : la + std::log1p(std::exp(x - la));
}

// Radial Laplacian of log(log(a2 + |z|^2)) as a function of s = |z|^2.
inline double laplacian_loglog(double a2, double s) {
  const double big_l = std::log(a2 + s);
  const double q = a2 + s;
  return 4.0 * (a2 * big_l - s) / (q * q * big_l * big_l);
}

}  // namespace detail

/// Geometric model: chart, Hermitian weight on the line bundle and base metric.
///
/// POINCARE_WEIGHTED uses |s0|^2(z) = 1/(offset + |z|^2), the weight
/// (1+|z|^2)^{-N} (log(offset+|z|^2))^{2N delta} and the base form
/// omega_FS - i eps ddbar log(log(offset+|z|^2))^2 with delta = 2 pi eps, so that
/// the curvature form of the weight coincides with the base form.
/// weight_shift multiplies the degree-1 weight by exp(-weight_shift).
class WeightModel {
 public:
  static WeightModel fubini_study() { return WeightModel(ModelKind::kFubiniStudy); }

  static WeightModel poincare(double epsilon = 0.05, double offset = std::exp(2.0)) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be >= 0");
    if (!(offset > 1.0)) throw DomainError("offset must exceed 1 so that log(offset+|z|^2) > 0");
    WeightModel m(ModelKind::kPoincareWeighted);
    m.epsilon_ = epsilon;
    m.delta_ = 2.0 * kPi * epsilon;
    m.offset_ = offset;
    m.check_positive();
    return m;
  }

  static WeightModel hyperbolic_gamma2(double cusp_height = 0.25) {
    if (!(cusp_height > 0.0)) throw DomainError("cusp_height must be positive");
    WeightModel m(ModelKind::kHyperbolicGamma2);
    m.cusp_height_ = cusp_height;
    return m;
  }

  WeightModel with_weight_shift(double c) const {
    WeightModel m = *this;
    m.weight_shift_ = c;
    return m;
  }

  ModelKind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  double delta() const { return delta_; }
  double offset() const { return offset_; }
  double cusp_height() const { return cusp_height_; }
  double weight_shift() const { return weight_shift_; }
  Chart chart() const {
    return kind_ == ModelKind::kHyperbolicGamma2 ? Chart::kUpperHalfPlane : Chart::kPlane;
  }
  bool is_polynomial() const { return kind_ != ModelKind::kHyperbolicGamma2; }

  /// log of the degree-N pointwise weight as a function of x = log|z|^2
  /// (polynomial models only).
  double log_weight_radial(int degree, double x) const {
    double v = -degree * detail::log1p_exp(x) - degree * weight_shift_;
    if (kind_ == ModelKind::kPoincareWeighted && delta_ != 0.0)
      v += 2.0 * degree * delta_ * std::log(detail::log_a2_plus_exp(offset_, x));
    return v;
  }

  /// log of the base density w.r.t. Lebesgue measure at |z|^2 = e^x.
  double log_base_radial(double x) const { return log_radial_form(x, epsilon_); }

 private:
  explicit WeightModel(ModelKind k) : kind_(k) {}

  // log of 1/(pi(1+s)^2) - c * Lap log log(offset+s), s = e^x, written so that
  // nothing overflows for x up to ~700.
  double log_radial_form(double x, double c) const {
    const double l1 = detail::log1p_exp(x);
    if (kind_ == ModelKind::kFubiniStudy || c == 0.0) return -std::log(kPi) - 2.0 * l1;
    const double a2 = offset_;
    const double s = std::exp(x);
    const double la = detail::log_a2_plus_exp(a2, x);  // log(a2 + s) = L
    const double q = std::exp(l1 - la);                // (1+s)/(a2+s)
    const double bracket = 1.0 / kPi - 4.0 * c * q * q * (a2 * la - s) / (la * la);
    if (!(bracket > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return -2.0 * l1 + std::log(bracket);
  }

  void check_positive() const {
    for (double x = -40.0; x <= 700.0; x += 0.05) {
      const double v = log_base_radial(x);
      if (!std::isfinite(v)) {
        throw DomainError("base density not positive at |z| = " + std::to_string(std::exp(0.5 * x)) +
                          " (epsilon = " + std::to_string(epsilon_) + ")");
      }
    }
  }

  ModelKind kind_;
  double epsilon_ = 0.0;
  double delta_ = 0.0;
  double offset_ = 0.0;
  double cusp_height_ = 0.0;
  double weight_shift_ = 0.0;
};

inline void require_in_chart(const WeightModel& m, cplx z) {
  if (m.chart() == Chart::kUpperHalfPlane && !(z.imag() > 0.0))
    throw DomainError("point outside the upper half-plane: Im tau = " + std::to_string(z.imag()));
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw DomainError("non-finite point");
}

/// log of the degree-N weight |1|^2_{h^N} at z in the model's chart trivialization.
inline double weight_log(const WeightModel& m, int degree, cplx z) {
  require_in_chart(m, z);
  if (m.kind() == ModelKind::kHyperbolicGamma2)
    return 2.0 * degree * std::log(z.imag()) - degree * m.weight_shift();
  const double s = std::norm(z);
  double v = -degree * std::log1p(s) - degree * m.weight_shift();
  if (m.kind() == ModelKind::kPoincareWeighted && m.delta() != 0.0)
    v += 2.0 * degree * m.delta() * std::log(std::log(m.offset() + s));
  return v;
}

/// Density of the base area form w.r.t. Lebesgue measure in the chart.
inline double base_density(const WeightModel& m, cplx z) {
  require_in_chart(m, z);
  switch (m.kind()) {
    case ModelKind::kFubiniStudy: {
      const double t = 1.0 + std::norm(z);
      return 1.0 / (kPi * t * t);
    }
    case ModelKind::kPoincareWeighted: {
      const double s = std::norm(z), t = 1.0 + s;
      return 1.0 / (kPi * t * t) - m.epsilon() * detail::laplacian_loglog(m.offset(), s);
    }
    case ModelKind::kHyperbolicGamma2:
      return 1.0 / (z.imag() * z.imag());
  }
  return 0.0;
}

/// Density of (i/2pi) R^{L^degree} w.r.t. Lebesgue measure, i.e. Lap(-weight_log)/(4 pi).
inline double curvature_density(const WeightModel& m, cplx z, int degree = 1) {
  require_in_chart(m, z);
  double v = 0.0;
  switch (m.kind()) {
    case ModelKind::kFubiniStudy: {
      const double t = 1.0 + std::norm(z);
      v = 1.0 / (kPi * t * t);
      break;
    }
    case ModelKind::kPoincareWeighted: {
      const double s = std::norm(z), t = 1.0 + s;
      v = 1.0 / (kPi * t * t) - m.delta() / (2.0 * kPi) * detail::laplacian_loglog(m.offset(), s);
      break;
    }
    case ModelKind::kHyperbolicGamma2:
      v = 1.0 / (2.0 * kPi * z.imag() * z.imag());
      break;
  }
  return degree * v;
}

struct Box {
  double x0, x1, y0, y1;
  cplx center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  double diameter() const { return std::hypot(x1 - x0, y1 - y0); }
};

/// Annulus r0 <= |z| <= r1 centred at the origin; r1 may be infinite.
struct Annulus {
  double r0, r1;
};

class Region {
 public:
  static Region box(Chart chart, double x0, double x1, double y0, double y1) {
    if (!(x1 > x0) || !(y1 > y0)) throw DomainError("box region needs nonempty interior");
    if (chart == Chart::kUpperHalfPlane && !(y0 > 0.0))
      throw DomainError("upper-half-plane box must have positive Im lower bound");
    return Region(chart, Box{x0, x1, y0, y1});
  }
  static Region annulus(double r0, double r1) {
    if (!(r0 >= 0.0) || !(r1 > r0)) throw DomainError("annulus needs 0 <= r0 < r1");
    return Region(Chart::kPlane, Annulus{r0, r1});
  }
  static Region plane() { return annulus(0.0, kInf); }

  Chart chart() const { return chart_; }
  bool is_box() const { return std::holds_alternative<Box>(shape_); }
  const Box& as_box() const { return std::get<Box>(shape_); }
  const Annulus& as_annulus() const { return std::get<Annulus>(shape_); }

  bool contains(cplx z) const {
    if (is_box()) {
      const auto& b = as_box();
      return z.real() >= b.x0 && z.real() <= b.x1 && z.imag() >= b.y0 && z.imag() <= b.y1;
    }
    const auto& a = as_annulus();
    const double r = std::abs(z);
    return r >= a.r0 && r <= a.r1;
  }

  /// Closed disk contained in the region.
  bool contains_disk(cplx c, double radius) const {
    if (is_box()) {
      const auto& b = as_box();
      return c.real() - radius >= b.x0 && c.real() + radius <= b.x1 && c.imag() - radius >= b.y0 &&
             c.imag() + radius <= b.y1;
    }
    const auto& a = as_annulus();
    const double r = std::abs(c);
    return r + radius <= a.r1 && (a.r0 == 0.0 || r - radius >= a.r0);
  }

 private:
  Region(Chart c, std::variant<Box, Annulus> s) : chart_(c), shape_(s) {}
  Chart chart_;
  std::variant<Box, Annulus> shape_;
};

/// Throws if the region does not fit the model's chart (UHP boxes must stay
/// above the cusp height).
inline void validate_region(const WeightModel& m, const Region& r) {
  if (r.chart() != m.chart()) throw DomainError("region chart does not match the model chart");
  if (m.chart() == Chart::kUpperHalfPlane && r.as_box().y0 < m.cusp_height())
    throw DomainError("region reaches below the cusp height " + std::to_string(m.cusp_height()));
}

/// Cubic bump amplitude * (1 - |z-c|^2/R^2)^3 on the disk |z-c| <= R.
struct TestForm {
  cplx center;
  double radius;
  double amplitude = 1.0;

  double value(cplx z) const {
    const double u = std::norm(z - center) / (radius * radius);
    if (u >= 1.0) return 0.0;
    const double w = 1.0 - u;
    return amplitude * w * w * w;
  }

  /// Upper bound for sup|phi| + sup|grad phi| + sup|Hess phi| (operator norm):
  /// the sups are 1, 96/(25 sqrt 5)/R and 6/R^2 for unit amplitude.
  double c2_norm() const {
    const double grad = 96.0 / (25.0 * std::sqrt(5.0)) / radius;
    const double hess = 6.0 / (radius * radius);
    return std::abs(amplitude) * (1.0 + grad + hess);
  }

  TestForm scaled(double c) const { return {center, radius, amplitude * c}; }
};

/// Integral of the curvature density over the region, i.e. the predicted limit
/// of (1/N) * (zero count in the region).
inline double predicted_mass(const WeightModel& m, const Region& r, double rel_tol = 1e-8) {
  if (r.chart() != m.chart()) throw DomainError("region chart does not match the model chart");
  if (!r.is_box()) {
    if (!m.is_polynomial()) throw DomainError("annular regions are plane-chart only");
    // Mass of the disk |z|^2 <= s is the flux -d(weight_log)/d(log s).
    auto disk = [&](double r2) {
      if (r2 == 0.0) return 0.0;
      if (std::isinf(r2)) return 1.0;
      double v = 1.0 / (1.0 + 1.0 / r2);
      if (m.kind() == ModelKind::kPoincareWeighted && m.delta() != 0.0)
        v -= 2.0 * m.delta() / ((1.0 + m.offset() / r2) * std::log(m.offset() + r2));
      return v;
    };
    const auto& a = r.as_annulus();
    return disk(a.r1 * a.r1) - disk(a.r0 * a.r0);
  }
  const auto& b = r.as_box();
  auto inner = [&](double x) {
    return gk_integrate([&](double y) { return curvature_density(m, cplx(x, y)); }, b.y0, b.y1,
                        0.1 * rel_tol, "predicted_mass");
  };
  return gk_integrate(inner, b.x0, b.x1, rel_tol, "predicted_mass");
}

}  // namespace zeq
