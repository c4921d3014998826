#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "zeq/error.hpp"
#include "zeq/geometry.hpp"
#include "zeq/spaces.hpp"

namespace zeq {

enum class ZeroMethod { kRoots, kArgumentPrinciple };

inline const char* to_string(ZeroMethod m) { return m == ZeroMethod::kRoots ? "ROOTS" : "ARGUMENT_PRINCIPLE"; }

struct ZeroPoint {
  cplx location;
  int multiplicity = 1;
  double residual = 0.0;
  double uncertainty = 0.0;  // box diameter for ARGUMENT_PRINCIPLE, 0 for ROOTS
};

struct ZeroSet {
  std::vector<ZeroPoint> points;
  Region region = Region::plane();
  ZeroMethod method = ZeroMethod::kRoots;
  int total_count = 0;
  double merge_threshold = 0.0;

  int count_in(const Region& r) const {
    int n = 0;
    for (const auto& p : points)
      if (r.contains(p.location)) n += p.multiplicity;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Polynomial roots.

struct RootOptions {
  int max_iterations = 500;
  double merge_rel = 1e-7;
  int companion_max_degree = 64;
};

namespace detail {

/// p(z) and p'(z) by Horner; for |z| > 1 the reversed polynomial is used and
/// the returned value is p(z) / z^n. bound is the matching sum |a_k| |z|^k
/// (same scaling).
struct PolyEval {
  cplx value;
  cplx newton;  // p / p'
  double bound;
};

inline PolyEval poly_eval(const std::vector<cplx>& a, cplx z) {
  const int n = static_cast<int>(a.size()) - 1;
  if (std::abs(z) <= 1.0) {
    cplx p = a[n], dp = 0.0;
    double b = std::abs(a[n]);
    const double az = std::abs(z);
    for (int k = n - 1; k >= 0; --k) {
      dp = dp * z + p;
      p = p * z + a[k];
      b = b * az + std::abs(a[k]);
    }
    return {p, dp == 0.0 ? cplx(kInf) : p / dp, b};
  }
  const cplx w = 1.0 / z;
  const double aw = std::abs(w);
  cplx q = a[0], dq = 0.0;
  double b = std::abs(a[0]);
  for (int k = 1; k <= n; ++k) {
    dq = dq * w + q;
    q = q * w + a[k];
    b = b * aw + std::abs(a[k]);
  }
  // p'/p = n w - w^2 q'(w)/q(w)
  const cplx denom = static_cast<double>(n) * w * q - w * w * dq;
  return {q, denom == 0.0 ? cplx(kInf) : q / denom, b};
}

/// Initial guesses on the circles of the Newton polygon of log|a_k|.
inline std::vector<cplx> newton_polygon_start(const std::vector<cplx>& a) {
  const int n = static_cast<int>(a.size()) - 1;
  std::vector<double> la(n + 1);
  for (int k = 0; k <= n; ++k) la[k] = a[k] == 0.0 ? -kInf : std::log(std::abs(a[k]));
  std::vector<int> hull;
  for (int k = 0; k <= n; ++k) {
    if (la[k] == -kInf) continue;
    while (hull.size() >= 2) {
      const int i = hull[hull.size() - 2], j = hull.back();
      // drop j if it lies on or below the segment i -> k
      if ((la[j] - la[i]) * (k - i) <= (la[k] - la[i]) * (j - i)) hull.pop_back();
      else break;
    }
    hull.push_back(k);
  }
  std::vector<cplx> z;
  z.reserve(n);
  const double sigma = 0.7;
  for (size_t h = 0; h + 1 < hull.size(); ++h) {
    const int i = hull[h], j = hull[h + 1], m = j - i;
    const double r = std::exp((la[i] - la[j]) / m);
    for (int k = 0; k < m; ++k) {
      const double ang = 2.0 * kPi * k / m + 2.0 * kPi * i / n + sigma;
      z.push_back(std::polar(r, ang));
    }
  }
  return z;
}

inline std::vector<cplx> companion_roots(const std::vector<cplx>& a) {
  const int n = static_cast<int>(a.size()) - 1;
  CMatrix c = CMatrix::Zero(n, n);
  for (int i = 1; i < n; ++i) c(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) c(i, n - 1) = -a[i] / a[n];
  // Diagonal balancing by powers of two (Parlett-Reinsch).
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      double rs = 0.0, cs = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        rs += std::abs(c(i, j));
        cs += std::abs(c(j, i));
      }
      if (rs == 0.0 || cs == 0.0) continue;
      double f = 1.0;
      const double s = rs + cs;
      while (cs < rs / 2.0) {
        cs *= 2.0;
        rs /= 2.0;
        f *= 2.0;
      }
      while (cs > rs * 2.0) {
        cs /= 2.0;
        rs *= 2.0;
        f /= 2.0;
      }
      if ((rs + cs) < 0.95 * s) {
        changed = true;
        d[i] *= f;
        c.row(i) /= f;
        c.col(i) *= f;
      }
    }
    if (!changed) break;
  }
  Eigen::ComplexEigenSolver<CMatrix> es(c, false);
  if (es.info() != Eigen::Success) throw NumericalError("companion eigenvalue solver failed");
  std::vector<cplx> z(es.eigenvalues().data(), es.eigenvalues().data() + n);
  return z;
}

struct AberthResult {
  std::vector<cplx> roots;
  std::vector<int> unconverged;
};

inline AberthResult aberth(const std::vector<cplx>& a, int max_iterations) {
  const int n = static_cast<int>(a.size()) - 1;
  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<cplx> z = newton_polygon_start(a);
  std::vector<char> done(n, 0);
  int remaining = n;
  for (int it = 0; it < max_iterations && remaining > 0; ++it) {
    for (int i = 0; i < n; ++i) {
      if (done[i]) continue;
      const PolyEval e = poly_eval(a, z[i]);
      if (std::abs(e.value) <= 4.0 * eps * (n + 1) * e.bound) {
        done[i] = 1;
        --remaining;
        continue;
      }
      cplx s = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) s += 1.0 / (z[i] - z[j]);
      const cplx corr = e.newton / (1.0 - e.newton * s);
      if (std::isfinite(corr.real()) && std::isfinite(corr.imag())) z[i] -= corr;
    }
  }
  AberthResult r{std::move(z), {}};
  for (int i = 0; i < n; ++i)
    if (!done[i]) r.unconverged.push_back(i);
  return r;
}

/// |P(z)| / (max|a| max(1,|z|)^n).
inline double root_residual(const std::vector<cplx>& a, cplx z, double amax) {
  return std::abs(poly_eval(a, z).value) / amax;
}

}  // namespace detail

/// Roots of sum_k a_k z^k with multiplicities; exact zero coefficients at the
/// bottom give roots at the origin.
inline ZeroSet poly_roots(std::vector<cplx> a, const RootOptions& opt = {}) {
  while (!a.empty() && a.back() == 0.0) a.pop_back();
  if (a.empty()) throw DomainError("zero polynomial has no finite zero set");
  int zero_mult = 0;
  while (a[zero_mult] == 0.0) ++zero_mult;
  a.erase(a.begin(), a.begin() + zero_mult);
  const int n = static_cast<int>(a.size()) - 1;
  double amax = 0.0;
  for (const auto& c : a) amax = std::max(amax, std::abs(c));
  for (auto& c : a) c /= amax;

  std::vector<cplx> z;
  if (n == 1) {
    z = {-a[0] / a[1]};
  } else if (n > 1) {
    auto res = detail::aberth(a, opt.max_iterations);
    if (!res.unconverged.empty()) {
      if (n > opt.companion_max_degree)
        throw RootFindingError("Aberth-Ehrlich iteration did not converge for " +
                                   std::to_string(res.unconverged.size()) + " roots",
                               res.unconverged);
      res.roots = detail::companion_roots(a);
    }
    z = std::move(res.roots);
    for (auto& r : z) {
      const auto e = detail::poly_eval(a, r);
      const cplx cand = r - e.newton;
      if (std::isfinite(cand.real()) && std::isfinite(cand.imag()) &&
          detail::root_residual(a, cand, 1.0) <= detail::root_residual(a, r, 1.0))
        r = cand;
    }
  }

  // Merge clusters (union-find on the closeness graph).
  std::vector<int> parent(z.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
  for (size_t i = 0; i < z.size(); ++i)
    for (size_t j = i + 1; j < z.size(); ++j)
      if (std::abs(z[i] - z[j]) < opt.merge_rel * std::max({1.0, std::abs(z[i]), std::abs(z[j])}))
        parent[find(static_cast<int>(j))] = find(static_cast<int>(i));
  std::vector<cplx> sum(z.size(), 0.0);
  std::vector<int> mult(z.size(), 0);
  for (size_t i = 0; i < z.size(); ++i) {
    sum[find(static_cast<int>(i))] += z[i];
    ++mult[find(static_cast<int>(i))];
  }
  ZeroSet out;
  out.method = ZeroMethod::kRoots;
  out.merge_threshold = opt.merge_rel;
  for (size_t i = 0; i < z.size(); ++i) {
    if (mult[i] == 0) continue;
    const cplx loc = sum[i] / static_cast<double>(mult[i]);
    out.points.push_back({loc, mult[i], detail::root_residual(a, loc, 1.0), 0.0});
  }
  if (zero_mult > 0) out.points.push_back({cplx(0.0), zero_mult, 0.0, 0.0});
  std::sort(out.points.begin(), out.points.end(), [](const ZeroPoint& p, const ZeroPoint& q) {
    if (p.location.real() != q.location.real()) return p.location.real() < q.location.real();
    return p.location.imag() < q.location.imag();
  });
  out.total_count = n + zero_mult;
  return out;
}

/// Monomial coefficients a_k of a polynomial-model section (common positive
/// factor removed).
inline std::vector<cplx> monomial_coefficients(const RandomSection& s) {
  const auto& sp = *s.space;
  if (!sp.model().is_polynomial()) throw DomainError("monomial coefficients need a polynomial model");
  const CVector raw = sp.raw_coefficients(s.coeffs);
  const auto& ls = sp.log_scales();
  double peak = -kInf;
  for (int k = 0; k < sp.dim(); ++k)
    if (raw[k] != 0.0) peak = std::max(peak, std::log(std::abs(raw[k])) - ls[k]);
  std::vector<cplx> a(sp.dim(), 0.0);
  if (peak == -kInf) return a;
  for (int k = 0; k < sp.dim(); ++k)
    if (raw[k] != 0.0) a[k] = raw[k] * std::exp(-ls[k] - peak);
  return a;
}

inline ZeroSet poly_roots(const RandomSection& s, const RootOptions& opt = {}) {
  return poly_roots(monomial_coefficients(s), opt);
}

// ---------------------------------------------------------------------------
// Argument principle.

using Evaluator = std::function<SectionValue(cplx)>;

inline Evaluator evaluator(const RandomSection& s) {
  return [s](cplx z) { return evaluate(s, z); };
}

inline Evaluator evaluator(std::function<cplx(cplx)> f) {
  return [f = std::move(f)](cplx z) {
    const cplx v = f(z);
    const double a = std::abs(v);
    if (a == 0.0) return SectionValue{0.0, -kInf, 0.0};
    return SectionValue{v / a, std::log(a), 4.0 * std::numeric_limits<double>::epsilon()};
  };
}

/// (f | g_k)(tau) for a cusp form f, g_k the k-th coset representative.
inline Evaluator slashed_evaluator(const RandomSection& s, int coset) {
  return [s, coset](cplx tau) {
    std::vector<cplx> logs;
    std::vector<double> errs;
    s.space->raw_logs_slashed(tau, coset, logs, errs);
    return combine_logs(s.space->raw_coefficients(s.coeffs), logs, errs);
  };
}

struct ContourOptions {
  double tol = 1e-10;        // |f| / local scale below this on the boundary counts as a boundary zero
  int initial_samples = 16;  // per contour piece
  int budget = 20000;        // evaluations per contour before subdividing
  int max_depth = 12;
};

namespace detail {

struct BoundaryHit {
  cplx z;
  int piece;
  std::string name;
};

struct BudgetExceeded {};

struct PathPiece {
  std::function<cplx(double)> at;
  std::string name;
};

inline PathPiece segment_piece(cplx a, cplx b, std::string name) {
  return {[a, b](double t) { return a + t * (b - a); }, std::move(name)};
}

class PhaseWalker {
 public:
  PhaseWalker(const Evaluator& f, const ContourOptions& opt) : f_(f), opt_(opt) {}

  /// Continuous change of arg f along the piece.
  double walk(const PathPiece& p, int piece) {
    piece_ = &p;
    index_ = piece;
    const int n = opt_.initial_samples;
    std::vector<cplx> v(n + 1);
    for (int i = 0; i <= n; ++i) v[i] = value(static_cast<double>(i) / n);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      total += interval(static_cast<double>(i) / n, static_cast<double>(i + 1) / n, v[i], v[i + 1], 0);
    return total;
  }

  int evaluations() const { return evals_; }

 private:
  cplx value(double t) {
    if (++evals_ > opt_.budget) throw BudgetExceeded{};
    const cplx z = piece_->at(t);
    const SectionValue s = f_(z);
    const double mag = std::abs(s.unit);
    if (!(mag > std::max(opt_.tol, 8.0 * s.rel_error))) throw BoundaryHit{z, index_, piece_->name};
    return s.unit / mag;
  }

  double interval(double ta, double tb, cplx va, cplx vb, int depth) {
    const double d = std::arg(vb / va);
    if (std::abs(d) < kPi / 8.0) return d;
    if (tb - ta < 1e-13 || depth > 60) throw BoundaryHit{piece_->at(0.5 * (ta + tb)), index_, piece_->name};
    const double tm = 0.5 * (ta + tb);
    const cplx vm = value(tm);
    const double d1 = std::arg(vm / va), d2 = std::arg(vb / vm);
    if (std::abs(d) < kPi / 2.0 && std::abs(d1) < kPi / 2.0 && std::abs(d2) < kPi / 2.0 &&
        std::abs(d1 + d2 - d) < 1e-9)
      return d;
    return interval(ta, tm, va, vm, depth + 1) + interval(tm, tb, vm, vb, depth + 1);
  }

  const Evaluator& f_;
  const ContourOptions& opt_;
  const PathPiece* piece_ = nullptr;
  int index_ = 0;
  int evals_ = 0;
};

inline int winding(const Evaluator& f, const std::vector<PathPiece>& pieces, const ContourOptions& opt) {
  PhaseWalker w(f, opt);
  double total = 0.0;
  for (size_t i = 0; i < pieces.size(); ++i) total += w.walk(pieces[i], static_cast<int>(i));
  const double turns = total / (2.0 * kPi);
  const double r = std::round(turns);
  if (std::abs(turns - r) > 1e-6) throw NumericalError("contour phase did not close");
  return static_cast<int>(r);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline std::vector<PathPiece> box_pieces(const Box& b) {
  const cplx p00(b.x0, b.y0), p10(b.x1, b.y0), p11(b.x1, b.y1), p01(b.x0, b.y1);
  return {segment_piece(p00, p10, "bottom edge y=" + fmt(b.y0)),
          segment_piece(p10, p11, "right edge x=" + fmt(b.x1)),
          segment_piece(p11, p01, "top edge y=" + fmt(b.y1)),
          segment_piece(p01, p00, "left edge x=" + fmt(b.x0))};
}

inline bool on_line(double v, double line, double scale) { return std::abs(v - line) <= 1e-12 * (1.0 + scale); }

// Split fractions tried in turn when an internal line meets a zero.
inline constexpr std::array<double, 6> kSplit{0.5 + 1.0 / 97, 0.5 - 1.0 / 61, 0.5 + 1.0 / 37,
                                              0.5 - 1.0 / 29, 0.5 + 1.0 / 17, 0.5 - 1.0 / 11};

inline std::array<Box, 4> split_box(const Box& b, double fx, double fy) {
  const double xm = b.x0 + fx * (b.x1 - b.x0), ym = b.y0 + fy * (b.y1 - b.y0);
  return {Box{b.x0, xm, b.y0, ym}, Box{xm, b.x1, b.y0, ym}, Box{b.x0, xm, ym, b.y1}, Box{xm, b.x1, ym, b.y1}};
}

template <class Fn>
auto with_split_retry(const Box& b, Fn&& fn) {
  const double scale = std::max({std::abs(b.x0), std::abs(b.x1), std::abs(b.y0), std::abs(b.y1)});
  for (size_t attempt = 0;; ++attempt) {
    const double fx = kSplit[attempt % kSplit.size()], fy = kSplit[(attempt + 3) % kSplit.size()];
    const auto kids = split_box(b, fx, fy);
    try {
      return fn(kids);
    } catch (const BoundaryHit& h) {
      const double xm = kids[0].x1, ym = kids[0].y1;
      const bool internal = on_line(h.z.real(), xm, scale) || on_line(h.z.imag(), ym, scale);
      if (!internal || attempt + 1 >= kSplit.size()) throw;
    }
  }
}

inline int count_box_impl(const Evaluator& f, const Box& b, const ContourOptions& opt, int depth) {
  try {
    return winding(f, box_pieces(b), opt);
  } catch (const BudgetExceeded&) {
    if (depth >= opt.max_depth) throw NumericalError("argument principle exceeded the subdivision depth");
  }
  return with_split_retry(b, [&](const std::array<Box, 4>& kids) {
    int n = 0;
    for (const auto& k : kids) n += count_box_impl(f, k, opt, depth + 1);
    return n;
  });
}

[[noreturn]] inline void rethrow_boundary(const BoundaryHit& h) {
  throw BoundaryZeroError("zero on or numerically indistinguishable from the contour near (" + fmt(h.z.real()) +
                              ", " + fmt(h.z.imag()) + ") on " + h.name,
                          h.piece);
}

}  // namespace detail

/// Number of zeros (with multiplicity) of f inside the box.
inline int count_zeros_box(const Evaluator& f, const Box& b, const ContourOptions& opt = {}) {
  if (!(b.x1 > b.x0) || !(b.y1 > b.y0)) throw DomainError("box needs nonempty interior");
  try {
    return detail::count_box_impl(f, b, opt, 0);
  } catch (const detail::BoundaryHit& h) {
    detail::rethrow_boundary(h);
  }
}

/// Sampling matched to the section: a degree-d polynomial or cusp form can turn
/// its phase quickly near clustered zeros, so the initial samples grow with d_N.
inline ContourOptions contour_options(const SectionSpace& sp, double tol = 1e-10) {
  ContourOptions opt;
  opt.tol = tol;
  opt.initial_samples = 16 + 2 * sp.dim();
  return opt;
}

inline int count_zeros_box(const RandomSection& s, const Box& b, double tol = 1e-10) {
  return count_zeros_box(evaluator(s), b, contour_options(*s.space, tol));
}

/// Number of zeros inside the circle |z - c| = r.
inline int count_zeros_circle(const Evaluator& f, cplx c, double r, const ContourOptions& opt = {}) {
  if (!(r > 0.0)) throw DomainError("circle radius must be positive");
  std::vector<detail::PathPiece> pieces;
  for (int k = 0; k < 4; ++k) {
    const double a0 = kPi / 2.0 * k;
    pieces.push_back({[c, r, a0](double t) { return c + std::polar(r, a0 + t * kPi / 2.0); },
                      "arc " + std::to_string(k) + " of |z-c|=" + detail::fmt(r)});
  }
  ContourOptions o = opt;
  o.budget = std::max(o.budget, 200000);
  try {
    return detail::winding(f, pieces, o);
  } catch (const detail::BoundaryHit& h) {
    detail::rethrow_boundary(h);
  } catch (const detail::BudgetExceeded&) {
    throw NumericalError("circle contour exceeded the evaluation budget");
  }
}

/// Zeros inside a box: the box is tiled 2^grid_depth per side, tiles are
/// counted, and tiles with zeros are refined until their diameter is below
/// localize (locations are box centers, uncertainty the box diameter).
inline ZeroSet zero_set_box(const Evaluator& f, const Region& region, int grid_depth, const ContourOptions& opt = {},
                            double localize = 1e-4) {
  if (!region.is_box()) throw DomainError("argument-principle zero sets need a box region");
  if (grid_depth < 0 || grid_depth > 10) throw DomainError("grid_depth must be in [0, 10]");
  ZeroSet out;
  out.region = region;
  out.method = ZeroMethod::kArgumentPrinciple;

  std::function<void(const Box&, int)> refine = [&](const Box& b, int count) {
    if (count == 0) return;
    if (b.diameter() < localize) {
      const SectionValue v = f(b.center());
      out.points.push_back({b.center(), count, std::abs(v.unit), b.diameter()});
      return;
    }
    // Counts of the children are computed before recursing so a retry never
    // leaves partial output behind.
    std::array<int, 4> counts{};
    const auto kids = detail::with_split_retry(b, [&](const std::array<Box, 4>& k) {
      for (int i = 0; i < 4; ++i) counts[i] = detail::count_box_impl(f, k[i], opt, 0);
      return k;
    });
    if (counts[0] + counts[1] + counts[2] + counts[3] != count)
      throw NumericalError("zero counts of sub-boxes do not add up");
    for (int i = 0; i < 4; ++i) refine(kids[i], counts[i]);
  };

  const Box& r = region.as_box();
  const int n = 1 << grid_depth;
  try {
    // Interior grid lines are jittered away from the uniform positions; a line
    // that meets a zero is moved and the whole tiling recounted.
    for (int attempt = 0;; ++attempt) {
      std::vector<double> xs(n + 1), ys(n + 1);
      for (int i = 0; i <= n; ++i) {
        const double j = (i == 0 || i == n) ? 0.0 : detail::kSplit[(i + attempt) % detail::kSplit.size()] - 0.5;
        xs[i] = r.x0 + (r.x1 - r.x0) * (i + 0.5 * j) / n;
        ys[i] = r.y0 + (r.y1 - r.y0) * (i - 0.5 * j) / n;
      }
      std::vector<std::pair<Box, int>> tiles;
      try {
        for (int iy = 0; iy < n; ++iy)
          for (int ix = 0; ix < n; ++ix) {
            const Box t{xs[ix], xs[ix + 1], ys[iy], ys[iy + 1]};
            tiles.emplace_back(t, detail::count_box_impl(f, t, opt, 0));
          }
      } catch (const detail::BoundaryHit& h) {
        const double scale = std::max({std::abs(r.x0), std::abs(r.x1), std::abs(r.y0), std::abs(r.y1)});
        bool internal = false;
        for (int i = 1; i < n; ++i)
          internal = internal || detail::on_line(h.z.real(), xs[i], scale) || detail::on_line(h.z.imag(), ys[i], scale);
        if (!internal || attempt >= 5) throw;
        continue;
      }
      for (const auto& [t, c] : tiles) {
        out.total_count += c;
        refine(t, c);
      }
      break;
    }
  } catch (const detail::BoundaryHit& h) {
    detail::rethrow_boundary(h);
  }
  std::sort(out.points.begin(), out.points.end(), [](const ZeroPoint& p, const ZeroPoint& q) {
    if (p.location.real() != q.location.real()) return p.location.real() < q.location.real();
    return p.location.imag() < q.location.imag();
  });
  return out;
}

/// Count-only variant of zero_set_box (no localization).
inline int count_zeros_region(const Evaluator& f, const Region& region, int grid_depth, const ContourOptions& opt = {}) {
  return zero_set_box(f, region, grid_depth, opt, kInf).total_count;
}

inline ZeroSet zero_set_hyperbolic(const RandomSection& s, const Region& region, int grid_depth,
                                   const ContourOptions& opt = {}, double localize = 1e-4) {
  if (s.space->model().kind() != ModelKind::kHyperbolicGamma2) throw DomainError("zero_set_hyperbolic needs cusp forms");
  validate_region(s.space->model(), region);
  return zero_set_box(evaluator(s), region, grid_depth, opt, localize);
}

/// Interior zeros of a cusp form on Gamma(2)\H away from the cusps: the sum
/// over the six cosets of the zeros of f|g_k in the SL2(Z) fundamental domain
/// truncated at Im tau = y_top.
inline int count_zeros_fundamental(const RandomSection& s, double y_top, const ContourOptions& opt = {}) {
  if (s.space->model().kind() != ModelKind::kHyperbolicGamma2)
    throw DomainError("fundamental-domain count needs cusp forms");
  if (!(y_top > 1.0)) throw DomainError("truncation height must exceed 1");
  const cplx rho2 = std::polar(1.0, 2.0 * kPi / 3.0);
  const cplx rho = std::polar(1.0, kPi / 3.0);
  const std::vector<detail::PathPiece> pieces{
      {[](double t) { return std::polar(1.0, 2.0 * kPi / 3.0 - t * kPi / 3.0); }, "unit arc"},
      detail::segment_piece(rho, cplx(0.5, y_top), "right side x=0.5"),
      detail::segment_piece(cplx(0.5, y_top), cplx(-0.5, y_top), "top edge y=" + detail::fmt(y_top)),
      detail::segment_piece(cplx(-0.5, y_top), rho2, "left side x=-0.5")};
  ContourOptions o = opt;
  o.budget = std::max(o.budget, 200000);
  int total = 0;
  for (int k = 0; k < 6; ++k) {
    try {
      total += detail::winding(slashed_evaluator(s, k), pieces, o);
    } catch (const detail::BoundaryHit& h) {
      detail::rethrow_boundary(h);
    } catch (const detail::BudgetExceeded&) {
      throw NumericalError("fundamental-domain contour exceeded the evaluation budget");
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Serialization.

inline std::string zero_set_csv(const ZeroSet& zs) {
  std::string out = "re,im,multiplicity,residual\n";
  char buf[128];
  for (const auto& p : zs.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%.17g\n", p.location.real(), p.location.imag(), p.multiplicity,
                  p.residual);
    out += buf;
  }
  return out;
}

inline nlohmann::json zero_set_json(const ZeroSet& zs) {
  nlohmann::json j;
  j["method"] = to_string(zs.method);
  j["total_count"] = zs.total_count;
  j["merge_threshold"] = zs.merge_threshold;
  nlohmann::json reg;
  reg["chart"] = zs.region.chart() == Chart::kPlane ? "PLANE" : "UPPER_HALF_PLANE";
  if (zs.region.is_box()) {
    const auto& b = zs.region.as_box();
    reg["box"] = {b.x0, b.x1, b.y0, b.y1};
  } else {
    const auto& a = zs.region.as_annulus();
    reg["annulus"] = {a.r0, std::isinf(a.r1) ? nlohmann::json("inf") : nlohmann::json(a.r1)};
  }
  j["region"] = reg;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& p : zs.points)
    pts.push_back({{"re", p.location.real()},
                   {"im", p.location.imag()},
                   {"multiplicity", p.multiplicity},
                   {"residual", p.residual},
                   {"uncertainty", p.uncertainty}});
  return j;
}

}  // namespace zeq
