#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "zeq/error.hpp"
#include "zeq/geometry.hpp"
#include "zeq/quadrature.hpp"
#include "zeq/rng.hpp"
#include "zeq/spaces.hpp"
#include "zeq/zeros.hpp"

namespace zeq {

struct DiscrepancyRecord {
  ModelKind model = ModelKind::kFubiniStudy;
  int degree = 0;
  int sample_id = 0;
  int testform_id = 0;
  double empirical = 0.0;
  double predicted = 0.0;
  double discrepancy = 0.0;
  double c2_norm = 0.0;
  std::uint64_t seed = 0;
};

/// (1/N) sum over zeros of multiplicity * phi(location).
inline double pair_empirical(const ZeroSet& zs, const TestForm& phi, int degree) {
  if (degree <= 0) throw DomainError("degree must be positive");
  if (!zs.region.contains_disk(phi.center, phi.radius))
    throw DomainError("test-form support leaves the zero-set region");
  double s = 0.0;
  for (const auto& p : zs.points) s += p.multiplicity * phi.value(p.location);
  return s / degree;
}

/// Integral of phi * curvature_density over the support, in polar
/// coordinates around the centre: trapezoid in the angle (periodic), adaptive
/// Gauss-Kronrod in the radius.
inline double pair_predicted(const WeightModel& m, const TestForm& phi, double rel_tol = 1e-8) {
  if (!(phi.radius > 0.0)) return 0.0;
  if (m.chart() == Chart::kUpperHalfPlane && !(phi.center.imag() - phi.radius > 0.0))
    throw DomainError("test-form support leaves the upper half-plane");
  auto ray = [&](double theta) {
    const cplx dir = std::polar(1.0, theta);
    return gk_integrate(
        [&](double r) { return phi.value(phi.center + r * dir) * curvature_density(m, phi.center + r * dir) * r; }, 0.0,
        phi.radius, 0.1 * rel_tol, "pair_predicted");
  };
  int n = 8;
  double prev = 0.0;
  for (int k = 0; k < n; ++k) prev += ray(2.0 * kPi * k / n);
  prev *= 2.0 * kPi / n;
  for (int round = 0; round < 10; ++round) {
    double add = 0.0;
    for (int k = 0; k < n; ++k) add += ray(2.0 * kPi * (k + 0.5) / n);
    n *= 2;
    const double cur = 0.5 * prev + add * 2.0 * kPi / n;
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur)) return cur;
    prev = cur;
  }
  throw QuadratureError("pair_predicted angular trapezoid did not converge", std::abs(prev));
}

/// 3 centres x 4 radii (or any product), in centre-major order.
inline std::vector<TestForm> make_dictionary(const std::vector<cplx>& centers, const std::vector<double>& radii) {
  std::vector<TestForm> out;
  for (const auto& c : centers)
    for (double r : radii) {
      if (!(r > 0.0)) throw DomainError("test-form radius must be positive");
      out.push_back({c, r, 1.0});
    }
  return out;
}

struct FailedSample {
  int degree;
  int sample_id;
  std::string message;
};

struct EnsembleResult {
  std::vector<DiscrepancyRecord> records;
  std::vector<FailedSample> failures;
};

using ZeroExtractor = std::function<ZeroSet(const RandomSection&)>;

/// Zero extraction matched to the model: polynomial roots for the polynomial
/// models, argument-principle localization inside `region` for cusp forms.
inline ZeroExtractor default_extractor(const SectionSpace& sp, const Region& region, int grid_depth = 2) {
  if (sp.model().is_polynomial()) return [](const RandomSection& s) { return poly_roots(s); };
  return [region, grid_depth](const RandomSection& s) {
    return zero_set_hyperbolic(s, region, grid_depth, contour_options(*s.space));
  };
}

/// Runs fn(i) for i in [0, count) on `workers` threads.
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// M sections with seeds sample_seed(master, N, i), paired against every test
/// form. Records are ordered by (sample, test form) regardless of scheduling.
inline EnsembleResult ensemble_discrepancy(const SpacePtr& space, const std::vector<TestForm>& forms, int samples,
                                           std::uint64_t master_seed, const ZeroExtractor& extract, int workers = 1,
                                           const std::vector<double>* predicted = nullptr) {
  if (samples < 1) throw DomainError("ensemble needs at least one sample");
  const int n = space->degree();
  std::vector<double> pred;
  if (predicted) {
    if (predicted->size() != forms.size()) throw DomainError("predicted pairings do not match the dictionary");
    pred = *predicted;
  } else {
    for (const auto& f : forms) pred.push_back(pair_predicted(space->model(), f));
  }
  std::vector<std::vector<DiscrepancyRecord>> per(samples);
  std::vector<std::string> errors(samples);
  parallel_for(samples, workers, [&](int i) {
    const std::uint64_t seed = sample_seed(master_seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i));
    try {
      const auto section = sample_section(space, seed);
      const ZeroSet zs = extract(section);
      for (size_t k = 0; k < forms.size(); ++k) {
        DiscrepancyRecord r;
        r.model = space->model().kind();
        r.degree = n;
        r.sample_id = i;
        r.testform_id = static_cast<int>(k);
        r.empirical = pair_empirical(zs, forms[k], n);
        r.predicted = pred[k];
        r.discrepancy = r.empirical - r.predicted;
        r.c2_norm = forms[k].c2_norm();
        r.seed = seed;
        per[i].push_back(r);
      }
    } catch (const NumericalError& e) {
      errors[i] = e.what();
      per[i].clear();
    }
  });
  EnsembleResult out;
  for (int i = 0; i < samples; ++i) {
    if (!errors[i].empty()) out.failures.push_back({n, i, errors[i]});
    out.records.insert(out.records.end(), per[i].begin(), per[i].end());
  }
  return out;
}

struct RateFit {
  std::vector<int> degrees;
  std::vector<double> statistic;   // median |discrepancy| / c2_norm
  std::vector<double> mean;        // mean of the same
  std::vector<double> normalized;  // N stat / log N
  std::vector<double> residuals;
  std::vector<bool> floored;       // nonpositive statistic replaced by machine epsilon
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares line through (log N, log stat).
inline RateFit rate_fit(const std::vector<int>& degrees, const std::vector<double>& stat,
                        const std::vector<double>& mean = {}) {
  if (degrees.size() != stat.size()) throw DomainError("rate fit needs one statistic per degree");
  if (degrees.size() < 3) throw DomainError("rate fit needs at least 3 distinct degrees");
  for (size_t i = 1; i < degrees.size(); ++i)
    if (degrees[i] <= degrees[i - 1]) throw DomainError("rate fit needs strictly increasing degrees");
  RateFit f;
  f.degrees = degrees;
  f.mean = mean;
  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<double> x, y;
  for (size_t i = 0; i < degrees.size(); ++i) {
    const bool low = !(stat[i] > 0.0);
    const double s = low ? eps : stat[i];
    f.statistic.push_back(s);
    f.floored.push_back(low);
    f.normalized.push_back(degrees[i] * s / std::log(static_cast<double>(degrees[i])));
    x.push_back(std::log(static_cast<double>(degrees[i])));
    y.push_back(std::log(s));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (size_t i = 0; i < x.size(); ++i) f.residuals.push_back(y[i] - (f.intercept + f.slope * x[i]));
  return f;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty set");
  const size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + m));
}

/// Groups records by N; statistic = median over samples and test forms of
/// |discrepancy| / c2_norm.
inline RateFit rate_fit(const std::vector<DiscrepancyRecord>& records) {
  std::map<int, std::vector<double>> by;
  for (const auto& r : records) by[r.degree].push_back(std::abs(r.discrepancy) / r.c2_norm);
  std::vector<int> degrees;
  std::vector<double> stat, mean;
  for (const auto& [n, v] : by) {
    degrees.push_back(n);
    stat.push_back(median(v));
    double s = 0.0;
    for (double x : v) s += x;
    mean.push_back(s / v.size());
  }
  return rate_fit(degrees, stat, mean);
}

/// Per N: fraction of samples whose worst |discrepancy| / c2_norm over the
/// dictionary exceeds lambda(N) / N.
inline std::map<int, double> exceptional_fraction(const std::vector<DiscrepancyRecord>& records,
                                                  const std::function<double(int)>& lambda) {
  std::map<int, std::map<int, double>> worst;
  for (const auto& r : records) {
    double& w = worst[r.degree][r.sample_id];
    w = std::max(w, std::abs(r.discrepancy) / r.c2_norm);
  }
  std::map<int, double> out;
  for (const auto& [n, samples] : worst) {
    const double thr = lambda(n) / n;
    int bad = 0;
    for (const auto& [id, w] : samples)
      if (w > thr) ++bad;
    out[n] = static_cast<double>(bad) / samples.size();
  }
  return out;
}

inline double lambda_log_power(int n, double power = 1.1) { return std::pow(std::log(static_cast<double>(n)), power); }

// ---------------------------------------------------------------------------
// Serialization.

inline std::string records_csv_header() { return "model,N,sample_id,testform_id,empirical,predicted,discrepancy,c2_norm,seed\n"; }

inline std::string records_csv_rows(const std::vector<DiscrepancyRecord>& records) {
  std::string out;
  char buf[320];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%llu\n", to_string(r.model), r.degree,
                  r.sample_id, r.testform_id, r.empirical, r.predicted, r.discrepancy, r.c2_norm,
                  static_cast<unsigned long long>(r.seed));
    out += buf;
  }
  return out;
}

inline nlohmann::json rate_fit_json(const RateFit& f) {
  nlohmann::json j;
  j["N_list"] = f.degrees;
  j["statistic"] = f.statistic;
  j["mean"] = f.mean;
  j["normalized"] = f.normalized;
  j["residuals"] = f.residuals;
  j["floored"] = f.floored;
  j["slope"] = f.slope;
  j["intercept"] = f.intercept;
  return j;
}

}  // namespace zeq
