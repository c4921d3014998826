#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "zeq/bergman.hpp"
#include "zeq/harness.hpp"

using namespace zeq;
namespace fs = std::filesystem;
using harness::Command;
using harness::ExperimentConfig;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_out;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SpacePtr make(const WeightModel& m, int n) { return std::make_shared<const SectionSpace>(build_space(m, n)); }

fs::path run_harness(Command cmd, const ExperimentConfig& c) {
  std::ostringstream log;
  const int rc = harness::run_command(cmd, c, log);
  if (rc != 0) throw std::runtime_error("harness exit " + std::to_string(rc) + ": " + log.str());
  return fs::path(c.output_dir) / harness::config_hash(c);
}

ExperimentConfig equidistribution_config(const std::string& out, int workers) {
  ExperimentConfig c;
  c.model.kind = "POINCARE_WEIGHTED";
  c.model.epsilon = 0.05;
  c.n_list = {25, 50, 100, 200};
  c.samples = 200;
  c.master_seed = 20240601;
  c.centers = {cplx(0.0), cplx(0.8, 0.3), cplx(-0.6, -0.7)};
  c.radii = {0.3, 0.6, 0.9, 1.2};
  c.output_dir = out;
  c.workers = workers;
  return c;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gram_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int n = 1; n <= 50; ++n) {
    const auto sp = build_space(WeightModel::fubini_study(), n);
    for (int j = 0; j <= n; ++j) {
      const double log_beta = std::lgamma(j + 1.0) + std::lgamma(n - j + 1.0) - std::lgamma(n + 2.0);
      worst = std::max(worst, std::abs(std::expm1(2.0 * sp.log_scales()[j] - log_beta)));
    }
  }
  const double secs = since(t0);
  return {worst < 1e-8 && secs < 10.0, "max relative error " + fmt("%.3g", worst) + " over N <= 50"};
}

Outcome bergman_trace() {
  std::vector<cplx> grid;
  for (int i = 0; i < 10; ++i)
    for (int k = 0; k < 5; ++k) grid.emplace_back(-3.0 + 0.65 * i, -2.0 + 0.9 * k);
  double flat = 0.0, fs_trace = 0.0, pw_trace = 0.0;
  for (int n : {3, 10, 30}) {
    const auto sp = make(WeightModel::fubini_study(), n);
    for (const auto& z : grid) flat = std::max(flat, std::abs(bergman_diag(*sp, z) / (n + 1.0) - 1.0));
    fs_trace = std::max(fs_trace, std::abs(trace_check(*sp) - 1.0));
  }
  for (int n : {10, 40}) pw_trace = std::max(pw_trace, std::abs(trace_check(*make(WeightModel::poincare(0.05), n)) - 1.0));
  return {flat < 1e-8 && fs_trace < 1e-8 && pw_trace < 1e-6,
          "FS |P_N/(N+1)-1| " + fmt("%.3g", flat) + ", FS |trace-1| " + fmt("%.3g", fs_trace) + ", PW |trace-1| " +
              fmt("%.3g", pw_trace)};
}

Outcome leading_coefficient() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = WeightModel::poincare(0.05);
  std::vector<SpacePtr> spaces;
  for (int n : {40, 80, 120, 160, 200}) spaces.push_back(make(m, n));
  double worst = 0.0;
  for (cplx z : {cplx(0.0), cplx(0.5, 0.0), cplx(1.0, 1.0), cplx(-2.0, 0.5), cplx(0.0, 3.0)})
    worst = std::max(worst, leading_coeff_fit(spaces, z).relative_error());
  const double secs = since(t0);
  return {worst < 0.05 && secs < 120.0, "max |b0 - curvature/base| / (curvature/base) = " + fmt("%.4g", worst)};
}

Outcome pullback_rates() {
  const auto m = WeightModel::poincare(0.05);
  const std::vector<int> degrees{25, 50, 100, 200};
  const std::vector<cplx> points{cplx(0.0), cplx(0.5, 0.0), cplx(0.3, 0.4), cplx(-0.6, 0.2), cplx(-0.2, -0.7)};
  std::vector<std::vector<double>> dev(points.size());
  bool flagged = false;
  for (int n : degrees) {
    const auto sp = make(m, n);
    for (size_t i = 0; i < points.size(); ++i) {
      const auto p = fs_pullback_density(*sp, points[i]);
      dev[i].push_back(p.deviation());
      flagged = flagged || p.flagged;
    }
  }
  // Bounded: the scaled deviation at the largest N stays within 3x its value at the smallest N.
  double r1 = 0.0, r2 = 0.0;
  for (const auto& d : dev) {
    const double n0 = degrees.front(), n1 = degrees.back();
    r1 = std::max(r1, (n1 * d.back()) / (n0 * d.front()));
    r2 = std::max(r2, (n1 * n1 * d.back()) / (n0 * n0 * d.front()));
  }
  return {r1 <= 3.0 && r2 <= 3.0 && !flagged,
          "max ratio N*dev(200)/N*dev(25) = " + fmt("%.3g", r1) + ", N^2*dev ratio = " + fmt("%.3g", r2) +
              (flagged ? ", finite-difference step flagged" : "")};
}

Outcome equidistribution(std::string& records_a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = run_harness(Command::kEquidistribute, equidistribution_config((g_out / "equi_a").string(), 8));
  const double secs = since(t0);
  records_a = slurp(run / "records.csv");
  const json fit = json::parse(slurp(run / "ratefit.json"));
  const auto stat = fit["statistic"].get<std::vector<double>>();
  bool decreasing = true;
  for (size_t i = 1; i < stat.size(); ++i) decreasing = decreasing && stat[i] < stat[i - 1];
  const double slope = fit["slope"].get<double>();
  std::string s = "median stat";
  for (double v : stat) s += " " + fmt("%.3g", v);
  return {decreasing && slope <= -0.7 && secs < 600.0,
          s + ", slope " + fmt("%.3f", slope) + ", " + fmt("%.0f", secs) + " s"};
}

Outcome exceptional_decay() {
  auto c = equidistribution_config((g_out / "exceptional").string(), 8);
  c.n_list = {50, 100, 200};
  c.samples = 500;
  const auto run = run_harness(Command::kEquidistribute, c);
  const json fit = json::parse(slurp(run / "ratefit.json"));
  std::vector<double> frac;
  for (int n : c.n_list) frac.push_back(fit["exceptional_fraction"][std::to_string(n)].get<double>());
  bool ok = true;
  for (size_t i = 1; i < frac.size(); ++i) ok = ok && frac[i] <= frac[i - 1];
  return {ok, "violating fractions " + fmt("%.4g", frac[0]) + ", " + fmt("%.4g", frac[1]) + ", " +
                  fmt("%.4g", frac[2])};
}

Outcome cusp_forms() {
  ExperimentConfig c;
  c.model.kind = "HYPERBOLIC_GAMMA2";
  c.n_list = {10, 20, 30};
  c.samples = 50;
  c.master_seed = 7;
  c.region = {"box", {-0.5, 0.5, 0.4, 1.5}};
  c.grid_depth = 2;
  c.output_dir = (g_out / "cusp").string();
  c.workers = 8;
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = run_harness(Command::kCuspforms, c);
  const double secs = since(t0);
  const json r = json::parse(slurp(run / "cuspforms.json"));
  const double mass = r["predicted_mass"].get<double>();
  std::vector<double> mean, dev;
  int failed = 0;
  bool interior_ok = true;
  for (size_t i = 0; i < r["per_N"].size(); ++i) {
    const auto& p = r["per_N"][i];
    mean.push_back(p["mean_count_over_N"].get<double>());
    dev.push_back(p["abs_deviation"].get<double>());
    failed += p["failed"].get<int>();
    interior_ok = interior_ok && p["max_interior_count"].get<int>() <= c.n_list[i] - 3;
  }
  bool decreasing = true;
  for (size_t i = 1; i < dev.size(); ++i) decreasing = decreasing && dev[i] < dev[i - 1];
  const double rel = std::abs(mean.back() - mass) / mass;
  std::string s = "predicted " + fmt("%.4f", mass) + ", mean count/N";
  for (double v : mean) s += " " + fmt("%.4f", v);
  s += ", rel.err at N=30 " + fmt("%.3f", rel) + (decreasing ? "" : ", deviation not decreasing") + ", " +
       fmt("%.0f", secs) + " s";
  if (failed) s += ", " + std::to_string(failed) + " failed samples";
  return {rel <= 0.15 && decreasing && interior_ok && failed == 0 && secs < 1800.0, s};
}

Outcome cross_method() {
  int agree = 0, total = 0;
  const std::vector<Box> boxes{{-0.93, 1.07, -0.96, 1.04}, {0.11, 2.3, -1.7, 0.4}};
  for (const auto& m : {WeightModel::fubini_study(), WeightModel::poincare(0.05)})
    for (int n : {10, 50, 100}) {
      const auto sp = make(m, n);
      for (int i = 0; i < 50; ++i) {
        const auto s = sample_section(sp, sample_seed(77, n, i));
        const auto zs = poly_roots(s);
        bool same = true;
        for (const auto& b : boxes)
          same = same && count_zeros_box(s, b) == zs.count_in(Region::box(Chart::kPlane, b.x0, b.x1, b.y0, b.y1));
        agree += same;
        ++total;
      }
    }
  const auto hy = WeightModel::hyperbolic_gamma2();
  int exact = 0, exact_total = 0, bounded = 0, bounded_total = 0;
  for (int n = 3; n <= 8; ++n) {
    const auto sp = make(hy, n);
    for (int i = 0; i < 5; ++i) {
      const auto s = sample_section(sp, sample_seed(78, n, i));
      exact += count_zeros_fundamental(s, 20.0, contour_options(*sp)) == n - 3;
      ++exact_total;
    }
  }
  for (int n : {10, 20}) {
    const auto sp = make(hy, n);
    for (int i = 0; i < 5; ++i) {
      const auto s = sample_section(sp, sample_seed(79, n, i));
      bounded += count_zeros_fundamental(s, 4.0, contour_options(*sp)) <= n - 3;
      ++bounded_total;
    }
  }
  return {agree == total && exact == exact_total && bounded == bounded_total,
          std::to_string(agree) + "/" + std::to_string(total) + " polynomial sections agree; interior = N-3 in " +
              std::to_string(exact) + "/" + std::to_string(exact_total) + " (N <= 8); <= N-3 in " +
              std::to_string(bounded) + "/" + std::to_string(bounded_total)};
}

Outcome dimensions() {
  bool ok = true;
  for (int n : {1, 2, 7, 20}) {
    ok = ok && build_space(WeightModel::fubini_study(), n).dim() == n + 1;
    ok = ok && build_space(WeightModel::poincare(0.05), n).dim() == n;
  }
  for (int n = 3; n <= 12; ++n) ok = ok && build_space(WeightModel::hyperbolic_gamma2(), n).dim() == n - 2;
  return {ok, "d_N = N+1, N, N-2 checked for FS/PW N in {1,2,7,20} and cusp forms N = 3..12"};
}

Outcome determinism(const std::string& records_a) {
  if (records_a.empty()) return {false, "first run produced no records"};
  const auto run = run_harness(Command::kEquidistribute, equidistribution_config((g_out / "equi_b").string(), 1));
  const std::string b = slurp(run / "records.csv");
  return {b == records_a, std::to_string(records_a.size()) + " bytes, workers 8 vs 1, separate caches"};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  g_out = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "zeq_acceptance";
  fs::remove_all(g_out);
  fs::create_directories(g_out);
  std::string records_a;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 Gram oracle", gram_oracle},
      {"2 Bergman constancy and trace", bergman_trace},
      {"3 Leading coefficient", leading_coefficient},
      {"4 FS-pullback rates", pullback_rates},
      {"5 Equidistribution", [&] { return equidistribution(records_a); }},
      {"6 Exceptional-set decay", exceptional_decay},
      {"7 Cusp forms", cusp_forms},
      {"8 Cross-method zero counting", cross_method},
      {"9 Dimension laws", dimensions},
      {"10 Determinism", [&] { return determinism(records_a); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = since(t0);
    std::printf("%s  [%s] %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    failures += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
