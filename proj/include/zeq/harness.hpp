#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "zeq/bergman.hpp"
#include "zeq/error.hpp"
#include "zeq/geometry.hpp"
#include "zeq/spaces.hpp"
#include "zeq/stats.hpp"
#include "zeq/zeros.hpp"

namespace zeq::harness {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration.

struct ModelSpec {
  std::string kind = "FUBINI_STUDY";
  double epsilon = 0.05;
  double offset = std::exp(2.0);
  double cusp_height = 0.25;
  double weight_shift = 0.0;

  WeightModel build() const {
    WeightModel m = [&] {
      switch (model_kind_from_string(kind)) {
        case ModelKind::kFubiniStudy: return WeightModel::fubini_study();
        case ModelKind::kPoincareWeighted: return WeightModel::poincare(epsilon, offset);
        case ModelKind::kHyperbolicGamma2: return WeightModel::hyperbolic_gamma2(cusp_height);
      }
      throw ConfigError("unknown model kind " + kind);
    }();
    return weight_shift == 0.0 ? m : m.with_weight_shift(weight_shift);
  }
};

struct RegionSpec {
  std::string shape = "plane";  // plane | box | annulus
  std::vector<double> bounds;   // box: x0 x1 y0 y1, annulus: r0 r1

  Region build(Chart chart) const {
    if (shape == "plane") return Region::plane();
    if (shape == "box") {
      if (bounds.size() != 4) throw ConfigError("region.bounds needs 4 numbers for a box");
      return Region::box(chart, bounds[0], bounds[1], bounds[2], bounds[3]);
    }
    if (shape == "annulus") {
      if (bounds.size() != 2) throw ConfigError("region.bounds needs 2 numbers for an annulus");
      return Region::annulus(bounds[0], bounds[1]);
    }
    throw ConfigError("region.shape must be plane, box or annulus");
  }
};

struct Tolerances {
  double quad = 1e-10;
  double root_residual = 1e-8;
  double q_tail = 1e-3;
  double contour = 1e-10;
  double eval = 1e-10;
};

struct ExperimentConfig {
  ModelSpec model;
  std::vector<int> n_list{10};
  int samples = 1;
  std::uint64_t master_seed = 0;
  RegionSpec region;
  std::vector<cplx> centers{cplx(0.0)};
  std::vector<double> radii{0.5};
  Tolerances tol;
  double lambda_power = 1.1;
  int grid_depth = 2;
  double fundamental_height = 0.0;  // 0: 1 / cusp_height
  std::vector<cplx> bergman_grid;
  std::vector<cplx> bergman_points;
  double fd_step = 1e-3;
  std::string output_dir = "out";
  int workers = 1;

  SpaceOptions space_options() const {
    SpaceOptions o;
    o.quad_tol = tol.quad;
    o.q_tail_tol = tol.q_tail;
    o.eval_tol = tol.eval;
    return o;
  }
};

namespace detail {

inline json cplx_list(const std::vector<cplx>& v) {
  json a = json::array();
  for (const auto& z : v) a.push_back({z.real(), z.imag()});
  return a;
}

inline std::vector<cplx> parse_cplx_list(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key + " must be a list of [re, im] pairs");
  std::vector<cplx> out;
  for (const auto& e : j) {
    if (e.is_number()) {
      out.emplace_back(e.get<double>(), 0.0);
    } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
      out.emplace_back(e[0].get<double>(), e[1].get<double>());
    } else {
      throw ConfigError(key + " must be a list of [re, im] pairs");
    }
  }
  return out;
}

template <class T>
T get_or(const json& j, const char* key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for " + path + key);
  }
}

inline void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key " + path + it.key());
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"kind", c.model.kind},
                {"epsilon", c.model.epsilon},
                {"offset", c.model.offset},
                {"cusp_height", c.model.cusp_height},
                {"weight_shift", c.model.weight_shift}};
  j["N_list"] = c.n_list;
  j["samples"] = c.samples;
  j["master_seed"] = c.master_seed;
  j["region"] = {{"shape", c.region.shape}, {"bounds", c.region.bounds}};
  j["testforms"] = {{"centers", detail::cplx_list(c.centers)}, {"radii", c.radii}};
  j["tolerances"] = {{"quad", c.tol.quad},
                     {"root_residual", c.tol.root_residual},
                     {"q_tail", c.tol.q_tail},
                     {"contour", c.tol.contour},
                     {"eval", c.tol.eval}};
  j["lambda_power"] = c.lambda_power;
  j["grid_depth"] = c.grid_depth;
  j["fundamental_height"] = c.fundamental_height;
  j["bergman"] = {{"grid", detail::cplx_list(c.bergman_grid)},
                  {"points", detail::cplx_list(c.bergman_points)},
                  {"fd_step", c.fd_step}};
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  return j;
}

inline ExperimentConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(j,
                         {"model", "N_list", "samples", "master_seed", "region", "testforms", "tolerances",
                          "lambda_power", "grid_depth", "fundamental_height", "bergman", "output_dir", "workers"},
                         "");
  ExperimentConfig c;
  if (j.contains("model")) {
    const auto& m = j["model"];
    if (!m.is_object()) throw ConfigError("model must be an object");
    detail::reject_unknown(m, {"kind", "epsilon", "offset", "cusp_height", "weight_shift"}, "model.");
    c.model.kind = detail::get_or(m, "kind", "model.", c.model.kind);
    c.model.epsilon = detail::get_or(m, "epsilon", "model.", c.model.epsilon);
    c.model.offset = detail::get_or(m, "offset", "model.", c.model.offset);
    c.model.cusp_height = detail::get_or(m, "cusp_height", "model.", c.model.cusp_height);
    c.model.weight_shift = detail::get_or(m, "weight_shift", "model.", c.model.weight_shift);
  }
  c.n_list = detail::get_or(j, "N_list", "", c.n_list);
  c.samples = detail::get_or(j, "samples", "", c.samples);
  c.master_seed = detail::get_or(j, "master_seed", "", c.master_seed);
  if (j.contains("region")) {
    const auto& r = j["region"];
    if (!r.is_object()) throw ConfigError("region must be an object");
    detail::reject_unknown(r, {"shape", "bounds"}, "region.");
    c.region.shape = detail::get_or(r, "shape", "region.", c.region.shape);
    c.region.bounds = detail::get_or(r, "bounds", "region.", c.region.bounds);
  }
  if (j.contains("testforms")) {
    const auto& t = j["testforms"];
    if (!t.is_object()) throw ConfigError("testforms must be an object");
    detail::reject_unknown(t, {"centers", "radii"}, "testforms.");
    if (t.contains("centers")) c.centers = detail::parse_cplx_list(t["centers"], "testforms.centers");
    c.radii = detail::get_or(t, "radii", "testforms.", c.radii);
  }
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    if (!t.is_object()) throw ConfigError("tolerances must be an object");
    detail::reject_unknown(t, {"quad", "root_residual", "q_tail", "contour", "eval"}, "tolerances.");
    c.tol.quad = detail::get_or(t, "quad", "tolerances.", c.tol.quad);
    c.tol.root_residual = detail::get_or(t, "root_residual", "tolerances.", c.tol.root_residual);
    c.tol.q_tail = detail::get_or(t, "q_tail", "tolerances.", c.tol.q_tail);
    c.tol.contour = detail::get_or(t, "contour", "tolerances.", c.tol.contour);
    c.tol.eval = detail::get_or(t, "eval", "tolerances.", c.tol.eval);
  }
  c.lambda_power = detail::get_or(j, "lambda_power", "", c.lambda_power);
  c.grid_depth = detail::get_or(j, "grid_depth", "", c.grid_depth);
  c.fundamental_height = detail::get_or(j, "fundamental_height", "", c.fundamental_height);
  if (j.contains("bergman")) {
    const auto& b = j["bergman"];
    if (!b.is_object()) throw ConfigError("bergman must be an object");
    detail::reject_unknown(b, {"grid", "points", "fd_step"}, "bergman.");
    if (b.contains("grid")) c.bergman_grid = detail::parse_cplx_list(b["grid"], "bergman.grid");
    if (b.contains("points")) c.bergman_points = detail::parse_cplx_list(b["points"], "bergman.points");
    c.fd_step = detail::get_or(b, "fd_step", "bergman.", c.fd_step);
  }
  c.output_dir = detail::get_or(j, "output_dir", "", c.output_dir);
  c.workers = detail::get_or(j, "workers", "", c.workers);
  return c;
}

/// Applies "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path " + path + " crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override path " + path + " crosses a non-object");
  (*node)[parts.back()] = value;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of every numerical setting (output directory and worker count excluded).
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("workers");
  return hex16(fnv1a(j.dump()));
}

enum class Command { kEquidistribute, kBergman, kCuspforms, kValidate };

inline void validate(const ExperimentConfig& c, Command cmd) {
  if (c.n_list.empty()) throw ConfigError("N_list must be nonempty");
  for (size_t i = 0; i < c.n_list.size(); ++i) {
    if (c.n_list[i] < 1) throw ConfigError("N_list entries must be positive");
    if (i > 0 && c.n_list[i] <= c.n_list[i - 1]) throw ConfigError("N_list must be strictly ascending");
  }
  if (c.samples < 1) throw ConfigError("samples must be at least 1");
  for (double t : {c.tol.quad, c.tol.root_residual, c.tol.q_tail, c.tol.contour, c.tol.eval})
    if (!(t > 0.0)) throw ConfigError("tolerances must be positive");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (c.grid_depth < 0 || c.grid_depth > 10) throw ConfigError("grid_depth must be in [0, 10]");
  if (!(c.fd_step > 0.0)) throw ConfigError("bergman.fd_step must be positive");
  if (!(c.lambda_power >= 0.0)) throw ConfigError("lambda_power must be nonnegative");
  WeightModel m = WeightModel::fubini_study();
  try {
    m = c.model.build();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
  Region region = Region::plane();
  try {
    region = c.region.build(m.chart());
    validate_region(m, region);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid region: ") + e.what());
  }
  if (m.kind() == ModelKind::kHyperbolicGamma2 && c.n_list.front() < 3)
    throw ConfigError("cusp forms need N >= 3");
  for (double r : c.radii)
    if (!(r > 0.0)) throw ConfigError("test-form radii must be positive");
  if (cmd == Command::kEquidistribute) {
    for (const auto& z : c.centers)
      for (double r : c.radii)
        if (!region.contains_disk(z, r)) throw ConfigError("test-form support leaves the region");
    if (!m.is_polynomial() && !region.is_box()) throw ConfigError("cusp-form experiments need a box region");
  }
  if (cmd == Command::kBergman) {
    if (c.n_list.size() < 3) throw ConfigError("bergman fits need at least 3 degrees in N_list");
    for (const auto& z : c.bergman_points)
      if (m.chart() == Chart::kUpperHalfPlane && !(z.imag() > 4.0 * c.fd_step))
        throw ConfigError("bergman point too close to the real axis");
  }
  if (cmd == Command::kCuspforms) {
    if (m.kind() != ModelKind::kHyperbolicGamma2) throw ConfigError("cuspforms needs model.kind HYPERBOLIC_GAMMA2");
    if (!region.is_box()) throw ConfigError("cuspforms needs a box region");
    if (c.fundamental_height != 0.0 && !(c.fundamental_height > 1.0))
      throw ConfigError("fundamental_height must exceed 1");
  }
}

// ---------------------------------------------------------------------------
// Space cache.

inline json space_parts_json(const SectionSpace& sp) {
  const auto parts = parts_of(sp);
  auto mat = [](const CMatrix& m) {
    json a = json::array();
    for (int i = 0; i < m.rows(); ++i)
      for (int k = 0; k < m.cols(); ++k) a.push_back({m(i, k).real(), m(i, k).imag()});
    return a;
  };
  return {{"dim", sp.dim()},
          {"gram", mat(parts.gram)},
          {"log_scales", parts.log_scales},
          {"hessenberg_rows", parts.hessenberg.rows()},
          {"hessenberg", mat(parts.hessenberg)},
          {"log_h0", parts.log_h0}};
}

inline SectionSpace::Parts parts_from_json(const json& j) {
  auto mat = [](const json& a, int n) {
    CMatrix m(n, n);
    if (static_cast<int>(a.size()) != n * n) throw NumericalError("cached matrix has the wrong size");
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) m(i, k) = cplx(a[i * n + k][0].get<double>(), a[i * n + k][1].get<double>());
    return m;
  };
  SectionSpace::Parts p;
  const int d = j.at("dim").get<int>();
  p.gram = mat(j.at("gram"), d);
  p.log_scales = j.at("log_scales").get<std::vector<double>>();
  p.hessenberg = mat(j.at("hessenberg"), j.at("hessenberg_rows").get<int>());
  p.log_h0 = j.at("log_h0").get<double>();
  return p;
}

struct CacheEntry {
  SpacePtr space;
  bool hit = false;
  double seconds = 0.0;
};

/// Spaces stored as JSON under <dir>/space-<hash>.json, keyed by model, degree
/// and the space tolerances.
class SpaceCache {
 public:
  explicit SpaceCache(fs::path dir) : dir_(std::move(dir)) {}

  CacheEntry get(const ModelSpec& spec, int degree, const SpaceOptions& opts) const {
    const auto t0 = std::chrono::steady_clock::now();
    json key = {{"kind", spec.kind},
                {"epsilon", spec.epsilon},
                {"offset", spec.offset},
                {"cusp_height", spec.cusp_height},
                {"weight_shift", spec.weight_shift},
                {"N", degree},
                {"quad_tol", opts.quad_tol},
                {"q_tail_tol", opts.q_tail_tol},
                {"max_q", opts.max_q},
                {"eval_tol", opts.eval_tol}};
    const fs::path file = dir_ / ("space-" + hex16(fnv1a(key.dump())) + ".json");
    const WeightModel model = spec.build();
    CacheEntry e;
    if (fs::exists(file)) {
      std::ifstream in(file);
      const json j = json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("key") && j["key"] == key) {
        e.space = std::make_shared<const SectionSpace>(
            SectionSpace::from_parts(model, degree, parts_from_json(j.at("parts")), opts));
        e.hit = true;
      }
    }
    if (!e.space) {
      e.space = std::make_shared<const SectionSpace>(build_space(model, degree, opts));
      fs::create_directories(dir_);
      const fs::path tmp = file.string() + ".tmp";
      {
        std::ofstream out(tmp);
        out << json{{"key", key}, {"parts", space_parts_json(*e.space)}}.dump();
      }
      fs::rename(tmp, file);
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return e;
  }

 private:
  fs::path dir_;
};

// ---------------------------------------------------------------------------
// Runs.

struct RunRecord {
  std::string config_hash;
  std::string command;
  fs::path directory;
  std::map<std::string, double> timings;
  std::vector<std::string> files;
  std::vector<std::string> failures;
  json spaces = json::array();
  bool ok = true;

  json to_json() const {
    return {{"config_hash", config_hash}, {"command", command},   {"timings", timings}, {"files", files},
            {"failures", failures},       {"spaces", spaces},     {"ok", ok}};
  }
};

namespace detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

class Run {
 public:
  Run(const ExperimentConfig& cfg, std::string command) : cfg_(cfg) {
    rec_.config_hash = config_hash(cfg);
    rec_.command = std::move(command);
    rec_.directory = fs::path(cfg.output_dir) / rec_.config_hash;
    fs::create_directories(rec_.directory);
  }

  RunRecord& record() { return rec_; }
  const std::string& hash() const { return rec_.config_hash; }
  SpaceCache cache() const { return SpaceCache(fs::path(cfg_.output_dir) / "cache"); }

  void write_csv(const std::string& name, const std::string& header, const std::string& rows) {
    write(name, "# config_hash=" + hash() + "\n" + header + rows);
  }
  void write_json(const std::string& name, const json& body) {
    nlohmann::ordered_json out;
    out["config_hash"] = hash();
    for (auto it = body.begin(); it != body.end(); ++it) out[it.key()] = it.value();
    write(name, out.dump(2) + "\n");
  }
  void write_text(const std::string& name, const std::string& body) {
    write(name, "config_hash: " + hash() + "\n" + body);
  }
  void time(const std::string& stage) { rec_.timings[stage] += watch_.lap(); }

  void finish(bool ok) {
    rec_.ok = ok;
    std::ofstream out(rec_.directory / "manifest.json");
    out << rec_.to_json().dump(2) << "\n";
  }

 private:
  void write(const std::string& name, const std::string& content) {
    std::ofstream out(rec_.directory / name, std::ios::binary);
    out << content;
    if (!out) throw NumericalError("could not write " + (rec_.directory / name).string());
    rec_.files.push_back(name);
  }

  const ExperimentConfig& cfg_;
  RunRecord rec_;
  detail::Stopwatch watch_;
};

inline std::vector<TestForm> dictionary(const ExperimentConfig& c) { return make_dictionary(c.centers, c.radii); }

inline void cmd_equidistribute(const ExperimentConfig& cfg, Run& run) {
  const WeightModel model = cfg.model.build();
  const Region region = cfg.region.build(model.chart());
  const auto forms = dictionary(cfg);
  std::vector<double> predicted;
  for (const auto& f : forms) predicted.push_back(pair_predicted(model, f));
  run.time("predicted");
  const auto cache = run.cache();
  std::vector<DiscrepancyRecord> records;
  std::map<int, int> failed;
  for (int n : cfg.n_list) {
    const auto e = cache.get(cfg.model, n, cfg.space_options());
    run.record().spaces.push_back({{"N", n}, {"cache", e.hit ? "hit" : "miss"}, {"seconds", e.seconds}});
    run.time("spaces");
    ZeroExtractor extract;
    if (model.is_polynomial()) {
      RootOptions ro;
      const double tol = cfg.tol.root_residual;
      extract = [ro, tol](const RandomSection& s) {
        ZeroSet zs = poly_roots(s, ro);
        for (const auto& p : zs.points)
          if (p.multiplicity == 1 && p.residual > tol)
            throw NumericalError("root residual " + std::to_string(p.residual) + " above tolerance");
        return zs;
      };
    } else {
      auto opt = contour_options(*e.space, cfg.tol.contour);
      const int depth = cfg.grid_depth;
      extract = [region, depth, opt](const RandomSection& s) { return zero_set_hyperbolic(s, region, depth, opt); };
    }
    auto res = ensemble_discrepancy(e.space, forms, cfg.samples, cfg.master_seed, extract, cfg.workers, &predicted);
    records.insert(records.end(), res.records.begin(), res.records.end());
    failed[n] = static_cast<int>(res.failures.size());
    for (const auto& f : res.failures)
      run.record().failures.push_back("N=" + std::to_string(f.degree) + " sample " + std::to_string(f.sample_id) +
                                      ": " + f.message);
    run.time("ensemble");
  }
  run.write_csv("records.csv", records_csv_header(), records_csv_rows(records));

  const double power = cfg.lambda_power;
  const auto frac = exceptional_fraction(records, [power](int n) { return lambda_log_power(n, power); });
  json rj;
  std::ostringstream sum;
  sum << "command: equidistribute\nmodel: " << cfg.model.kind << "\nsamples per N: " << cfg.samples
      << "\ntest forms: " << forms.size() << "\n\n";
  sum << "N  median|disc|/C2  mean|disc|/C2  lambda_N/N  N*stat/logN  exceptional_fraction  failed\n";
  if (cfg.n_list.size() >= 3 && !records.empty()) {
    const RateFit fit = rate_fit(records);
    rj = rate_fit_json(fit);
    for (size_t i = 0; i < fit.degrees.size(); ++i) {
      const int n = fit.degrees[i];
      sum << n << "  " << detail::g6(fit.statistic[i]) << "  " << detail::g6(fit.mean[i]) << "  "
          << detail::g6(lambda_log_power(n, power) / n) << "  " << detail::g6(fit.normalized[i]) << "  "
          << detail::g6(frac.count(n) ? frac.at(n) : 0.0) << "  " << failed[n] << "\n";
    }
    sum << "\nlog-log slope of the median statistic: " << detail::g6(fit.slope)
        << " (lambda_N/N with lambda_N = (log N)^" << detail::g6(power) << " decays with local slope "
        << detail::g6((std::log(lambda_log_power(cfg.n_list.back(), power) / cfg.n_list.back()) -
                       std::log(lambda_log_power(cfg.n_list.front(), power) / cfg.n_list.front())) /
                      (std::log(cfg.n_list.back()) - std::log(cfg.n_list.front())))
        << ")\n";
  } else {
    rj["note"] = "rate fit needs at least 3 degrees";
    for (int n : cfg.n_list) {
      std::vector<double> v;
      for (const auto& r : records)
        if (r.degree == n) v.push_back(std::abs(r.discrepancy) / r.c2_norm);
      sum << n << "  " << (v.empty() ? std::string("-") : detail::g6(median(v))) << "  -  "
          << detail::g6(lambda_log_power(n, power) / n) << "  -  "
          << detail::g6(frac.count(n) ? frac.at(n) : 0.0) << "  " << failed[n] << "\n";
    }
  }
  json ef = json::object();
  for (const auto& [n, v] : frac) ef[std::to_string(n)] = v;
  rj["exceptional_fraction"] = ef;
  rj["lambda_power"] = power;
  run.write_json("ratefit.json", rj);
  run.write_text("summary.txt", sum.str());
  run.time("report");
}

inline void cmd_bergman(const ExperimentConfig& cfg, Run& run) {
  const WeightModel model = cfg.model.build();
  const auto cache = run.cache();
  std::vector<cplx> grid = cfg.bergman_grid, points = cfg.bergman_points;
  if (points.empty()) points = model.is_polynomial() ? std::vector<cplx>{0.0, 0.5, cplx(0.3, 0.4)} : std::vector<cplx>{cplx(0, 1), cplx(0.2, 1.5)};
  if (grid.empty()) grid = points;
  std::vector<SpacePtr> spaces;
  std::string rows;
  json trace = json::array(), pull = json::array(), fits = json::array();
  std::ostringstream sum;
  sum << "command: bergman\nmodel: " << cfg.model.kind << "\n\nN  d_N  trace_ratio\n";
  for (int n : cfg.n_list) {
    const auto e = cache.get(cfg.model, n, cfg.space_options());
    run.record().spaces.push_back({{"N", n}, {"cache", e.hit ? "hit" : "miss"}, {"seconds", e.seconds}});
    spaces.push_back(e.space);
    run.time("spaces");
    const auto prof = bergman_profile(e.space, grid);
    for (size_t i = 0; i < grid.size(); ++i)
      rows += std::to_string(n) + "," + detail::g17(grid[i].real()) + "," + detail::g17(grid[i].imag()) + "," +
              detail::g17(prof.values[i]) + "," + detail::g17(prof.log_values[i]) + "\n";
    const double ratio = trace_check(*e.space, cfg.tol.quad);
    trace.push_back({{"N", n}, {"d_N", e.space->dim()}, {"ratio", ratio}});
    sum << n << "  " << e.space->dim() << "  " << detail::g17(ratio) << "\n";
    for (const auto& z : points) {
      const auto p = fs_pullback_density(*e.space, z, cfg.fd_step);
      pull.push_back({{"N", n},
                      {"z", {z.real(), z.imag()}},
                      {"pullback", p.value},
                      {"pullback_2h", p.value_2h},
                      {"curvature", p.curvature},
                      {"N_deviation", n * p.deviation()},
                      {"N2_deviation", static_cast<double>(n) * n * p.deviation()},
                      {"flagged", p.flagged}});
    }
    run.time("bergman");
  }
  run.write_csv("bergman.csv", "N,re,im,P_N,logP_N\n", rows);
  sum << "\nleading coefficient b0 (fit P_N = b0 N + b1) vs curvature/base density\n";
  for (const auto& z : points) {
    const auto f = leading_coeff_fit(spaces, z);
    fits.push_back({{"z", {z.real(), z.imag()}},
                    {"b0", f.b0},
                    {"b1", f.b1},
                    {"predicted", f.predicted},
                    {"relative_error", f.relative_error()},
                    {"max_residual", f.max_residual}});
    sum << "z=(" << detail::g6(z.real()) << "," << detail::g6(z.imag()) << ")  b0=" << detail::g6(f.b0)
        << "  predicted=" << detail::g6(f.predicted) << "  rel.err=" << detail::g6(f.relative_error()) << "\n";
  }
  sum << "\npullback deviation |(1/N) Phi_N^* omega_FS - curvature| scaled by N and N^2\n";
  for (const auto& p : pull)
    sum << "N=" << p["N"].get<int>() << " z=(" << detail::g6(p["z"][0].get<double>()) << ","
        << detail::g6(p["z"][1].get<double>()) << ")  N*dev=" << detail::g6(p["N_deviation"].get<double>())
        << "  N^2*dev=" << detail::g6(p["N2_deviation"].get<double>()) << (p["flagged"].get<bool>() ? "  FLAGGED" : "")
        << "\n";
  run.write_json("bergman.json", {{"trace", trace}, {"leading_coefficient", fits}, {"pullback", pull}});
  run.write_text("summary.txt", sum.str());
  run.time("report");
}

inline void cmd_cuspforms(const ExperimentConfig& cfg, Run& run) {
  const WeightModel model = cfg.model.build();
  const Region region = cfg.region.build(model.chart());
  const double mass = predicted_mass(model, region);
  const double y_top = cfg.fundamental_height > 0.0 ? cfg.fundamental_height : 1.0 / model.cusp_height();
  run.time("predicted");
  const auto cache = run.cache();
  std::string rows;
  json per_n = json::array();
  std::ostringstream sum;
  sum << "command: cuspforms\nregion: [" << detail::g6(region.as_box().x0) << ", " << detail::g6(region.as_box().x1)
      << "] x [" << detail::g6(region.as_box().y0) << ", " << detail::g6(region.as_box().y1)
      << "]\npredicted mass (1/2pi) Vol(U): " << detail::g17(mass) << "\n\nN  d_N  mean count/N  |mean - predicted|  "
      << "max interior count  N-3  failed\n";
  for (int n : cfg.n_list) {
    const auto e = cache.get(cfg.model, n, cfg.space_options());
    run.record().spaces.push_back({{"N", n}, {"cache", e.hit ? "hit" : "miss"}, {"seconds", e.seconds}});
    run.time("spaces");
    const auto opt = contour_options(*e.space, cfg.tol.contour);
    std::vector<int> count(cfg.samples, -1), interior(cfg.samples, -1);
    std::vector<std::uint64_t> seeds(cfg.samples);
    std::vector<std::string> errors(cfg.samples);
    parallel_for(cfg.samples, cfg.workers, [&](int i) {
      seeds[i] = sample_seed(cfg.master_seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i));
      try {
        const auto s = sample_section(e.space, seeds[i]);
        count[i] = count_zeros_region(evaluator(s), region, cfg.grid_depth, opt);
        interior[i] = count_zeros_fundamental(s, y_top, opt);
      } catch (const NumericalError& err) {
        errors[i] = err.what();
      }
    });
    double total = 0.0;
    int ok = 0, worst = 0, failed = 0;
    for (int i = 0; i < cfg.samples; ++i) {
      if (!errors[i].empty()) {
        ++failed;
        run.record().failures.push_back("N=" + std::to_string(n) + " sample " + std::to_string(i) + ": " + errors[i]);
        continue;
      }
      rows += std::to_string(n) + "," + std::to_string(i) + "," + std::to_string(count[i]) + "," +
              detail::g17(static_cast<double>(count[i]) / n) + "," + detail::g17(mass) + "," +
              std::to_string(interior[i]) + "," + std::to_string(seeds[i]) + "\n";
      total += static_cast<double>(count[i]) / n;
      worst = std::max(worst, interior[i]);
      ++ok;
    }
    const double mean = ok ? total / ok : std::nan("");
    per_n.push_back({{"N", n},
                     {"d_N", e.space->dim()},
                     {"mean_count_over_N", mean},
                     {"abs_deviation", std::abs(mean - mass)},
                     {"max_interior_count", worst},
                     {"failed", failed}});
    sum << n << "  " << e.space->dim() << "  " << detail::g6(mean) << "  " << detail::g6(std::abs(mean - mass)) << "  "
        << worst << "  " << n - 3 << "  " << failed << "\n";
    run.time("zeros");
  }
  run.write_csv("records.csv", "N,sample_id,count,count_over_N,predicted_mass,interior_count,seed\n", rows);
  run.write_json("cuspforms.json", {{"predicted_mass", mass}, {"fundamental_height", y_top}, {"per_N", per_n}});
  run.write_text("summary.txt", sum.str());
  run.time("report");
}

/// Exit status of a full run: 0 success, 2 configuration error, 3 numerical failure.
inline int run_command(Command cmd, const ExperimentConfig& cfg, std::ostream& log) {
  try {
    validate(cfg, cmd);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return 2;
  }
  if (cmd == Command::kValidate) {
    log << config_hash(cfg) << "\n";
    return 0;
  }
  static const char* names[] = {"equidistribute", "bergman", "cuspforms", "validate-config"};
  Run run(cfg, names[static_cast<int>(cmd)]);
  try {
    switch (cmd) {
      case Command::kEquidistribute: cmd_equidistribute(cfg, run); break;
      case Command::kBergman: cmd_bergman(cfg, run); break;
      case Command::kCuspforms: cmd_cuspforms(cfg, run); break;
      case Command::kValidate: break;
    }
  } catch (const std::exception& e) {
    run.record().failures.push_back(e.what());
    run.finish(false);
    log << "run failed: " << e.what() << "\n";
    return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ? 2 : 3;
  }
  run.finish(true);
  log << (fs::path(cfg.output_dir) / run.hash()).string() << "\n";
  return 0;
}

}  // namespace zeq::harness
