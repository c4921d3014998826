#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "zeq/harness.hpp"

using namespace zeq;
using namespace zeq::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("zeq_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig smoke_config(const fs::path& out) {
  ExperimentConfig c;
  c.n_list = {10};
  c.samples = 2;
  c.master_seed = 5;
  c.output_dir = out.string();
  return c;
}

int run_quiet(Command cmd, const ExperimentConfig& c) {
  std::ostringstream log;
  return run_command(cmd, c, log);
}

int cli(const std::string& args) {
  const std::string line = std::string(ZEQLAB_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(line.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.model.kind = "POINCARE_WEIGHTED";
  c.model.epsilon = 0.03;
  c.n_list = {5, 9, 30};
  c.samples = 17;
  c.master_seed = 18446744073709551615ULL;
  c.region = {"box", {-1.0, 1.0, -0.5, 2.0}};
  c.centers = {cplx(0.1, -0.2), cplx(0.0, 0.3)};
  c.radii = {0.1, 0.25};
  c.tol.quad = 3e-11;
  c.bergman_points = {cplx(0.5, 0.5)};
  c.workers = 3;
  const auto j = to_json(c);
  const auto back = from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.master_seed, c.master_seed);
  EXPECT_EQ(back.centers, c.centers);
  EXPECT_EQ(from_json(json::parse(j.dump())).tol.quad, 3e-11);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(from_json(json{{"sample", 3}}), ConfigError);
  EXPECT_THROW(from_json(json{{"tolerances", {{"quadrature", 1e-9}}}}), ConfigError);
  EXPECT_THROW(from_json(json{{"samples", "many"}}), ConfigError);
  EXPECT_THROW(from_json(json::array()), ConfigError);
}

TEST(Config, DotPathOverrides) {
  json j = json::object();
  apply_override(j, "tolerances.quad=1e-9");
  apply_override(j, "model.kind=HYPERBOLIC_GAMMA2");
  apply_override(j, "N_list=[3,4,5]");
  const auto c = from_json(j);
  EXPECT_EQ(c.tol.quad, 1e-9);
  EXPECT_EQ(c.model.kind, "HYPERBOLIC_GAMMA2");
  EXPECT_EQ(c.n_list, (std::vector<int>{3, 4, 5}));
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
  apply_override(j, "samples=3");
  EXPECT_THROW(apply_override(j, "samples.x=1"), ConfigError);
}

TEST(Config, HashTracksNumericalSettingsOnly) {
  ExperimentConfig c;
  const std::string h = config_hash(c);
  EXPECT_EQ(h.size(), 16u);
  for (double* t : {&c.tol.quad, &c.tol.root_residual, &c.tol.q_tail, &c.tol.contour, &c.tol.eval}) {
    const double old = *t;
    *t = old * 0.5;
    EXPECT_NE(config_hash(c), h);
    *t = old;
  }
  c.workers = 8;
  c.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(c), h);
  c.master_seed = 1;
  EXPECT_NE(config_hash(c), h);
}

TEST(Config, FnvReferenceValue) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hex16(fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(Validate, RejectsBadConfigs) {
  ExperimentConfig c;
  c.samples = 0;
  EXPECT_THROW(validate(c, Command::kEquidistribute), ConfigError);
  c = {};
  c.n_list = {10, 5};
  EXPECT_THROW(validate(c, Command::kEquidistribute), ConfigError);
  c = {};
  c.tol.quad = 0.0;
  EXPECT_THROW(validate(c, Command::kEquidistribute), ConfigError);
  c = {};
  c.n_list = {10, 20};
  EXPECT_THROW(validate(c, Command::kBergman), ConfigError);
  c = {};
  c.model.kind = "HYPERBOLIC_GAMMA2";
  c.n_list = {4};
  c.region = {"box", {-0.5, 0.5, 0.1, 1.5}};
  EXPECT_THROW(validate(c, Command::kCuspforms), ConfigError);
  c.region = {"box", {-0.5, 0.5, 0.4, 1.5}};
  EXPECT_NO_THROW(validate(c, Command::kCuspforms));
  c.model.kind = "FUBINI_STUDY";
  EXPECT_THROW(validate(c, Command::kCuspforms), ConfigError);
  c = {};
  c.model.kind = "NOPE";
  EXPECT_THROW(validate(c, Command::kEquidistribute), ConfigError);
  c = {};
  c.region = {"box", {-0.2, 0.2, -0.2, 0.2}};
  EXPECT_THROW(validate(c, Command::kEquidistribute), ConfigError);
}

TEST(Run, EquidistributeSmoke) {
  const auto dir = scratch("smoke");
  const auto c = smoke_config(dir);
  ASSERT_EQ(run_quiet(Command::kEquidistribute, c), 0);
  const fs::path run = dir / config_hash(c);
  const json m = json::parse(slurp(run / "manifest.json"));
  EXPECT_TRUE(m["ok"].get<bool>());
  ASSERT_EQ(m["files"].size(), 3u);
  for (const auto& f : m["files"]) {
    const std::string body = slurp(run / f.get<std::string>());
    ASSERT_FALSE(body.empty()) << f;
    // First line for CSV and text, first key for JSON.
    const auto head = body.substr(0, body.find('\n', body.find('\n') + 1));
    EXPECT_NE(head.find(config_hash(c)), std::string::npos) << f;
  }
  const std::string csv = slurp(run / "records.csv");
  EXPECT_NE(csv.find("\nmodel,N,sample_id"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 2);
}

TEST(Run, MissingSamplesIsConfigError) {
  auto c = smoke_config(scratch("m0"));
  c.samples = 0;
  EXPECT_EQ(run_quiet(Command::kEquidistribute, c), 2);
}

TEST(Run, ByteIdenticalAcrossRerunsAndWorkerCounts) {
  const auto dir = scratch("determinism");
  auto c = smoke_config(dir);
  c.model.kind = "POINCARE_WEIGHTED";
  c.n_list = {8, 16, 32};
  c.samples = 6;
  c.centers = {cplx(0.0), cplx(0.5, 0.2)};
  c.radii = {0.4, 0.8};
  ASSERT_EQ(run_quiet(Command::kEquidistribute, c), 0);
  const fs::path run = dir / config_hash(c);
  const std::string first = slurp(run / "records.csv"), fit = slurp(run / "ratefit.json");
  c.workers = 3;
  ASSERT_EQ(run_quiet(Command::kEquidistribute, c), 0);
  EXPECT_EQ(slurp(run / "records.csv"), first);
  EXPECT_EQ(slurp(run / "ratefit.json"), fit);
  const json m = json::parse(slurp(run / "manifest.json"));
  for (const auto& s : m["spaces"]) EXPECT_EQ(s["cache"], "hit");
}

TEST(Run, NumericalFailureWritesPartialManifest) {
  const auto dir = scratch("numfail");
  auto c = smoke_config(dir);
  c.tol.quad = 1e-300;
  EXPECT_EQ(run_quiet(Command::kEquidistribute, c), 3);
  const json m = json::parse(slurp(dir / config_hash(c) / "manifest.json"));
  EXPECT_FALSE(m["ok"].get<bool>());
  EXPECT_FALSE(m["failures"].empty());
}

TEST(Run, BergmanSmoke) {
  const auto dir = scratch("bergman");
  auto c = smoke_config(dir);
  c.n_list = {3, 5, 8};
  ASSERT_EQ(run_quiet(Command::kBergman, c), 0);
  const fs::path run = dir / config_hash(c);
  const json b = json::parse(slurp(run / "bergman.json"));
  for (const auto& t : b["trace"]) EXPECT_NEAR(t["ratio"].get<double>(), 1.0, 1e-8);
  for (const auto& f : b["leading_coefficient"]) EXPECT_NEAR(f["b0"].get<double>(), 1.0, 1e-8);
  EXPECT_TRUE(fs::exists(run / "bergman.csv"));
  EXPECT_TRUE(fs::exists(run / "summary.txt"));
}

TEST(Run, CuspformsSmokeAndCacheHit) {
  const auto dir = scratch("cusp");
  auto c = smoke_config(dir);
  c.model.kind = "HYPERBOLIC_GAMMA2";
  c.n_list = {4};
  c.samples = 1;
  c.region = {"box", {-0.5, 0.5, 0.4, 1.5}};
  ASSERT_EQ(run_quiet(Command::kCuspforms, c), 0);
  const fs::path run = dir / config_hash(c);
  EXPECT_EQ(json::parse(slurp(run / "manifest.json"))["spaces"][0]["cache"], "miss");
  ASSERT_EQ(run_quiet(Command::kCuspforms, c), 0);
  const json m = json::parse(slurp(run / "manifest.json"));
  EXPECT_EQ(m["spaces"][0]["cache"], "hit");
  const json r = json::parse(slurp(run / "cuspforms.json"));
  EXPECT_LE(r["per_N"][0]["max_interior_count"].get<int>(), 1);
}

TEST(Cli, ExitStatuses) {
  const auto dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(cli("validate-config --set N_list=[10] --set samples=2" + out), 0);
  EXPECT_EQ(cli("validate-config --set samples=0" + out), 2);
  EXPECT_EQ(cli("validate-config --set bogus=1" + out), 2);
  EXPECT_EQ(cli("validate-config --config /nonexistent/config.json"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("equidistribute --set N_list=[10] --set samples=2 --workers 2 --seed 3" + out), 0);
  EXPECT_EQ(cli("equidistribute --set N_list=[10] --set tolerances.quad=1e-300" + out), 3);
}

TEST(Cli, ConfigFileAndFlagsOverride) {
  const auto dir = scratch("cli_file");
  const fs::path cfg = dir / "c.json";
  std::ofstream(cfg) << R"({"N_list": [10], "samples": 2, "master_seed": 1})";
  EXPECT_EQ(cli("equidistribute --config " + cfg.string() + " --seed 9 --out " + dir.string()), 0);
  ExperimentConfig c;
  c.n_list = {10};
  c.samples = 2;
  c.master_seed = 9;
  EXPECT_TRUE(fs::exists(dir / config_hash(c) / "records.csv"));
}
