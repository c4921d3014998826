#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zeq/harness.hpp"

namespace {

using zeq::harness::Command;

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

zeq::harness::ExperimentConfig load(const Flags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw zeq::ConfigError("cannot open config file " + f.config);
    j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw zeq::ConfigError("config file is not valid JSON: " + f.config);
  }
  for (const auto& s : f.sets) zeq::harness::apply_override(j, s);
  auto cfg = zeq::harness::from_json(j);
  if (f.workers) cfg.workers = *f.workers;
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.out) cfg.output_dir = *f.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random holomorphic sections: zero statistics, Bergman kernels, cusp forms"};
  app.require_subcommand(1);
  Flags flags;
  Command cmd = Command::kValidate;
  const std::vector<std::pair<const char*, Command>> subs{{"equidistribute", Command::kEquidistribute},
                                                          {"bergman", Command::kBergman},
                                                          {"cuspforms", Command::kCuspforms},
                                                          {"validate-config", Command::kValidate}};
  for (const auto& [name, c] : subs) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", flags.config, "experiment config (JSON)");
    sub->add_option("--set", flags.sets, "override a config key, e.g. --set tolerances.quad=1e-9")->take_all();
    sub->add_option("--workers", flags.workers, "worker threads");
    sub->add_option("--seed", flags.seed, "master seed");
    sub->add_option("--out", flags.out, "output directory");
    sub->callback([&cmd, c = c] { cmd = c; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  zeq::harness::ExperimentConfig cfg;
  try {
    cfg = load(flags);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (cmd == Command::kValidate) {
    const int rc = zeq::harness::run_command(cmd, cfg, std::cerr);
    if (rc == 0) std::cout << zeq::harness::config_hash(cfg) << "\n" << zeq::harness::to_json(cfg).dump(2) << "\n";
    return rc;
  }
  return zeq::harness::run_command(cmd, cfg, std::cerr);
}
