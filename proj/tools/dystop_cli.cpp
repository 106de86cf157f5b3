// dystop: run a single experiment or sweep one parameter axis.
//
//   dystop run <config> [--seed N] [--policy P] [--out DIR]
//   dystop sweep <config> --axis NAME --values a,b,c [--seed N] [--policy P] [--out DIR]
//
// Exit codes: 0 ok, 1 configuration error, 2 run aborted.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dystop/config.hpp"
#include "dystop/metrics.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitAbort = 2;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy;
  std::string out = "out";
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("config", a.config_path, "experiment config file (key = value)")->required();
  cmd->add_option("--seed", a.seed, "override the config seed");
  cmd->add_option("--policy", a.policy, "dystop | sync_gossip | push_all");
  cmd->add_option("--out", a.out, "output directory")->capture_default_str();
}

dystop::ExperimentConfig resolve(const CommonArgs& a) {
  auto cfg = dystop::load_config(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (a.policy) dystop::set_value(cfg, "policy", *a.policy);
  dystop::validate(cfg);
  return cfg;
}

void report(const dystop::RunSummary& s) {
  std::cout << s.label << ": policy=" << s.policy << " seed=" << s.seed << " rounds=" << s.rounds
            << " converged=" << (s.converged ? "yes" : "no") << " time=" << dystop::format_double(s.completion_time)
            << " bandwidth_bits=" << dystop::format_double(s.total_bandwidth_bits)
            << " mean_staleness=" << dystop::format_double(s.mean_staleness) << '\n';
}

int abort_status(const std::vector<dystop::RunOutcome>& outcomes) {
  int rc = kExitOk;
  for (const auto& o : outcomes) {
    if (o.log.aborted) {
      std::cerr << "run " << o.summary.label << " aborted: " << o.log.abort_reason << '\n';
      rc = kExitAbort;
    }
  }
  return rc;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous decentralized federated learning simulator"};
  app.require_subcommand(1);

  CommonArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common(run_cmd, run_args);

  CommonArgs sweep_args;
  std::string axis;
  std::vector<std::string> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment per value of a parameter");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--axis", axis, "tau_bound | V | s | phi")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) {
      const auto cfg = resolve(run_args);
      auto outcome = dystop::run_to_directory(cfg, run_args.out);
      for (const auto& w : outcome.log.warnings) std::cerr << "warning: " << w << '\n';
      report(outcome.summary);
      std::vector<dystop::RunOutcome> all;
      all.push_back(std::move(outcome));
      return abort_status(all);
    }
    const auto cfg = resolve(sweep_args);
    auto outcomes = dystop::sweep_to_directory(cfg, axis, values, sweep_args.out);
    for (const auto& o : outcomes) report(o.summary);
    return abort_status(outcomes);
  } catch (const dystop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAbort;
  }
}
