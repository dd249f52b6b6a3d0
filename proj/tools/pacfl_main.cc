// Command-line front end for the pacfl experiment runner.
//
// Exit status: 0 on success, 1 on runtime failure, 2 on configuration or
// usage errors.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pacfl/errors.h"
#include "pacfl/experiment.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

using Command = std::function<int(const pacfl::ExperimentConfig&, std::ostream&)>;

std::optional<int> threads_from_env() {
  const char* raw = std::getenv("PACFL_THREADS");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const int n = std::stoi(raw, &used);
    if (used != std::string(raw).size() || n < 0) throw std::invalid_argument(raw);
    return n;
  } catch (const std::exception&) {
    throw pacfl::ConfigError(std::string("PACFL_THREADS: '") + raw +
                             "' is not a nonnegative integer");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered federated learning simulator driven by INI configs"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output;
  app.add_option("--config", config_path, "Experiment configuration (INI)")->required();
  app.add_option("--seed", seed, "Overrides [experiment] seed");
  app.add_option("--output", output, "Overrides [experiment] output directory");

  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"partition", {"Partition the data and write shard manifests", pacfl::cmd_partition}},
      {"signature", {"Compute client subspace signatures", pacfl::cmd_signature}},
      {"cluster", {"Build the proximity matrix and cluster clients", pacfl::cmd_cluster}},
      {"train", {"Run the federation and save its state", pacfl::cmd_train}},
      {"sweep-beta", {"Re-cluster and train for every beta in [sweep]", pacfl::cmd_sweep_beta}},
      {"newcomer", {"Place held-out clients into a saved federation", pacfl::cmd_newcomer}},
      {"consistency-report",
       {"Check distance orderings on Gaussian pairs", pacfl::cmd_consistency_report}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : kExitConfig;
  }

  try {
    auto cfg = pacfl::load_config(config_path);
    if (seed) cfg.set_seed(*seed);
    if (!output.empty()) cfg.output_dir = output;
    if (auto threads = threads_from_env()) cfg.train.threads = *threads;
    cfg.validate();
    const auto& name = app.get_subcommands().front()->get_name();
    return commands.at(name).second(cfg, std::cout);
  } catch (const pacfl::ConfigError& e) {
    std::cerr << "pacfl: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "pacfl: " << e.what() << '\n';
    return kExitRuntime;
  }
}
