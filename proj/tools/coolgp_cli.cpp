#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coolgp/errors.hpp"
#include "coolgp/harness.hpp"

namespace {

// Command-line flag -> settings key.
const std::map<std::string, std::string> kFlagKeys = {
    {"seed", "seed"},
    {"out", "out"},
    {"config", "config"},
    {"threads", "threads"},
    {"vocab-size", "vocab_size"},
    {"bank-size", "bank_size"},
    {"agents", "agents"},
    {"loss-rate", "loss_rate"},
    {"fusion-period", "fusion_period"},
    {"topology", "topology"},
    {"dim", "dim"},
    {"batches", "blocks_per_stream"},
    {"block-size", "block_size"},
    {"n-test", "n_test"},
    {"max-checkpoints", "max_checkpoints"},
    {"data", "data"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collective online Gaussian-process learning: data generation, simulations and checks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::map<std::string, std::string> flag_values;
  for (const auto& [flag, key] : kFlagKeys) app.add_option("--" + flag, flag_values[flag], "sets '" + key + "'");
  std::vector<std::string> overrides;
  app.add_option("--set", overrides, "any setting as key=value (repeatable)");

  auto* gen = app.add_subcommand("gen", "generate the two synthetic streams and a test set");
  auto* two = app.add_subcommand("two-agent", "two agents, periodic fusion, pre/post RMSE per checkpoint");
  auto* net = app.add_subcommand("network", "many agents on a tree with optional transmission loss");
  auto* sweep = app.add_subcommand("loss-sweep", "decentralized vs centralized fusion across loss rates");
  auto* ver = app.add_subcommand("verify", "run a named check suite");
  std::string suite;
  ver->add_option("suite", suite, "lemma1-scaling | theorem1-scaling | unbiasedness | gradcheck | consensus")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    coolgp::KeyValues flags;
    for (const auto& [flag, key] : kFlagKeys)
      if (app.count("--" + flag) > 0) flags[key] = flag_values[flag];
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw coolgp::ConfigError("--set expects key=value, got '" + item + "'");
      flags[item.substr(0, eq)] = item.substr(eq + 1);
    }
    const coolgp::KeyValues settings = coolgp::harness::resolve_settings(flags);

    namespace h = coolgp::harness;
    if (*gen) return h::cmd_gen(settings, std::cout);
    if (*two) return h::cmd_two_agent(settings, std::cout);
    if (*net) return h::cmd_network(settings, std::cout);
    if (*sweep) return h::cmd_loss_sweep(settings, std::cout);
    if (*ver) return h::cmd_verify(settings, suite, std::cout);
  } catch (const coolgp::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const coolgp::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
