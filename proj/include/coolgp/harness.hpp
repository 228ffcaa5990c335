#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "coolgp/config.hpp"
#include "coolgp/netsim.hpp"
#include "coolgp/synthetic.hpp"

namespace coolgp::harness {

/// Every recognised setting with its built-in default.
const KeyValues& default_settings();

/// defaults <- config file named by flags["config"] (if any) <- flags.
/// Unknown keys are rejected with ConfigError.
KeyValues resolve_settings(const KeyValues& flags);

SyntheticSpec synthetic_spec(const KeyValues& settings);
SimConfig sim_config(const KeyValues& settings);

/// Dataset files written by `gen` and read by the experiment commands.
struct DatasetPaths {
  std::filesystem::path stream1, stream2, test;
  static DatasetPaths in(const std::filesystem::path& dir);
};

struct Dataset {
  std::vector<Block> stream1, stream2;
  Block test;
};

/// Throws ConfigError naming the first missing file.
Dataset load_dataset(const std::filesystem::path& dir);

/// Both streams interleaved in a seeded random order. `domain[i]` is 0 for a
/// block from stream 1 and 1 for stream 2.
struct PooledStream {
  std::vector<Block> blocks;
  std::vector<std::size_t> domain;
};
PooledStream pool_streams(const std::vector<Block>& stream1, const std::vector<Block>& stream2,
                          std::uint64_t seed);

/// Command entry points. Each writes its outputs and a `<command>.manifest`
/// into settings["out"], prints a short summary to `log`, and returns the
/// process exit status.
int cmd_gen(const KeyValues& settings, std::ostream& log);
int cmd_two_agent(const KeyValues& settings, std::ostream& log);
int cmd_network(const KeyValues& settings, std::ostream& log);
int cmd_loss_sweep(const KeyValues& settings, std::ostream& log);
int cmd_verify(const KeyValues& settings, const std::string& suite, std::ostream& log);

}  // namespace coolgp::harness
