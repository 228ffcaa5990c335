#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coolgp/agent.hpp"
#include "coolgp/fusion.hpp"

namespace coolgp {

enum class TopologyKind { line, star, random_tree, custom };

TopologyKind parse_topology_kind(const std::string& name);
std::string to_string(TopologyKind kind);

/// Settings shared by every agent in a simulation.
struct AgentTemplate {
  Eigen::Index vocab_size = 50;
  std::size_t bank_size = 10;
  Eigen::Index input_dim = 2;
  /// Dimension of the standardized domain; 0 means "same as input_dim".
  Eigen::Index standardized_dim = 0;
  double signal_scale = 1.0;
  double noise_std = 0.1;
  double jitter = kDefaultJitter;
  LearnConfig learn;
  /// All agents share one projection bank, drawn up front like the vocabulary.
  /// When false each agent draws its own.
  bool shared_bank = true;

  Eigen::Index latent_dim() const { return standardized_dim > 0 ? standardized_dim : input_dim; }
  void validate() const;
};

struct SimConfig {
  std::size_t n_agents = 2;
  TopologyKind topology_kind = TopologyKind::line;
  /// Used when topology_kind is custom; reduced to a spanning tree if cyclic.
  std::optional<Topology> custom_topology;
  double loss_rate = 0.0;
  /// Batches between fusion sweeps (and metric checkpoints).
  std::size_t fusion_period = 10;
  std::uint64_t seed = 0;
  AgentTemplate agent;
  /// Explicit block-to-agent assignment; unset means uniform random dispatch.
  std::optional<std::vector<std::size_t>> assignment;
  /// Stop recording after this many checkpoints; unset means no limit.
  std::optional<std::size_t> max_checkpoints;
  /// Fill wall_ms with measured ingest time. Off by default so that traces
  /// are bit-identical across runs.
  bool record_timing = false;
  /// Optional outputs: binary records of every delivered message, and a
  /// comma-separated log of every transmission attempt.
  std::filesystem::path message_trace;
  std::filesystem::path delivery_log;

  void validate() const;
};

struct CheckpointRecord {
  std::size_t batch_index = 0;
  std::size_t agent_id = 0;
  double rmse_pre = 0.0;
  double rmse_post = 0.0;
  double ess = 0.0;
  double wall_ms = 0.0;
};

struct SimTrace {
  std::vector<CheckpointRecord> records;
};

/// Uniform i.i.d. assignment of `n_blocks` blocks to `n_agents` agents.
std::vector<std::size_t> dispatch_stream(std::size_t n_blocks, std::size_t n_agents, std::uint64_t seed);

/// Builds the communication tree for a config (spanning tree if needed).
Topology build_topology(const SimConfig& config);

/// Shared vocabulary for a simulation seed.
std::shared_ptr<const StandardizedVocabulary> build_vocabulary(const AgentTemplate& tmpl,
                                                               std::uint64_t seed);

/// Agents 0..n-1 with per-agent bank and gradient sub-streams.
std::vector<Agent> build_agents(const AgentTemplate& tmpl, std::size_t n_agents,
                                std::shared_ptr<const StandardizedVocabulary> vocab,
                                std::uint64_t seed);

struct Delivery {
  std::uint64_t round = 0;
  AgentId from = 0;
  AgentId to = 0;
  bool delivered = true;
};

struct SweepOptions {
  /// Overrides the round budget (diameter lossless, twice that under loss).
  std::optional<std::size_t> rounds;
  /// When set, every delivered message is appended as a binary record.
  std::ostream* trace = nullptr;
};

struct SweepResult {
  std::vector<Assembly> assemblies;
  std::vector<Delivery> log;
  std::size_t rounds = 0;
};

/// Synchronous message passing on a tree. Each directed message is dropped
/// independently with probability `loss_rate`; a receiver keeps the latest
/// message it got from each neighbour, so a loss delays information rather
/// than destroying it.
SweepResult run_fusion_sweep(std::span<const NaturalRepresentation> reps,
                             const NaturalRepresentation& prior, const Topology& topology,
                             double loss_rate, std::uint64_t seed, const SweepOptions& options = {});

struct CentralResult {
  NaturalRepresentation rep;
  std::vector<bool> survived;
  std::size_t survivors = 0;
};

/// Every agent uploads once to a server; dropped uploads are lost for good.
/// With no survivors the server returns the prior.
CentralResult centralized_baseline(std::span<const NaturalRepresentation> reps,
                                   const NaturalRepresentation& prior, double loss_rate,
                                   std::uint64_t seed);

/// Dispatch, ingest, periodic fusion, and pre/post RMSE at each checkpoint.
/// Checkpoints fall on multiples of fusion_period and on the final batch; a
/// run with no batches records one checkpoint at batch 0.
SimTrace run_experiment(const SimConfig& config, std::span<const Block> stream, const Block& test);

void write_metrics(const SimTrace& trace, const std::filesystem::path& path);

struct LossSweepRow {
  double loss_rate = 0.0;
  std::string system;
  std::uint64_t seed = 0;
  double rmse_post = 0.0;
  /// Fraction of agents whose assembly saw every neighbour (decentralized) or
  /// fraction of uploads that survived (centralized).
  double completeness = 1.0;
};

/// Trains one population per call, then at every checkpoint fuses it both
/// ways for every loss rate. Reported RMSE is averaged over agents and
/// checkpoints.
std::vector<LossSweepRow> run_loss_sweep(const SimConfig& config, std::span<const Block> stream,
                                         const Block& test, std::span<const double> loss_rates);

void write_loss_sweep(std::span<const LossSweepRow> rows, const std::filesystem::path& path);

struct DisparityResult {
  double frozen_pre = 0.0;
  double frozen_post = 0.0;
  double active_pre = 0.0;
  double active_post = 0.0;
};

/// Two agents: the first ingests `frozen_blocks` blocks and stops, the second
/// ingests the following `active_blocks`. Both then fuse losslessly.
DisparityResult run_disparity(const SimConfig& config, std::span<const Block> stream,
                              const Block& test, std::size_t frozen_blocks,
                              std::size_t active_blocks);

}  // namespace coolgp
