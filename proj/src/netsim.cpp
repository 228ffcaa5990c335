#include "coolgp/netsim.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include "coolgp/errors.hpp"
#include "coolgp/rng.hpp"

namespace coolgp {

namespace {

using Clock = std::chrono::steady_clock;

void check_dims(const SimConfig& config, std::span<const Block> stream, const Block& test) {
  const Eigen::Index d = config.agent.input_dim;
  for (std::size_t i = 0; i < stream.size(); ++i)
    if (stream[i].dim() != d)
      throw ConfigError("stream block " + std::to_string(i) + " has dimension " +
                        std::to_string(stream[i].dim()) + " but agents expect " + std::to_string(d));
  if (test.dim() != d)
    throw ConfigError("test set has dimension " + std::to_string(test.dim()) + " but agents expect " +
                      std::to_string(d));
  if (test.size() == 0) throw ConfigError("test set is empty");
}

std::vector<std::size_t> resolve_assignment(const SimConfig& config, std::size_t n_blocks) {
  if (!config.assignment)
    return dispatch_stream(n_blocks, config.n_agents, substream_seed(config.seed, "dispatch"));
  const auto& a = *config.assignment;
  if (a.size() != n_blocks)
    throw ConfigError("assignment covers " + std::to_string(a.size()) + " blocks, stream has " +
                      std::to_string(n_blocks));
  for (std::size_t id : a)
    if (id >= config.n_agents) throw ConfigError("assignment names missing agent " + std::to_string(id));
  return a;
}

std::vector<NaturalRepresentation> snapshot(const std::vector<Agent>& agents) {
  std::vector<NaturalRepresentation> reps;
  reps.reserve(agents.size());
  for (const auto& a : agents) reps.push_back(a.rep());
  return reps;
}

double post_rmse(const Agent& agent, const Block& test) {
  return rmse(agent.predict(test.inputs, true).mean, test.targets);
}

// Checkpoints at multiples of the period and at the last batch; batch 0 alone
// when there is nothing to stream.
std::vector<std::size_t> checkpoint_batches(std::size_t n_blocks, std::size_t period,
                                            std::optional<std::size_t> limit) {
  std::vector<std::size_t> out;
  if (n_blocks == 0) out.push_back(0);
  for (std::size_t b = 1; b <= n_blocks; ++b)
    if (b % period == 0 || b == n_blocks) out.push_back(b);
  if (limit && out.size() > *limit) out.resize(*limit);
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TopologyKind parse_topology_kind(const std::string& name) {
  if (name == "line") return TopologyKind::line;
  if (name == "star") return TopologyKind::star;
  if (name == "random-tree") return TopologyKind::random_tree;
  if (name == "custom") return TopologyKind::custom;
  throw ConfigError("unknown topology '" + name + "' (expected line, star, random-tree or custom)");
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::line: return "line";
    case TopologyKind::star: return "star";
    case TopologyKind::random_tree: return "random-tree";
    case TopologyKind::custom: return "custom";
  }
  return "unknown";
}

void AgentTemplate::validate() const {
  if (vocab_size < 1) throw ConfigError("vocabulary size must be >= 1");
  if (bank_size < 1) throw ConfigError("bank size must be >= 1");
  if (input_dim < 1) throw ConfigError("input dimension must be >= 1");
  if (standardized_dim < 0) throw ConfigError("standardized dimension must be >= 0");
  if (!(signal_scale > 0.0) || !(noise_std > 0.0))
    throw ConfigError("signal scale and noise std must be positive");
  if (!(jitter > 0.0)) throw ConfigError("jitter must be positive");
  try {
    learn.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void SimConfig::validate() const {
  if (n_agents < 1) throw ConfigError("need at least one agent");
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) throw ConfigError("loss rate must lie in [0, 1)");
  if (fusion_period < 1) throw ConfigError("fusion period must be >= 1");
  if (topology_kind == TopologyKind::custom && !custom_topology)
    throw ConfigError("custom topology selected but none supplied");
  if (custom_topology && custom_topology->size() != n_agents)
    throw ConfigError("custom topology size does not match the agent count");
  agent.validate();
}

std::vector<std::size_t> dispatch_stream(std::size_t n_blocks, std::size_t n_agents,
                                         std::uint64_t seed) {
  if (n_agents < 1) throw ContractViolation("dispatch needs at least one agent");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_agents - 1);
  std::vector<std::size_t> out(n_blocks);
  for (auto& a : out) a = pick(rng);
  return out;
}

Topology build_topology(const SimConfig& config) {
  switch (config.topology_kind) {
    case TopologyKind::line: return Topology::line(config.n_agents);
    case TopologyKind::star: return Topology::star(config.n_agents);
    case TopologyKind::random_tree:
      return Topology::random_tree(config.n_agents, substream_seed(config.seed, "topology"));
    case TopologyKind::custom: {
      if (!config.custom_topology) throw ConfigError("custom topology selected but none supplied");
      const Topology& g = *config.custom_topology;
      return g.is_tree() ? g : spanning_tree(g, {});
    }
  }
  throw ConfigError("unhandled topology kind");
}

std::shared_ptr<const StandardizedVocabulary> build_vocabulary(const AgentTemplate& tmpl,
                                                               std::uint64_t seed) {
  return std::make_shared<const StandardizedVocabulary>(StandardizedVocabulary::sample(
      tmpl.vocab_size, tmpl.latent_dim(), substream_seed(seed, "vocab"), tmpl.jitter));
}

std::vector<Agent> build_agents(const AgentTemplate& tmpl, std::size_t n_agents,
                                std::shared_ptr<const StandardizedVocabulary> vocab,
                                std::uint64_t seed) {
  std::vector<Agent> agents;
  agents.reserve(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    AgentConfig cfg;
    cfg.input_dim = tmpl.input_dim;
    cfg.signal_scale = tmpl.signal_scale;
    cfg.noise_std = tmpl.noise_std;
    cfg.bank_size = tmpl.bank_size;
    cfg.bank_seed = substream_seed(seed, "bank", tmpl.shared_bank ? 0 : i);
    cfg.grad_seed = substream_seed(seed, "gradient", i);
    cfg.learn = tmpl.learn;
    agents.emplace_back(i, vocab, std::move(cfg));
  }
  return agents;
}

SweepResult run_fusion_sweep(std::span<const NaturalRepresentation> reps,
                             const NaturalRepresentation& prior, const Topology& topology,
                             double loss_rate, std::uint64_t seed, const SweepOptions& options) {
  const std::size_t n = reps.size();
  if (n != topology.size())
    throw ContractViolation("fusion sweep got " + std::to_string(n) + " representations for " +
                            std::to_string(topology.size()) + " nodes");
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) throw ContractViolation("loss rate must lie in [0, 1)");
  const std::size_t diameter = topology.diameter();

  SweepResult result;
  result.rounds = options.rounds.value_or(loss_rate > 0.0 ? 2 * diameter : diameter);
  Rng rng(seed);
  std::bernoulli_distribution dropped(loss_rate);

  // Latest message received from each neighbour.
  std::vector<std::map<AgentId, FusionMessage>> mailbox(n);
  auto inbox_of = [&](AgentId i) {
    std::vector<FusionMessage> inbox;
    inbox.reserve(mailbox[i].size());
    for (const auto& [from, msg] : mailbox[i]) inbox.push_back(msg);
    return inbox;
  };

  for (std::size_t round = 0; round < result.rounds; ++round) {
    std::vector<FusionMessage> outgoing;
    for (AgentId i = 0; i < n; ++i) {
      auto out = round == 0 ? init_messages(i, reps[i], topology)
                            : step_messages(i, reps[i], prior, topology, inbox_of(i), round - 1);
      for (auto& msg : out) outgoing.push_back(std::move(msg));
    }
    // Synchronous barrier: deliveries only become visible next round.
    for (auto& msg : outgoing) {
      const bool ok = loss_rate == 0.0 || !dropped(rng);
      result.log.push_back({round, msg.from, msg.to, ok});
      if (!ok) continue;
      if (options.trace) write_message(*options.trace, msg);
      const AgentId to = msg.to;
      const AgentId from = msg.from;
      mailbox[to].insert_or_assign(from, std::move(msg));
    }
  }

  result.assemblies.reserve(n);
  for (AgentId i = 0; i < n; ++i)
    result.assemblies.push_back(assemble_global(i, reps[i], prior, topology, inbox_of(i)));
  return result;
}

CentralResult centralized_baseline(std::span<const NaturalRepresentation> reps,
                                   const NaturalRepresentation& prior, double loss_rate,
                                   std::uint64_t seed) {
  if (reps.empty()) throw ContractViolation("centralized baseline needs at least one agent");
  if (!(loss_rate >= 0.0 && loss_rate <= 1.0)) throw ContractViolation("loss rate must lie in [0, 1]");
  Rng rng(seed);
  std::bernoulli_distribution dropped(loss_rate);
  CentralResult out;
  std::vector<NaturalRepresentation> kept;
  for (const auto& r : reps) {
    const bool ok = !dropped(rng);
    out.survived.push_back(ok);
    if (ok) kept.push_back(r);
  }
  out.survivors = kept.size();
  out.rep = kept.empty() ? prior : fuse_many(kept, prior);
  return out;
}

SimTrace run_experiment(const SimConfig& config, std::span<const Block> stream, const Block& test) {
  config.validate();
  check_dims(config, stream, test);
  auto vocab = build_vocabulary(config.agent, config.seed);
  std::vector<Agent> agents = build_agents(config.agent, config.n_agents, vocab, config.seed);
  const Topology topology = build_topology(config);
  const NaturalRepresentation prior = prior_natural(*vocab);
  const auto assignment = resolve_assignment(config, stream.size());
  const auto checkpoints = checkpoint_batches(stream.size(), config.fusion_period, config.max_checkpoints);

  std::ofstream message_out, delivery_out;
  if (!config.message_trace.empty()) {
    message_out.open(config.message_trace, std::ios::binary);
    if (!message_out) throw std::runtime_error("cannot open " + config.message_trace.string());
  }
  if (!config.delivery_log.empty()) {
    delivery_out.open(config.delivery_log);
    if (!delivery_out) throw std::runtime_error("cannot open " + config.delivery_log.string());
    delivery_out << "sweep,batch_index,round,from,to,delivered\n";
  }

  SimTrace trace;
  std::vector<double> elapsed_ms(config.n_agents, 0.0);
  std::size_t next = 0;
  auto record = [&](std::size_t batch) {
    const auto reps = snapshot(agents);
    SweepOptions options;
    if (message_out.is_open()) options.trace = &message_out;
    const SweepResult sweep = run_fusion_sweep(reps, prior, topology, config.loss_rate,
                                               substream_seed(config.seed, "loss", next), options);
    if (delivery_out.is_open())
      for (const auto& d : sweep.log)
        delivery_out << next << ',' << batch << ',' << d.round << ',' << d.from << ',' << d.to << ','
                     << (d.delivered ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < agents.size(); ++i) {
      agents[i].set_fused(sweep.assemblies[i].rep);
      const Prediction pre = agents[i].predict(test.inputs, false);
      trace.records.push_back({batch, i, rmse(pre.mean, test.targets), post_rmse(agents[i], test),
                               agents[i].ess(), config.record_timing ? elapsed_ms[i] : 0.0});
      elapsed_ms[i] = 0.0;
    }
    ++next;
  };

  if (!checkpoints.empty() && checkpoints.front() == 0) record(0);
  for (std::size_t b = 1; b <= stream.size() && next < checkpoints.size(); ++b) {
    Agent& agent = agents[assignment[b - 1]];
    const auto start = Clock::now();
    agent.ingest_block(stream[b - 1]);
    elapsed_ms[agent.id()] += std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    if (b == checkpoints[next]) record(b);
  }
  return trace;
}

void write_metrics(const SimTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "batch_index,agent_id,rmse_pre,rmse_post,ess,wall_ms\n";
  for (const auto& r : trace.records)
    out << r.batch_index << ',' << r.agent_id << ',' << format_double(r.rmse_pre) << ','
        << format_double(r.rmse_post) << ',' << format_double(r.ess) << ','
        << format_double(r.wall_ms) << '\n';
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::vector<LossSweepRow> run_loss_sweep(const SimConfig& config, std::span<const Block> stream,
                                         const Block& test, std::span<const double> loss_rates) {
  config.validate();
  check_dims(config, stream, test);
  for (double rate : loss_rates)
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("loss rate must lie in [0, 1)");
  auto vocab = build_vocabulary(config.agent, config.seed);
  std::vector<Agent> agents = build_agents(config.agent, config.n_agents, vocab, config.seed);
  const Topology topology = build_topology(config);
  const NaturalRepresentation prior = prior_natural(*vocab);
  const auto assignment = resolve_assignment(config, stream.size());
  const auto checkpoints = checkpoint_batches(stream.size(), config.fusion_period, config.max_checkpoints);

  const std::size_t n_rates = loss_rates.size();
  std::vector<double> dec_sum(n_rates, 0.0), cen_sum(n_rates, 0.0);
  std::vector<double> dec_complete(n_rates, 0.0), cen_complete(n_rates, 0.0);
  const double n_agents = static_cast<double>(agents.size());

  auto evaluate = [&](std::size_t cp) {
    const auto reps = snapshot(agents);
    for (std::size_t r = 0; r < n_rates; ++r) {
      const SweepResult sweep = run_fusion_sweep(reps, prior, topology, loss_rates[r],
                                                 substream_seed(config.seed, "loss", cp));
      const CentralResult central =
          centralized_baseline(reps, prior, loss_rates[r], substream_seed(config.seed, "upload", cp));
      double dec = 0.0, cen = 0.0, complete = 0.0;
      for (std::size_t i = 0; i < agents.size(); ++i) {
        agents[i].set_fused(sweep.assemblies[i].rep);
        dec += post_rmse(agents[i], test);
        complete += sweep.assemblies[i].complete ? 1.0 : 0.0;
        agents[i].set_fused(central.rep);
        cen += post_rmse(agents[i], test);
      }
      dec_sum[r] += dec / n_agents;
      cen_sum[r] += cen / n_agents;
      dec_complete[r] += complete / n_agents;
      cen_complete[r] += static_cast<double>(central.survivors) / n_agents;
    }
  };

  std::size_t next = 0;
  if (!checkpoints.empty() && checkpoints.front() == 0) evaluate(next++);
  for (std::size_t b = 1; b <= stream.size() && next < checkpoints.size(); ++b) {
    agents[assignment[b - 1]].ingest_block(stream[b - 1]);
    if (b == checkpoints[next]) evaluate(next++);
  }

  std::vector<LossSweepRow> rows;
  const double n_cp = static_cast<double>(std::max<std::size_t>(next, 1));
  for (std::size_t r = 0; r < n_rates; ++r) {
    rows.push_back({loss_rates[r], "decentralized", config.seed, dec_sum[r] / n_cp, dec_complete[r] / n_cp});
    rows.push_back({loss_rates[r], "centralized", config.seed, cen_sum[r] / n_cp, cen_complete[r] / n_cp});
  }
  return rows;
}

void write_loss_sweep(std::span<const LossSweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "loss_rate,system,seed,rmse_post,completeness\n";
  for (const auto& r : rows)
    out << format_double(r.loss_rate) << ',' << r.system << ',' << r.seed << ','
        << format_double(r.rmse_post) << ',' << format_double(r.completeness) << '\n';
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

DisparityResult run_disparity(const SimConfig& config, std::span<const Block> stream,
                              const Block& test, std::size_t frozen_blocks,
                              std::size_t active_blocks) {
  config.validate();
  check_dims(config, stream, test);
  if (frozen_blocks + active_blocks > stream.size())
    throw ConfigError("stream has " + std::to_string(stream.size()) + " blocks, need " +
                      std::to_string(frozen_blocks + active_blocks));
  auto vocab = build_vocabulary(config.agent, config.seed);
  std::vector<Agent> agents = build_agents(config.agent, 2, vocab, config.seed);
  for (std::size_t b = 0; b < frozen_blocks; ++b) agents[0].ingest_block(stream[b]);
  for (std::size_t b = 0; b < active_blocks; ++b) agents[1].ingest_block(stream[frozen_blocks + b]);

  const NaturalRepresentation prior = prior_natural(*vocab);
  const NaturalRepresentation fused = fuse_pair(agents[0].rep(), agents[1].rep(), prior);
  DisparityResult out;
  out.frozen_pre = rmse(agents[0].predict(test.inputs).mean, test.targets);
  out.active_pre = rmse(agents[1].predict(test.inputs).mean, test.targets);
  for (auto& a : agents) a.set_fused(fused);
  out.frozen_post = post_rmse(agents[0], test);
  out.active_post = post_rmse(agents[1], test);
  return out;
}

}  // namespace coolgp
