#include "coolgp/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "coolgp/errors.hpp"
#include "coolgp/parallel.hpp"
#include "coolgp/rng.hpp"
#include "coolgp/verify.hpp"

namespace coolgp::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string matrix_text(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out += (out.empty() ? "" : ",") + std::string(buf);
    }
  return out;
}

fs::path output_dir(const KeyValues& settings) {
  const fs::path dir = get_string(settings, "out");
  fs::create_directories(dir);
  return dir;
}

fs::path data_dir(const KeyValues& settings) {
  const std::string data = get_string(settings, "data");
  return data.empty() ? fs::path(get_string(settings, "out")) : fs::path(data);
}

RunManifest start_manifest(const std::string& command, const KeyValues& settings) {
  RunManifest m;
  m.command = command;
  m.config = settings;
  m.seed = get_u64(settings, "seed");
  m.started = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& dir) {
  m.finished = utc_timestamp();
  m.write(dir / (m.command + ".manifest"));
}

Topology parse_edges(std::size_t nodes, const std::string& text) {
  std::vector<Topology::Edge> edges;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError("edge '" + item + "' must look like a-b");
    const KeyValues pair = {{"a", item.substr(0, dash)}, {"b", item.substr(dash + 1)}};
    edges.emplace_back(get_size(pair, "a"), get_size(pair, "b"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  try {
    return Topology(nodes, std::move(edges));
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
}

// Final-checkpoint means, for the console summary.
void summarize_trace(const SimTrace& trace, std::ostream& log) {
  if (trace.records.empty()) {
    log << "no checkpoints recorded\n";
    return;
  }
  const std::size_t last = trace.records.back().batch_index;
  double pre = 0.0, post = 0.0;
  std::size_t n = 0;
  for (const auto& r : trace.records)
    if (r.batch_index == last) {
      pre += r.rmse_pre;
      post += r.rmse_post;
      ++n;
    }
  log << "batch " << last << ": mean rmse pre " << fmt(pre / static_cast<double>(n)) << ", post "
      << fmt(post / static_cast<double>(n)) << "\n";
}

}  // namespace

const KeyValues& default_settings() {
  static const KeyValues defaults = {
      {"seed", "0"},
      {"out", "out"},
      {"config", ""},
      {"threads", "1"},
      {"data", ""},
      {"vocab_size", "50"},
      {"bank_size", "10"},
      {"agents", "2"},
      {"loss_rate", "0"},
      {"fusion_period", "10"},
      {"topology", "line"},
      {"edges", ""},
      {"dim", "2"},
      {"latent_dim", "0"},
      {"signal_scale", "1"},
      {"noise_std", "0.1"},
      {"jitter", "1e-08"},
      {"blocks_per_stream", "100"},
      {"block_size", "20"},
      {"n_test", "400"},
      {"chunk_size", "6000"},
      {"learning_rate", "0.01"},
      {"rate_decay", "0.1"},
      {"grad_samples", "1"},
      {"hyperlearning", "true"},
      {"hyper_every", "1"},
      {"shared_bank", "true"},
      {"max_step", "0.01"},
      {"stream_length", "unbounded"},
      {"dispatch", "random"},
      {"max_checkpoints", "all"},
      {"timing", "false"},
      {"loss_rates", "0,0.2,0.4,0.6"},
      {"seeds", "1"},
      {"message_trace", "false"},
  };
  return defaults;
}

KeyValues resolve_settings(const KeyValues& flags) {
  const KeyValues& defaults = default_settings();
  auto check_known = [&](const KeyValues& kv, const std::string& origin) {
    for (const auto& [k, v] : kv)
      if (!defaults.contains(k)) throw ConfigError("unknown setting '" + k + "' in " + origin);
  };
  check_known(flags, "command-line flags");
  KeyValues resolved = defaults;
  const auto cfg = flags.find("config");
  if (cfg != flags.end() && !cfg->second.empty()) {
    KeyValues file = read_key_values(cfg->second);
    file.erase("config");
    check_known(file, cfg->second);
    resolved = layer(resolved, file);
  }
  return layer(resolved, flags);
}

SyntheticSpec synthetic_spec(const KeyValues& s) {
  SyntheticSpec spec = SyntheticSpec::with_defaults(get_int(s, "dim"), get_u64(s, "seed"));
  spec.signal_scale = get_double(s, "signal_scale");
  spec.noise_std = get_double(s, "noise_std");
  spec.blocks_per_stream = get_size(s, "blocks_per_stream");
  spec.block_size = get_size(s, "block_size");
  spec.n_test = get_size(s, "n_test");
  spec.jitter = get_double(s, "jitter");
  spec.chunk_size = get_size(s, "chunk_size");
  spec.validate();
  return spec;
}

SimConfig sim_config(const KeyValues& s) {
  SimConfig c;
  c.n_agents = get_size(s, "agents");
  c.topology_kind = parse_topology_kind(get_string(s, "topology"));
  if (c.topology_kind == TopologyKind::custom) c.custom_topology = parse_edges(c.n_agents, get_string(s, "edges"));
  c.loss_rate = get_double(s, "loss_rate");
  c.fusion_period = get_size(s, "fusion_period");
  c.seed = get_u64(s, "seed");
  c.agent.vocab_size = get_int(s, "vocab_size");
  c.agent.bank_size = get_size(s, "bank_size");
  c.agent.input_dim = get_int(s, "dim");
  c.agent.standardized_dim = get_int(s, "latent_dim");
  c.agent.signal_scale = get_double(s, "signal_scale");
  c.agent.noise_std = get_double(s, "noise_std");
  c.agent.jitter = get_double(s, "jitter");
  c.agent.learn.learning_rate = get_double(s, "learning_rate");
  c.agent.learn.rate_decay = get_double(s, "rate_decay");
  c.agent.learn.grad_samples = get_size(s, "grad_samples");
  c.agent.learn.hyperlearning = get_bool(s, "hyperlearning");
  c.agent.learn.hyper_every = get_size(s, "hyper_every");
  c.agent.shared_bank = get_bool(s, "shared_bank");
  c.agent.learn.max_step = get_double(s, "max_step");
  if (get_string(s, "stream_length") != "unbounded") c.agent.learn.stream_length = get_size(s, "stream_length");
  if (get_string(s, "max_checkpoints") != "all") c.max_checkpoints = get_size(s, "max_checkpoints");
  c.record_timing = get_bool(s, "timing");
  c.validate();
  return c;
}

DatasetPaths DatasetPaths::in(const fs::path& dir) {
  return {dir / "stream1.csv", dir / "stream2.csv", dir / "test.csv"};
}

Dataset load_dataset(const fs::path& dir) {
  const DatasetPaths paths = DatasetPaths::in(dir);
  for (const auto& p : {paths.stream1, paths.stream2, paths.test})
    if (!fs::exists(p)) throw ConfigError("dataset file " + p.string() + " not found; run `coolgp gen` first");
  Dataset d;
  d.stream1 = read_dataset(paths.stream1);
  d.stream2 = read_dataset(paths.stream2);
  d.test = concatenate(read_dataset(paths.test));
  if (d.test.size() == 0) throw ConfigError("test set " + paths.test.string() + " is empty");
  return d;
}

PooledStream pool_streams(const std::vector<Block>& stream1, const std::vector<Block>& stream2,
                          std::uint64_t seed) {
  std::vector<std::pair<const Block*, std::size_t>> tagged;
  for (const auto& b : stream1) tagged.emplace_back(&b, 0);
  for (const auto& b : stream2) tagged.emplace_back(&b, 1);
  Rng rng(seed);
  std::shuffle(tagged.begin(), tagged.end(), rng);
  PooledStream out;
  for (const auto& [block, domain] : tagged) {
    out.blocks.push_back(*block);
    out.domain.push_back(domain);
  }
  return out;
}

int cmd_gen(const KeyValues& settings, std::ostream& log) {
  RunManifest manifest = start_manifest("gen", settings);
  const SyntheticSpec spec = synthetic_spec(settings);
  const SyntheticData data = generate(spec);
  const fs::path dir = output_dir(settings);
  const DatasetPaths paths = DatasetPaths::in(dir);
  write_dataset(data.stream1, paths.stream1, spec.dim);
  write_dataset(data.stream2, paths.stream2, spec.dim);
  write_dataset(data.test, paths.test, spec.dim);
  manifest.outputs = {paths.stream1, paths.stream2, paths.test};
  manifest.extra["synthetic.projection1"] = matrix_text(spec.projection1);
  manifest.extra["synthetic.projection2"] = matrix_text(spec.projection2);
  manifest.extra["synthetic.train_points_per_stream"] = std::to_string(spec.blocks_per_stream * spec.block_size);
  finish_manifest(manifest, dir);
  log << "wrote " << data.stream1.size() << " + " << data.stream2.size() << " blocks of " << spec.block_size
      << " points (d = " << spec.dim << ") and " << spec.n_test << " test points to " << dir.string() << "\n";
  return 0;
}

int cmd_two_agent(const KeyValues& settings, std::ostream& log) {
  RunManifest manifest = start_manifest("two-agent", settings);
  SimConfig config = sim_config(settings);
  config.n_agents = 2;
  config.topology_kind = TopologyKind::line;
  config.custom_topology.reset();
  const std::string dispatch = get_string(settings, "dispatch");
  if (dispatch != "random" && dispatch != "by-domain")
    throw ConfigError("dispatch must be random or by-domain, got '" + dispatch + "'");

  const Dataset data = load_dataset(data_dir(settings));
  const PooledStream pooled = pool_streams(data.stream1, data.stream2, substream_seed(config.seed, "order"));
  if (dispatch == "by-domain") config.assignment = pooled.domain;
  const SimTrace trace = run_experiment(config, pooled.blocks, data.test);

  const fs::path dir = output_dir(settings);
  write_metrics(trace, dir / "metrics.csv");
  manifest.outputs = {dir / "metrics.csv"};
  manifest.extra["resolved.agents"] = "2";
  manifest.extra["resolved.topology"] = "line";
  finish_manifest(manifest, dir);
  summarize_trace(trace, log);
  return 0;
}

int cmd_network(const KeyValues& settings, std::ostream& log) {
  RunManifest manifest = start_manifest("network", settings);
  SimConfig config = sim_config(settings);
  const fs::path dir = output_dir(settings);
  if (get_bool(settings, "message_trace")) {
    config.message_trace = dir / "messages.bin";
    config.delivery_log = dir / "deliveries.csv";
  }
  const Dataset data = load_dataset(data_dir(settings));
  const PooledStream pooled = pool_streams(data.stream1, data.stream2, substream_seed(config.seed, "order"));
  const SimTrace trace = run_experiment(config, pooled.blocks, data.test);

  write_metrics(trace, dir / "metrics.csv");
  manifest.outputs = {dir / "metrics.csv"};
  if (!config.message_trace.empty()) {
    manifest.outputs.push_back(config.message_trace);
    manifest.outputs.push_back(config.delivery_log);
  }
  const Topology tree = build_topology(config);
  manifest.extra["resolved.tree_diameter"] = std::to_string(tree.diameter());
  finish_manifest(manifest, dir);
  summarize_trace(trace, log);
  return 0;
}

int cmd_loss_sweep(const KeyValues& settings, std::ostream& log) {
  RunManifest manifest = start_manifest("loss-sweep", settings);
  const SimConfig base = sim_config(settings);
  const std::vector<double> rates = get_double_list(settings, "loss_rates");
  for (double r : rates)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("loss rate " + fmt(r) + " outside [0, 1)");
  const std::size_t seeds = get_size(settings, "seeds");
  if (seeds < 1) throw ConfigError("seeds must be >= 1");

  const Dataset data = load_dataset(data_dir(settings));
  std::vector<std::vector<LossSweepRow>> per_seed(seeds);
  parallel_for(seeds, get_size(settings, "threads"), [&](std::size_t r) {
    SimConfig config = base;
    config.seed = seeds == 1 ? base.seed : substream_seed(base.seed, "replicate", r);
    const PooledStream pooled = pool_streams(data.stream1, data.stream2, substream_seed(config.seed, "order"));
    per_seed[r] = run_loss_sweep(config, pooled.blocks, data.test, rates);
  });
  std::vector<LossSweepRow> rows;
  for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());

  const fs::path dir = output_dir(settings);
  write_loss_sweep(rows, dir / "loss_sweep.csv");
  manifest.outputs = {dir / "loss_sweep.csv"};
  manifest.extra["system.decentralized"] =
      "topology=" + to_string(base.topology_kind) +
      ";rounds=tree diameter when lossless, twice the diameter under loss;retransmit=latest payload";
  manifest.extra["system.centralized"] = "topology=server star;uploads=one per agent per fusion;return=lossless";
  finish_manifest(manifest, dir);

  for (double rate : rates) {
    double dec = 0.0, cen = 0.0;
    for (const auto& row : rows)
      if (row.loss_rate == rate) (row.system == "decentralized" ? dec : cen) += row.rmse_post;
    log << "loss " << fmt(rate) << ": decentralized " << fmt(dec / static_cast<double>(seeds)) << ", centralized "
        << fmt(cen / static_cast<double>(seeds)) << "\n";
  }
  return 0;
}

int cmd_verify(const KeyValues& settings, const std::string& suite, std::ostream& log) {
  RunManifest manifest = start_manifest("verify", settings);
  manifest.extra["suite"] = suite;
  const verify::SuiteReport report =
      verify::run_suite(suite, {get_u64(settings, "seed"), get_size(settings, "threads")});
  const fs::path dir = output_dir(settings);
  const fs::path path = dir / ("verify_" + suite + ".txt");
  {
    std::ofstream out(path);
    out << report.format();
  }
  manifest.outputs = {path};
  manifest.extra["result"] = report.passed() ? "pass" : "fail";
  manifest.command = "verify-" + suite;
  finish_manifest(manifest, dir);
  log << report.format();
  return report.passed() ? 0 : 1;
}

}  // namespace coolgp::harness
