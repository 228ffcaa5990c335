#include "coolgp/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "coolgp/errors.hpp"
#include "coolgp/rng.hpp"

namespace coolgp {

namespace {

void require_compatible(const NaturalRepresentation& a, const NaturalRepresentation& b) {
  if (a.size() != b.size() || a.precision.rows() != b.precision.rows() ||
      a.precision.cols() != b.precision.cols())
    throw ContractViolation("representations are over different vocabularies");
}

Topology::Edge normalized(AgentId a, AgentId b) { return a < b ? Topology::Edge{a, b} : Topology::Edge{b, a}; }

// Breadth-first distances from `source`; unreachable nodes get SIZE_MAX.
std::vector<std::size_t> bfs(const Topology& g, AgentId source) {
  std::vector<std::size_t> dist(g.size(), SIZE_MAX);
  std::queue<AgentId> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const AgentId u = frontier.front();
    frontier.pop();
    for (AgentId v : g.neighbors(u))
      if (dist[v] == SIZE_MAX) {
        dist[v] = dist[u] + 1;
        frontier.push(v);
      }
  }
  return dist;
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

// Error-free transformations (Knuth TwoSum, Dekker FastTwoSum).
inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  const double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

inline void fast_two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  e = b - (s - a);
}

// Accurate double-double addition (hi, lo) += (b_hi, b_lo).
inline void dd_add(double& hi, double& lo, double b_hi, double b_lo) {
  double s1, s2, t1, t2;
  two_sum(hi, b_hi, s1, s2);
  two_sum(lo, b_lo, t1, t2);
  s2 += t1;
  fast_two_sum(s1, s2, s1, s2);
  s2 += t2;
  fast_two_sum(s1, s2, hi, lo);
}

// Running sum of representations in double-double precision.
class CompensatedSum {
 public:
  explicit CompensatedSum(const NaturalRepresentation& start)
      : hi_(start), lo_{Matrix::Zero(start.precision.rows(), start.precision.cols()), Vector::Zero(start.size())} {}

  void add(const NaturalRepresentation& value, const NaturalRepresentation& residual, double sign) {
    const bool has_residual = residual.size() > 0;
    add_array(hi_.precision.data(), lo_.precision.data(), value.precision.data(),
              has_residual ? residual.precision.data() : nullptr, hi_.precision.size(), sign);
    add_array(hi_.shift.data(), lo_.shift.data(), value.shift.data(),
              has_residual ? residual.shift.data() : nullptr, hi_.shift.size(), sign);
  }
  void add(const NaturalRepresentation& value, double sign) { add(value, NaturalRepresentation{}, sign); }

  /// The sum rounded to double; `hi` is already the rounded value after
  /// renormalization.
  const NaturalRepresentation& rounded() const { return hi_; }
  const NaturalRepresentation& residual() const { return lo_; }

 private:
  static void add_array(double* hi, double* lo, const double* v, const double* r, Eigen::Index n, double sign) {
    for (Eigen::Index i = 0; i < n; ++i) dd_add(hi[i], lo[i], sign * v[i], r ? sign * r[i] : 0.0);
  }

  NaturalRepresentation hi_, lo_;
};

// Adds (M_ki - R_0) for every held message except the one from `exclude`.
void accumulate_messages(CompensatedSum& acc, const NaturalRepresentation& prior,
                         std::span<const FusionMessage* const> held, AgentId exclude) {
  for (const FusionMessage* msg : held) {
    if (msg->from == exclude) continue;
    acc.add(msg->payload, msg->residual, 1.0);
    acc.add(prior, -1.0);
  }
}

// Validates the inbox and returns one pointer per sender, in inbox order.
std::vector<const FusionMessage*> index_inbox(AgentId self, const Topology& topology,
                                              const NaturalRepresentation& rep,
                                              std::span<const FusionMessage> inbox) {
  const auto& nbrs = topology.neighbors(self);
  std::set<AgentId> seen;
  std::vector<const FusionMessage*> held;
  for (const auto& msg : inbox) {
    if (msg.to != self)
      throw ProtocolError("message from " + std::to_string(msg.from) + " is addressed to " +
                          std::to_string(msg.to) + ", not " + std::to_string(self));
    if (std::find(nbrs.begin(), nbrs.end(), msg.from) == nbrs.end())
      throw ProtocolError("agent " + std::to_string(msg.from) + " is not a neighbour of " +
                          std::to_string(self));
    if (!seen.insert(msg.from).second)
      throw ProtocolError("duplicate message from agent " + std::to_string(msg.from) +
                          " in one round");
    require_compatible(msg.payload, rep);
    held.push_back(&msg);
  }
  return held;
}

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "trace format assumes a little-endian host");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw ParseError("truncated message record");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

NaturalRepresentation fuse_pair(const NaturalRepresentation& a, const NaturalRepresentation& b,
                                const NaturalRepresentation& prior) {
  require_compatible(a, b);
  require_compatible(a, prior);
  CompensatedSum sum(a);
  sum.add(b, 1.0);
  sum.add(prior, -1.0);
  return sum.rounded();
}

NaturalRepresentation fuse_many(std::span<const NaturalRepresentation> reps,
                                const NaturalRepresentation& prior) {
  if (reps.empty()) throw ContractViolation("fuse_many needs at least one representation");
  CompensatedSum sum(reps.front());
  for (std::size_t i = 1; i < reps.size(); ++i) {
    require_compatible(reps[i], prior);
    sum.add(reps[i], 1.0);
    sum.add(prior, -1.0);
  }
  return sum.rounded();
}

Topology::Topology(std::size_t nodes, std::vector<Edge> edges) : adjacency_(nodes) {
  std::set<Edge> unique;
  for (auto [a, b] : edges) {
    if (a >= nodes || b >= nodes)
      throw ContractViolation("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                              ") references a missing node");
    if (a == b) throw ContractViolation("self-loop on node " + std::to_string(a));
    unique.insert(normalized(a, b));
  }
  edges_.assign(unique.begin(), unique.end());
  for (auto [a, b] : edges_) {
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
}

Topology Topology::line(std::size_t nodes) {
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < nodes; ++i) edges.emplace_back(i - 1, i);
  return Topology(nodes, std::move(edges));
}

Topology Topology::star(std::size_t nodes) {
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < nodes; ++i) edges.emplace_back(0, i);
  return Topology(nodes, std::move(edges));
}

Topology Topology::random_tree(std::size_t nodes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < nodes; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    edges.emplace_back(pick(rng), i);
  }
  return Topology(nodes, std::move(edges));
}

Topology Topology::random_connected(std::size_t nodes, std::size_t extra_edges, std::uint64_t seed) {
  Topology tree = random_tree(nodes, seed);
  std::vector<Edge> edges = tree.edges();
  Rng rng(substream_seed(seed, "chords"));
  std::set<Edge> present(edges.begin(), edges.end());
  const std::size_t max_edges = nodes * (nodes - 1) / 2;
  std::uniform_int_distribution<std::size_t> pick(0, nodes > 0 ? nodes - 1 : 0);
  while (extra_edges > 0 && present.size() < max_edges) {
    const AgentId a = pick(rng);
    const AgentId b = pick(rng);
    if (a == b || !present.insert(normalized(a, b)).second) continue;
    edges.push_back(normalized(a, b));
    --extra_edges;
  }
  return Topology(nodes, std::move(edges));
}

bool Topology::connected() const { return size() <= 1 || components().size() == 1; }

bool Topology::is_tree() const { return size() >= 1 && edges_.size() + 1 == size() && connected(); }

std::vector<std::vector<AgentId>> Topology::components() const {
  DisjointSets sets(size());
  for (auto [a, b] : edges_) sets.unite(a, b);
  std::map<std::size_t, std::vector<AgentId>> groups;
  for (AgentId v = 0; v < size(); ++v) groups[sets.find(v)].push_back(v);
  std::vector<std::vector<AgentId>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

std::size_t Topology::diameter() const {
  if (!is_tree())
    throw ProtocolError("topology is not a tree; reduce it with spanning_tree before fusing");
  // Double sweep is exact on trees.
  const auto first = bfs(*this, 0);
  const auto far = static_cast<AgentId>(std::max_element(first.begin(), first.end()) - first.begin());
  const auto second = bfs(*this, far);
  return *std::max_element(second.begin(), second.end());
}

std::size_t tree_diameter(const Topology& topology) { return topology.diameter(); }

Topology spanning_tree(const Topology& topology, const std::map<Topology::Edge, double>& latencies) {
  if (!topology.connected()) {
    std::ostringstream msg;
    msg << "graph is disconnected; components:";
    for (const auto& comp : topology.components()) {
      msg << " {";
      for (std::size_t i = 0; i < comp.size(); ++i) msg << (i ? "," : "") << comp[i];
      msg << "}";
    }
    throw ProtocolError(msg.str());
  }
  auto latency = [&](const Topology::Edge& e) {
    const auto it = latencies.find(e);
    return it == latencies.end() ? 1.0 : it->second;
  };
  std::vector<Topology::Edge> order = topology.edges();
  std::stable_sort(order.begin(), order.end(),
                   [&](const auto& a, const auto& b) { return latency(a) < latency(b); });
  DisjointSets sets(topology.size());
  std::vector<Topology::Edge> kept;
  for (const auto& e : order)
    if (sets.unite(e.first, e.second)) kept.push_back(e);
  return Topology(topology.size(), std::move(kept));
}

std::vector<FusionMessage> init_messages(AgentId self, const NaturalRepresentation& rep,
                                         const Topology& topology) {
  std::vector<FusionMessage> out;
  for (AgentId j : topology.neighbors(self)) out.push_back({self, j, 0, rep, {}});
  return out;
}

std::vector<FusionMessage> step_messages(AgentId self, const NaturalRepresentation& rep,
                                         const NaturalRepresentation& prior,
                                         const Topology& topology,
                                         std::span<const FusionMessage> inbox, std::uint64_t step) {
  require_compatible(rep, prior);
  const auto held = index_inbox(self, topology, rep, inbox);
  std::vector<FusionMessage> out;
  for (AgentId j : topology.neighbors(self)) {
    CompensatedSum sum(rep);
    accumulate_messages(sum, prior, held, j);
    out.push_back({self, j, step + 1, sum.rounded(), sum.residual()});
  }
  return out;
}

Assembly assemble_global(AgentId self, const NaturalRepresentation& rep,
                         const NaturalRepresentation& prior, const Topology& topology,
                         std::span<const FusionMessage> inbox) {
  require_compatible(rep, prior);
  const auto held = index_inbox(self, topology, rep, inbox);
  CompensatedSum sum(rep);
  accumulate_messages(sum, prior, held, SIZE_MAX);
  return {sum.rounded(), held.size() == topology.neighbors(self).size()};
}

void write_message(std::ostream& out, const FusionMessage& msg) {
  const auto m = static_cast<std::uint64_t>(msg.payload.size());
  put<std::uint64_t>(out, m);
  put<std::uint64_t>(out, msg.from);
  put<std::uint64_t>(out, msg.to);
  put<std::uint64_t>(out, msg.step);
  for (Eigen::Index i = 0; i < msg.payload.precision.rows(); ++i)
    for (Eigen::Index j = 0; j < msg.payload.precision.cols(); ++j) put<double>(out, msg.payload.precision(i, j));
  for (Eigen::Index i = 0; i < msg.payload.shift.size(); ++i) put<double>(out, msg.payload.shift(i));
  const bool has_residual = msg.residual.size() > 0;
  for (Eigen::Index i = 0; i < msg.payload.precision.size(); ++i)
    put<double>(out, has_residual ? msg.residual.precision.reshaped<Eigen::RowMajor>()(i) : 0.0);
  for (Eigen::Index i = 0; i < msg.payload.shift.size(); ++i) put<double>(out, has_residual ? msg.residual.shift(i) : 0.0);
}

FusionMessage read_message(std::istream& in) {
  FusionMessage msg;
  const auto m = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  msg.from = get<std::uint64_t>(in);
  msg.to = get<std::uint64_t>(in);
  msg.step = get<std::uint64_t>(in);
  if (m < 0 || m > (1 << 20)) throw ParseError("implausible vocabulary size in message record");
  msg.payload.precision.resize(m, m);
  msg.payload.shift.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) msg.payload.precision(i, j) = get<double>(in);
  for (Eigen::Index i = 0; i < m; ++i) msg.payload.shift(i) = get<double>(in);
  msg.residual.precision.resize(m, m);
  msg.residual.shift.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) msg.residual.precision(i, j) = get<double>(in);
  for (Eigen::Index i = 0; i < m; ++i) msg.residual.shift(i) = get<double>(in);
  return msg;
}

}  // namespace coolgp
