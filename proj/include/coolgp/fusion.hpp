#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "coolgp/posterior.hpp"

namespace coolgp {

using AgentId = std::size_t;

// Fusion sums are accumulated in double-double arithmetic and rounded once,
// so every evaluation order (direct fusion or any message schedule) yields
// the same doubles. Predictions computed from natural parameters amplify
// last-bit differences by roughly cond(Kuu)^2, which makes this matter.

/// R_a + R_b - R_0: the product of two posteriors divided by the shared prior.
NaturalRepresentation fuse_pair(const NaturalRepresentation& a, const NaturalRepresentation& b,
                                const NaturalRepresentation& prior);

/// sum_i R_i - (s - 1) R_0. Throws ContractViolation on an empty list.
NaturalRepresentation fuse_many(std::span<const NaturalRepresentation> reps,
                                const NaturalRepresentation& prior);

/// M_ij^t: what agent `from` tells neighbour `to` at round `step`.
struct FusionMessage {
  AgentId from = 0;
  AgentId to = 0;
  std::uint64_t step = 0;
  NaturalRepresentation payload;
  /// Low-order part: payload + residual is the message to about twice double
  /// precision. Empty means zero.
  NaturalRepresentation residual;
};

/// Undirected communication graph over agents 0..n-1.
class Topology {
 public:
  using Edge = std::pair<AgentId, AgentId>;

  explicit Topology(std::size_t nodes, std::vector<Edge> edges = {});

  static Topology line(std::size_t nodes);
  static Topology star(std::size_t nodes);
  /// Uniform random attachment tree, reproducible from the seed.
  static Topology random_tree(std::size_t nodes, std::uint64_t seed);
  /// Connected random graph: a random tree plus `extra_edges` chords.
  static Topology random_connected(std::size_t nodes, std::size_t extra_edges, std::uint64_t seed);

  std::size_t size() const { return adjacency_.size(); }
  /// Edges normalized so that first < second, sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<AgentId>& neighbors(AgentId node) const { return adjacency_.at(node); }
  bool connected() const;
  bool is_tree() const;
  /// Connected components as sorted node lists.
  std::vector<std::vector<AgentId>> components() const;
  /// Longest shortest path in edges; throws ProtocolError unless the graph is a tree.
  std::size_t diameter() const;

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<AgentId>> adjacency_;
};

std::size_t tree_diameter(const Topology& topology);

/// Minimum-total-latency spanning tree (Kruskal). Latencies are keyed by the
/// normalized edge; missing entries count as 1. Throws ProtocolError naming
/// the components when the graph is disconnected.
Topology spanning_tree(const Topology& topology, const std::map<Topology::Edge, double>& latencies);

/// Round-0 messages: the sender's own representation to every neighbour.
std::vector<FusionMessage> init_messages(AgentId self, const NaturalRepresentation& rep,
                                         const Topology& topology);

/// Messages for round step+1 computed from the messages held at round `step`.
///
/// For each neighbour j the payload is rep + sum over held messages M_ki with
/// k != j of (M_ki - R_0). Neighbours with no held message contribute nothing.
/// Throws ProtocolError on a duplicate sender or a sender that is not a neighbour.
std::vector<FusionMessage> step_messages(AgentId self, const NaturalRepresentation& rep,
                                         const NaturalRepresentation& prior,
                                         const Topology& topology,
                                         std::span<const FusionMessage> inbox, std::uint64_t step);

struct Assembly {
  NaturalRepresentation rep;
  /// True when a message from every neighbour was available.
  bool complete = false;
};

/// rep + sum_k (M_ki - R_0) over the held messages.
Assembly assemble_global(AgentId self, const NaturalRepresentation& rep,
                         const NaturalRepresentation& prior, const Topology& topology,
                         std::span<const FusionMessage> inbox);

/// Binary trace record: (m, from, to, step) as little-endian uint64 followed by
/// the payload precision (row-major) and shift, then the residual precision
/// and shift, all as IEEE-754 doubles.
void write_message(std::ostream& out, const FusionMessage& msg);
FusionMessage read_message(std::istream& in);

}  // namespace coolgp
