#pragma once

#include <string>
#include <vector>

#include "cfgkit/graph.hpp"

namespace cfgkit {

// Walk counts can grow like max_degree^L; 128 bits keep L <= 8 exact for any
// CFG-sized graph, and every accumulation is overflow-checked.
using WalkCount = unsigned __int128;

std::string to_decimal(WalkCount value);

inline constexpr int kMaxWalkLength = 8;

enum class WalkMode {
    exact,  // walks of length exactly L
    upto,   // walks of every length 1..L
};

std::string to_string(WalkMode mode);
WalkMode parse_walk_mode(const std::string& text);

// counts[l][v] for l = 0..max_len. `outgoing` counts walks starting at v,
// otherwise walks ending at v. Computed by repeated application of the
// sparse adjacency, never by matrix powers.
std::vector<std::vector<WalkCount>> walk_counts(const Graph& g, int max_len, bool outgoing);

// Per-node score: walks of length L (or 1..L in upto mode) starting at the
// node plus those ending at it.
struct WalkScoreTable {
    int length = 0;
    WalkMode mode = WalkMode::exact;
    std::vector<WalkCount> score;
};

WalkScoreTable walk_scores(const Graph& g, int L, WalkMode mode = WalkMode::exact);

// Number of (walk, position) pairs in which a walk of length <= L traverses
// the edge: sum over l=1..L, a+b=l-1 of in_walks[a][src] * out_walks[b][dst].
// Aligned with g.edges().
struct EdgeWalkIndex {
    int length = 0;
    std::vector<Edge> edges;
    std::vector<WalkCount> index;
};

EdgeWalkIndex edge_walk_index(const Graph& g, int L);

// Each round removes, simultaneously, every node of undirected degree <= 1.
// Stops early when a round removes nothing.
Graph leaf_prune(const Graph& g, int rounds);

struct ComponentPolicy {
    enum class Kind { keep_largest, min_size };
    Kind kind = Kind::keep_largest;
    int min_size = 1;

    static ComponentPolicy keep_largest() { return {}; }
    static ComponentPolicy at_least(int s) { return {Kind::min_size, s}; }
};

Graph component_prune(const Graph& g, const ComponentPolicy& policy);

// Maximal induced subgraph with every undirected degree >= k.
Graph k_core(const Graph& g, int k);

struct WisParams {
    double remove_fraction = 0.0;
    int walk_length = 3;
    int recompute_every = 1;
};

// Greedily drops floor(remove_fraction * m) edges of smallest walk index,
// ties by (src, dst). Nodes are never removed.
Graph wis_sparsify(const Graph& g, const WisParams& params);

enum class NodeRole { nexus, connector, sparse };

std::string to_string(NodeRole role);

struct NodePartition {
    std::vector<NodeRole> role;

    std::vector<NodeId> members(NodeRole r) const;
};

struct NcpParams {
    int walk_length = 2;
    double nexus_quantile = 0.8;
    double jaccard_threshold = 0.1;
    WalkMode walk_mode = WalkMode::exact;
};

// Score at ascending order-statistic index min(n-1, ceil(rho*n)): the nodes
// at or above it form the top (1-rho) share, ties at the threshold included.
WalkCount nexus_threshold(std::vector<WalkCount> scores, double rho);

NodePartition ncp_partition(const Graph& g, const NcpParams& params);

struct NcpResult {
    Graph graph;
    NodePartition partition;
    std::vector<NodeId> kept;
    // Best Jaccard similarity to a Nexus neighbor; only meaningful for Connectors.
    std::vector<double> connector_jaccard;
};

// |A ∩ B| / |A ∪ B| over ascending id lists; 0 when both are empty.
double jaccard(std::span<const NodeId> a, std::span<const NodeId> b);

// Stage 1 drops Sparse nodes; stage 2 drops Connectors whose best Jaccard
// similarity to a Nexus neighbor (original-graph neighborhoods) is below
// the threshold.
NcpResult ncp_reduce(const Graph& g, const NcpParams& params);

}  // namespace cfgkit
