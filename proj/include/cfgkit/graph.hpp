#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cfgkit {

using NodeId = int;
using Meta = std::map<std::string, std::string>;

enum class GraphLabel { benign, malicious, unknown };

std::string to_string(GraphLabel label);
GraphLabel parse_graph_label(const std::string& text);

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct NodeRecord {
    NodeId id = 0;
    std::optional<std::string> label;
    std::optional<Eigen::VectorXd> feat;

    friend bool operator==(const NodeRecord& a, const NodeRecord& b);
};

// Directed graph with dense node ids 0..n-1. Immutable once built: every
// reduction returns a new Graph. The constructor validates all invariants
// (dense ids, valid endpoints, no duplicate edges, uniform feature length)
// and throws ValidationError otherwise. Self-loops are allowed and their
// count is recorded under meta key "self_loops".
class Graph {
public:
    Graph() = default;
    Graph(std::vector<NodeRecord> nodes, std::vector<Edge> edges,
          GraphLabel label = GraphLabel::unknown, Meta meta = {},
          std::vector<std::optional<std::string>> edge_kinds = {});

    // Plain structural graph with n unlabeled nodes.
    static Graph from_edges(int n, std::vector<Edge> edges);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    bool empty() const { return nodes_.empty(); }

    const std::vector<NodeRecord>& nodes() const { return nodes_; }
    const NodeRecord& node(NodeId v) const { return nodes_.at(static_cast<std::size_t>(v)); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::optional<std::string>& edge_kind(std::size_t i) const { return edge_kinds_.at(i); }
    const std::vector<std::optional<std::string>>& edge_kinds() const { return edge_kinds_; }
    GraphLabel label() const { return label_; }
    const Meta& meta() const { return meta_; }

    bool has_edge(NodeId src, NodeId dst) const;
    bool has_edge(const Edge& e) const { return has_edge(e.src, e.dst); }
    std::optional<std::size_t> edge_index(const Edge& e) const;

    std::span<const NodeId> out_neighbors(NodeId v) const;
    std::span<const NodeId> in_neighbors(NodeId v) const;
    // Undirected neighbor set excluding v itself, ascending.
    std::span<const NodeId> neighbors(NodeId v) const;
    bool has_self_loop(NodeId v) const;
    // Undirected degree: |neighbors(v)| plus one for a self-loop.
    int degree(NodeId v) const;

    bool has_features() const { return feature_dim_ > 0; }
    int feature_dim() const { return feature_dim_; }

    // Copies with one aspect replaced; the result is revalidated.
    Graph with_meta(Meta meta) const;
    Graph with_nodes(std::vector<NodeRecord> nodes) const;
    Graph with_edges(std::vector<Edge> edges) const;

    // Exact equality including meta and edge kinds.
    friend bool operator==(const Graph& a, const Graph& b);

private:
    void build_index();

    std::vector<NodeRecord> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::optional<std::string>> edge_kinds_;
    GraphLabel label_ = GraphLabel::unknown;
    Meta meta_;
    int feature_dim_ = 0;

    // CSR adjacency, each list ascending.
    std::vector<int> out_offsets_, in_offsets_, und_offsets_;
    std::vector<NodeId> out_adj_, in_adj_, und_adj_;
    std::vector<char> self_loop_;
};

// Same node records, edge set and graph label; meta and edge order ignored.
bool structurally_equal(const Graph& a, const Graph& b);

// Per-node importance scores. Unsigned masks hold values in [0,1]; signed
// masks (prototype match scores) hold values in [-1,1].
struct NodeMask {
    std::vector<std::pair<NodeId, double>> scores;
};

void validate_mask(const NodeMask& mask, const Graph& g, bool signed_scores = false);

// Subgraph on `keep`, re-indexed densely in ascending original-id order. The
// original ids are recorded in meta "orig_ids" (composed with any existing
// mapping, so repeated extraction still points at the first ancestor).
Graph induced_subgraph(const Graph& g, std::span<const NodeId> keep);

// All nodes kept; the listed edges are dropped.
Graph remove_edges(const Graph& g, std::span<const Edge> removed);

// Graph on the given edges and their endpoints only. Edges keep the order
// they have in g; nodes are re-indexed like induced_subgraph.
Graph edge_subgraph(const Graph& g, std::span<const Edge> edges);

// Weak components, each ascending, ordered by smallest member.
std::vector<std::vector<NodeId>> weakly_connected_components(const Graph& g);
bool is_weakly_connected(const Graph& g);

enum class CfgStyle { chain_heavy, hub, random_dag };

std::string to_string(CfgStyle style);
CfgStyle parse_cfg_style(const std::string& text);

// Seeded synthetic CFG. Nodes carry mnemonic-like labels; hub graphs are
// labeled malicious, chain-heavy graphs benign, random DAGs unknown.
Graph generate_synthetic_cfg(std::uint64_t seed, int n_blocks, CfgStyle style);

}  // namespace cfgkit
