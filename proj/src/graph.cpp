#include "cfgkit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "cfgkit/errors.hpp"
#include "cfgkit/rng.hpp"

namespace cfgkit {

std::string to_string(GraphLabel label) {
    switch (label) {
        case GraphLabel::benign: return "benign";
        case GraphLabel::malicious: return "malicious";
        case GraphLabel::unknown: return "unknown";
    }
    return "unknown";
}

GraphLabel parse_graph_label(const std::string& text) {
    if (text == "benign") return GraphLabel::benign;
    if (text == "malicious") return GraphLabel::malicious;
    if (text == "unknown") return GraphLabel::unknown;
    throw ArgumentError("unknown graph label '" + text + "'");
}

bool operator==(const NodeRecord& a, const NodeRecord& b) {
    if (a.id != b.id || a.label != b.label) return false;
    if (a.feat.has_value() != b.feat.has_value()) return false;
    if (!a.feat) return true;
    return a.feat->size() == b.feat->size() && *a.feat == *b.feat;
}

namespace {

std::string edge_text(const Edge& e) {
    return "(" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")";
}

void build_csr(int n, const std::vector<std::pair<NodeId, NodeId>>& pairs,
               std::vector<int>& offsets, std::vector<NodeId>& adj) {
    offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& [from, to] : pairs) ++offsets[static_cast<std::size_t>(from) + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    adj.assign(pairs.size(), 0);
    std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
    for (const auto& [from, to] : pairs) adj[static_cast<std::size_t>(cursor[static_cast<std::size_t>(from)]++)] = to;
    for (int v = 0; v < n; ++v) {
        std::sort(adj.begin() + offsets[static_cast<std::size_t>(v)], adj.begin() + offsets[static_cast<std::size_t>(v) + 1]);
    }
}

std::span<const NodeId> csr_row(const std::vector<int>& offsets, const std::vector<NodeId>& adj, NodeId v) {
    const auto lo = static_cast<std::size_t>(offsets.at(static_cast<std::size_t>(v)));
    const auto hi = static_cast<std::size_t>(offsets.at(static_cast<std::size_t>(v) + 1));
    return {adj.data() + lo, hi - lo};
}

}  // namespace

Graph::Graph(std::vector<NodeRecord> nodes, std::vector<Edge> edges, GraphLabel label, Meta meta,
             std::vector<std::optional<std::string>> edge_kinds)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      edge_kinds_(std::move(edge_kinds)),
      label_(label),
      meta_(std::move(meta)) {
    const int n = num_nodes();
    for (int i = 0; i < n; ++i) {
        if (nodes_[static_cast<std::size_t>(i)].id != i) {
            throw ValidationError("node ids must be dense 0..n-1; position " + std::to_string(i) +
                                  " holds id " + std::to_string(nodes_[static_cast<std::size_t>(i)].id));
        }
    }
    if (edge_kinds_.empty()) edge_kinds_.resize(edges_.size());
    if (edge_kinds_.size() != edges_.size()) {
        throw ValidationError("edge kind list length does not match edge count");
    }

    feature_dim_ = 0;
    const bool any_feat = std::any_of(nodes_.begin(), nodes_.end(), [](const NodeRecord& r) { return r.feat.has_value(); });
    if (any_feat) {
        const auto dim = nodes_.front().feat ? nodes_.front().feat->size() : -1;
        for (const auto& r : nodes_) {
            if (!r.feat || r.feat->size() != dim) {
                throw ValidationError("node " + std::to_string(r.id) +
                                      ": feature vectors must be present on all nodes with equal length");
            }
            if (!r.feat->allFinite()) {
                throw ValidationError("node " + std::to_string(r.id) + ": non-finite feature value");
            }
        }
        feature_dim_ = static_cast<int>(dim);
        if (feature_dim_ == 0) throw ValidationError("feature vectors must be nonempty");
    }

    std::set<Edge> seen;
    int self_loops = 0;
    for (const auto& e : edges_) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
            throw ValidationError("edge " + edge_text(e) + " has an endpoint outside 0.." + std::to_string(n - 1));
        }
        if (!seen.insert(e).second) throw ValidationError("duplicate edge " + edge_text(e));
        if (e.src == e.dst) ++self_loops;
    }
    if (self_loops > 0) {
        meta_["self_loops"] = std::to_string(self_loops);
    } else {
        meta_.erase("self_loops");
    }
    build_index();
}

void Graph::build_index() {
    const int n = num_nodes();
    std::vector<std::pair<NodeId, NodeId>> out, in, und;
    out.reserve(edges_.size());
    in.reserve(edges_.size());
    self_loop_.assign(static_cast<std::size_t>(n), 0);
    std::set<std::pair<NodeId, NodeId>> und_set;
    for (const auto& e : edges_) {
        out.emplace_back(e.src, e.dst);
        in.emplace_back(e.dst, e.src);
        if (e.src == e.dst) {
            self_loop_[static_cast<std::size_t>(e.src)] = 1;
        } else {
            und_set.emplace(e.src, e.dst);
            und_set.emplace(e.dst, e.src);
        }
    }
    und.assign(und_set.begin(), und_set.end());
    build_csr(n, out, out_offsets_, out_adj_);
    build_csr(n, in, in_offsets_, in_adj_);
    build_csr(n, und, und_offsets_, und_adj_);
}

Graph Graph::from_edges(int n, std::vector<Edge> edges) {
    std::vector<NodeRecord> nodes(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) nodes[static_cast<std::size_t>(i)].id = i;
    return Graph(std::move(nodes), std::move(edges));
}

bool Graph::has_edge(NodeId src, NodeId dst) const {
    if (src < 0 || src >= num_nodes()) return false;
    const auto row = out_neighbors(src);
    return std::binary_search(row.begin(), row.end(), dst);
}

std::optional<std::size_t> Graph::edge_index(const Edge& e) const {
    const auto it = std::find(edges_.begin(), edges_.end(), e);
    if (it == edges_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - edges_.begin());
}

std::span<const NodeId> Graph::out_neighbors(NodeId v) const { return csr_row(out_offsets_, out_adj_, v); }
std::span<const NodeId> Graph::in_neighbors(NodeId v) const { return csr_row(in_offsets_, in_adj_, v); }
std::span<const NodeId> Graph::neighbors(NodeId v) const { return csr_row(und_offsets_, und_adj_, v); }

bool Graph::has_self_loop(NodeId v) const { return self_loop_.at(static_cast<std::size_t>(v)) != 0; }

int Graph::degree(NodeId v) const {
    return static_cast<int>(neighbors(v).size()) + (has_self_loop(v) ? 1 : 0);
}

Graph Graph::with_meta(Meta meta) const { return Graph(nodes_, edges_, label_, std::move(meta), edge_kinds_); }

Graph Graph::with_nodes(std::vector<NodeRecord> nodes) const {
    return Graph(std::move(nodes), edges_, label_, meta_, edge_kinds_);
}

Graph Graph::with_edges(std::vector<Edge> edges) const { return Graph(nodes_, std::move(edges), label_, meta_); }

bool operator==(const Graph& a, const Graph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.edge_kinds_ == b.edge_kinds_ &&
           a.label_ == b.label_ && a.meta_ == b.meta_;
}

bool structurally_equal(const Graph& a, const Graph& b) {
    if (a.nodes() != b.nodes() || a.label() != b.label() || a.num_edges() != b.num_edges()) return false;
    std::vector<Edge> ea = a.edges(), eb = b.edges();
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    return ea == eb;
}

void validate_mask(const NodeMask& mask, const Graph& g, bool signed_scores) {
    const double lo = signed_scores ? -1.0 : 0.0;
    for (const auto& [id, score] : mask.scores) {
        if (id < 0 || id >= g.num_nodes()) {
            throw ValidationError("mask references unknown node " + std::to_string(id));
        }
        if (!std::isfinite(score) || score < lo || score > 1.0) {
            throw ValidationError("mask score for node " + std::to_string(id) + " out of range");
        }
    }
}

namespace {

std::vector<NodeId> original_ids(const Graph& g) {
    std::vector<NodeId> ids(static_cast<std::size_t>(g.num_nodes()));
    const auto it = g.meta().find("orig_ids");
    if (it == g.meta().end() || it->second.empty()) {
        std::iota(ids.begin(), ids.end(), 0);
        return ids;
    }
    std::istringstream in(it->second);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(in, tok, ',') && i < ids.size()) ids[i++] = std::stoi(tok);
    if (i != ids.size()) {
        std::iota(ids.begin(), ids.end(), 0);
    }
    return ids;
}

Graph extract(const Graph& g, const std::vector<NodeId>& kept, const std::vector<char>& edge_keep) {
    std::vector<NodeId> remap(static_cast<std::size_t>(g.num_nodes()), -1);
    for (std::size_t i = 0; i < kept.size(); ++i) remap[static_cast<std::size_t>(kept[i])] = static_cast<NodeId>(i);

    std::vector<NodeRecord> nodes;
    nodes.reserve(kept.size());
    for (NodeId v : kept) {
        NodeRecord r = g.node(v);
        r.id = remap[static_cast<std::size_t>(v)];
        nodes.push_back(std::move(r));
    }
    std::vector<Edge> edges;
    std::vector<std::optional<std::string>> kinds;
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
        if (!edge_keep[i]) continue;
        const Edge& e = g.edges()[i];
        const NodeId s = remap[static_cast<std::size_t>(e.src)];
        const NodeId d = remap[static_cast<std::size_t>(e.dst)];
        if (s < 0 || d < 0) continue;
        edges.push_back({s, d});
        kinds.push_back(g.edge_kind(i));
    }

    const auto parent_ids = original_ids(g);
    std::string mapping;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (i) mapping += ',';
        mapping += std::to_string(parent_ids[static_cast<std::size_t>(kept[i])]);
    }
    Meta meta = g.meta();
    meta["orig_ids"] = mapping;
    return Graph(std::move(nodes), std::move(edges), g.label(), std::move(meta), std::move(kinds));
}

std::vector<NodeId> checked_sorted(const Graph& g, std::span<const NodeId> ids) {
    std::vector<NodeId> out(ids.begin(), ids.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    for (NodeId v : out) {
        if (v < 0 || v >= g.num_nodes()) throw ValidationError("unknown node id " + std::to_string(v));
    }
    return out;
}

}  // namespace

Graph induced_subgraph(const Graph& g, std::span<const NodeId> keep) {
    return extract(g, checked_sorted(g, keep), std::vector<char>(g.edges().size(), 1));
}

Graph remove_edges(const Graph& g, std::span<const Edge> removed) {
    const std::set<Edge> drop(removed.begin(), removed.end());
    std::vector<Edge> edges;
    std::vector<std::optional<std::string>> kinds;
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
        if (drop.count(g.edges()[i])) continue;
        edges.push_back(g.edges()[i]);
        kinds.push_back(g.edge_kind(i));
    }
    return Graph(g.nodes(), std::move(edges), g.label(), g.meta(), std::move(kinds));
}

Graph edge_subgraph(const Graph& g, std::span<const Edge> edges) {
    const std::set<Edge> wanted(edges.begin(), edges.end());
    std::vector<char> keep(g.edges().size(), 0);
    std::vector<NodeId> endpoints;
    std::size_t found = 0;
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
        const Edge& e = g.edges()[i];
        if (!wanted.count(e)) continue;
        keep[i] = 1;
        ++found;
        endpoints.push_back(e.src);
        endpoints.push_back(e.dst);
    }
    if (found != wanted.size()) throw ValidationError("edge subgraph requests an edge not present in the graph");
    return extract(g, checked_sorted(g, endpoints), keep);
}

std::vector<std::vector<NodeId>> weakly_connected_components(const Graph& g) {
    const int n = g.num_nodes();
    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<NodeId>> out;
    std::vector<NodeId> stack;
    for (NodeId start = 0; start < n; ++start) {
        if (comp[static_cast<std::size_t>(start)] >= 0) continue;
        const int id = static_cast<int>(out.size());
        out.emplace_back();
        comp[static_cast<std::size_t>(start)] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const NodeId v = stack.back();
            stack.pop_back();
            out.back().push_back(v);
            for (NodeId w : g.neighbors(v)) {
                if (comp[static_cast<std::size_t>(w)] < 0) {
                    comp[static_cast<std::size_t>(w)] = id;
                    stack.push_back(w);
                }
            }
        }
        std::sort(out.back().begin(), out.back().end());
    }
    return out;
}

bool is_weakly_connected(const Graph& g) { return g.num_nodes() > 0 && weakly_connected_components(g).size() == 1; }

std::string to_string(CfgStyle style) {
    switch (style) {
        case CfgStyle::chain_heavy: return "chain-heavy";
        case CfgStyle::hub: return "hub";
        case CfgStyle::random_dag: return "random-dag";
    }
    return "random-dag";
}

CfgStyle parse_cfg_style(const std::string& text) {
    if (text == "chain-heavy") return CfgStyle::chain_heavy;
    if (text == "hub") return CfgStyle::hub;
    if (text == "random-dag") return CfgStyle::random_dag;
    throw ArgumentError("unknown generator style '" + text + "'");
}

Graph generate_synthetic_cfg(std::uint64_t seed, int n_blocks, CfgStyle style) {
    if (n_blocks < 1) throw ArgumentError("n_blocks must be at least 1");
    static const char* const kMnemonics[] = {"mov", "push", "call", "cmp", "jmp", "add", "xor", "ret"};
    constexpr std::uint64_t kMnemonicCount = std::size(kMnemonics);

    Rng rng(seed ^ (static_cast<std::uint64_t>(style) + 1) * 0x9e3779b97f4a7c15ULL);
    const auto n = static_cast<std::uint64_t>(n_blocks);
    std::set<Edge> edges;
    auto add = [&](std::uint64_t s, std::uint64_t d) { edges.insert({static_cast<NodeId>(s), static_cast<NodeId>(d)}); };

    GraphLabel label = GraphLabel::unknown;
    switch (style) {
        case CfgStyle::chain_heavy:
            label = GraphLabel::benign;
            for (std::uint64_t i = 0; i + 1 < n; ++i) {
                add(i, i + 1);
                if (i + 2 < n && rng.bernoulli(0.15)) add(i, i + 2 + rng.below(n - i - 2));
                if (i > 0 && rng.bernoulli(0.05)) add(i, rng.below(i));
            }
            break;
        case CfgStyle::hub:
            // Node 0 is a dispatcher adjacent to every other block.
            label = GraphLabel::malicious;
            for (std::uint64_t i = 1; i < n; ++i) {
                if (rng.bernoulli(0.5)) {
                    add(0, i);
                } else {
                    add(i, 0);
                }
                if (i + 1 < n && rng.bernoulli(0.3)) add(i, i + 1);
            }
            break;
        case CfgStyle::random_dag: {
            const double p = n > 1 ? std::min(1.0, 1.5 / static_cast<double>(n - 1)) : 0.0;
            for (std::uint64_t j = 1; j < n; ++j) {
                add(rng.below(j), j);
                for (std::uint64_t i = 0; i < j; ++i) {
                    if (rng.bernoulli(p)) add(i, j);
                }
            }
            break;
        }
    }

    std::vector<NodeRecord> nodes(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        nodes[i].id = static_cast<NodeId>(i);
        nodes[i].label = kMnemonics[rng.below(kMnemonicCount)];
    }
    Meta meta{{"generator.seed", std::to_string(seed)},
              {"generator.n_blocks", std::to_string(n_blocks)},
              {"generator.style", to_string(style)},
              {"sample_id", "synthetic-" + to_string(style) + "-" + std::to_string(seed) + "-" + std::to_string(n_blocks)}};
    return Graph(std::move(nodes), std::vector<Edge>(edges.begin(), edges.end()), label, std::move(meta));
}

}  // namespace cfgkit
