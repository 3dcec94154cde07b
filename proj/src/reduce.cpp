#include "cfgkit/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>

#include "cfgkit/errors.hpp"

namespace cfgkit {

namespace {

WalkCount checked_add(WalkCount a, WalkCount b) {
    WalkCount r;
    if (__builtin_add_overflow(a, b, &r)) throw ArgumentError("walk count overflow");
    return r;
}

WalkCount checked_mul(WalkCount a, WalkCount b) {
    WalkCount r;
    if (__builtin_mul_overflow(a, b, &r)) throw ArgumentError("walk count overflow");
    return r;
}

void check_length(int L) {
    if (L < 1 || L > kMaxWalkLength) {
        throw ArgumentError("walk length must be in 1.." + std::to_string(kMaxWalkLength) + ", got " +
                            std::to_string(L));
    }
}

}  // namespace

std::string to_decimal(WalkCount value) {
    if (value == 0) return "0";
    std::string out;
    while (value > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
        value /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::string to_string(WalkMode mode) { return mode == WalkMode::exact ? "exact" : "upto"; }

WalkMode parse_walk_mode(const std::string& text) {
    if (text == "exact") return WalkMode::exact;
    if (text == "upto") return WalkMode::upto;
    throw ArgumentError("unknown walk mode '" + text + "'");
}

std::vector<std::vector<WalkCount>> walk_counts(const Graph& g, int max_len, bool outgoing) {
    const auto n = static_cast<std::size_t>(g.num_nodes());
    std::vector<std::vector<WalkCount>> counts(static_cast<std::size_t>(max_len) + 1);
    counts[0].assign(n, 1);
    for (int l = 1; l <= max_len; ++l) {
        const auto& prev = counts[static_cast<std::size_t>(l) - 1];
        auto& cur = counts[static_cast<std::size_t>(l)];
        cur.assign(n, 0);
        for (std::size_t v = 0; v < n; ++v) {
            const auto next = outgoing ? g.out_neighbors(static_cast<NodeId>(v)) : g.in_neighbors(static_cast<NodeId>(v));
            WalkCount sum = 0;
            for (NodeId w : next) sum = checked_add(sum, prev[static_cast<std::size_t>(w)]);
            cur[v] = sum;
        }
    }
    return counts;
}

WalkScoreTable walk_scores(const Graph& g, int L, WalkMode mode) {
    check_length(L);
    const auto out = walk_counts(g, L, true);
    const auto in = walk_counts(g, L, false);
    WalkScoreTable table{L, mode, std::vector<WalkCount>(static_cast<std::size_t>(g.num_nodes()), 0)};
    const int first = mode == WalkMode::exact ? L : 1;
    for (std::size_t v = 0; v < table.score.size(); ++v) {
        WalkCount s = 0;
        for (int l = first; l <= L; ++l) {
            s = checked_add(s, checked_add(out[static_cast<std::size_t>(l)][v], in[static_cast<std::size_t>(l)][v]));
        }
        table.score[v] = s;
    }
    return table;
}

EdgeWalkIndex edge_walk_index(const Graph& g, int L) {
    check_length(L);
    const auto out = walk_counts(g, L - 1, true);
    const auto in = walk_counts(g, L - 1, false);
    // suffix[b][v] = walks of length 0..b starting at v.
    std::vector<std::vector<WalkCount>> suffix = out;
    for (std::size_t b = 1; b < suffix.size(); ++b) {
        for (std::size_t v = 0; v < suffix[b].size(); ++v) suffix[b][v] = checked_add(suffix[b][v], suffix[b - 1][v]);
    }
    EdgeWalkIndex result{L, g.edges(), {}};
    result.index.reserve(g.edges().size());
    for (const Edge& e : g.edges()) {
        WalkCount total = 0;
        for (int a = 0; a <= L - 1; ++a) {
            const auto head = in[static_cast<std::size_t>(a)][static_cast<std::size_t>(e.src)];
            const auto tail = suffix[static_cast<std::size_t>(L - 1 - a)][static_cast<std::size_t>(e.dst)];
            total = checked_add(total, checked_mul(head, tail));
        }
        result.index.push_back(total);
    }
    return result;
}

Graph leaf_prune(const Graph& g, int rounds) {
    if (rounds < 1) throw ArgumentError("leaf_prune needs at least one round");
    Graph cur = g;
    for (int r = 0; r < rounds; ++r) {
        std::vector<NodeId> keep;
        for (NodeId v = 0; v < cur.num_nodes(); ++v) {
            if (cur.degree(v) > 1) keep.push_back(v);
        }
        if (static_cast<int>(keep.size()) == cur.num_nodes()) break;
        cur = induced_subgraph(cur, keep);
    }
    return cur;
}

Graph component_prune(const Graph& g, const ComponentPolicy& policy) {
    const auto comps = weakly_connected_components(g);
    std::vector<NodeId> keep;
    if (policy.kind == ComponentPolicy::Kind::keep_largest) {
        // Components come ordered by smallest member, so the first maximum wins ties.
        const std::vector<NodeId>* best = nullptr;
        for (const auto& c : comps) {
            if (!best || c.size() > best->size()) best = &c;
        }
        if (best) keep = *best;
    } else {
        if (policy.min_size < 1) throw ArgumentError("min-size must be at least 1");
        for (const auto& c : comps) {
            if (static_cast<int>(c.size()) >= policy.min_size) keep.insert(keep.end(), c.begin(), c.end());
        }
    }
    return induced_subgraph(g, keep);
}

Graph k_core(const Graph& g, int k) {
    if (k < 0) throw ArgumentError("k must be nonnegative");
    const int n = g.num_nodes();
    std::vector<int> deg(static_cast<std::size_t>(n));
    std::vector<char> removed(static_cast<std::size_t>(n), 0);
    std::deque<NodeId> queue;
    for (NodeId v = 0; v < n; ++v) {
        deg[static_cast<std::size_t>(v)] = g.degree(v);
        if (deg[static_cast<std::size_t>(v)] < k) {
            removed[static_cast<std::size_t>(v)] = 1;
            queue.push_back(v);
        }
    }
    while (!queue.empty()) {
        const NodeId v = queue.front();
        queue.pop_front();
        for (NodeId w : g.neighbors(v)) {
            if (removed[static_cast<std::size_t>(w)]) continue;
            if (--deg[static_cast<std::size_t>(w)] < k) {
                removed[static_cast<std::size_t>(w)] = 1;
                queue.push_back(w);
            }
        }
    }
    std::vector<NodeId> keep;
    for (NodeId v = 0; v < n; ++v) {
        if (!removed[static_cast<std::size_t>(v)]) keep.push_back(v);
    }
    return induced_subgraph(g, keep);
}

Graph wis_sparsify(const Graph& g, const WisParams& params) {
    check_length(params.walk_length);
    if (!(params.remove_fraction >= 0.0 && params.remove_fraction < 1.0)) {
        throw ArgumentError("remove_fraction must be in [0,1)");
    }
    if (params.recompute_every < 1) throw ArgumentError("recompute_every must be positive");

    auto to_remove = static_cast<int>(std::floor(params.remove_fraction * g.num_edges()));
    Graph cur = g;
    while (to_remove > 0) {
        const auto wi = edge_walk_index(cur, params.walk_length);
        std::vector<std::size_t> order(wi.edges.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (wi.index[a] != wi.index[b]) return wi.index[a] < wi.index[b];
            return wi.edges[a] < wi.edges[b];
        });
        const int batch = std::min(to_remove, params.recompute_every);
        std::vector<Edge> drop;
        for (int i = 0; i < batch; ++i) drop.push_back(wi.edges[order[static_cast<std::size_t>(i)]]);
        cur = remove_edges(cur, drop);
        to_remove -= batch;
    }
    return cur;
}

std::string to_string(NodeRole role) {
    switch (role) {
        case NodeRole::nexus: return "nexus";
        case NodeRole::connector: return "connector";
        case NodeRole::sparse: return "sparse";
    }
    return "sparse";
}

std::vector<NodeId> NodePartition::members(NodeRole r) const {
    std::vector<NodeId> out;
    for (std::size_t v = 0; v < role.size(); ++v) {
        if (role[v] == r) out.push_back(static_cast<NodeId>(v));
    }
    return out;
}

WalkCount nexus_threshold(std::vector<WalkCount> scores, double rho) {
    if (scores.empty()) throw ArgumentError("cannot take a quantile of no scores");
    if (!(rho > 0.0 && rho < 1.0)) throw ArgumentError("nexus quantile must be in (0,1)");
    std::sort(scores.begin(), scores.end());
    const double pos = std::ceil(rho * static_cast<double>(scores.size()) - 1e-9);
    const auto idx = std::min(scores.size() - 1, static_cast<std::size_t>(std::max(0.0, pos)));
    return scores[idx];
}

NodePartition ncp_partition(const Graph& g, const NcpParams& params) {
    if (g.empty()) throw ArgumentError("NCP needs a nonempty graph");
    if (!(params.jaccard_threshold >= 0.0 && params.jaccard_threshold <= 1.0)) {
        throw ArgumentError("Jaccard threshold must be in [0,1]");
    }
    const auto table = walk_scores(g, params.walk_length, params.walk_mode);
    const WalkCount threshold = nexus_threshold(table.score, params.nexus_quantile);

    NodePartition p;
    p.role.assign(static_cast<std::size_t>(g.num_nodes()), NodeRole::sparse);
    for (std::size_t v = 0; v < p.role.size(); ++v) {
        if (table.score[v] >= threshold) p.role[v] = NodeRole::nexus;
    }
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        if (p.role[static_cast<std::size_t>(v)] == NodeRole::nexus) continue;
        for (NodeId w : g.neighbors(v)) {
            if (p.role[static_cast<std::size_t>(w)] == NodeRole::nexus) {
                p.role[static_cast<std::size_t>(v)] = NodeRole::connector;
                break;
            }
        }
    }
    return p;
}

double jaccard(std::span<const NodeId> a, std::span<const NodeId> b) {
    std::size_t common = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++common;
            ++i;
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - common;
    return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

NcpResult ncp_reduce(const Graph& g, const NcpParams& params) {
    NcpResult result;
    result.partition = ncp_partition(g, params);
    result.connector_jaccard.assign(static_cast<std::size_t>(g.num_nodes()), 0.0);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        const NodeRole role = result.partition.role[static_cast<std::size_t>(v)];
        if (role == NodeRole::nexus) {
            result.kept.push_back(v);
            continue;
        }
        if (role == NodeRole::sparse) continue;
        double best = 0.0;
        for (NodeId u : g.neighbors(v)) {
            if (result.partition.role[static_cast<std::size_t>(u)] == NodeRole::nexus) {
                best = std::max(best, jaccard(g.neighbors(v), g.neighbors(u)));
            }
        }
        result.connector_jaccard[static_cast<std::size_t>(v)] = best;
        if (!(best < params.jaccard_threshold)) result.kept.push_back(v);
    }
    result.graph = induced_subgraph(g, result.kept);
    return result;
}

}  // namespace cfgkit
