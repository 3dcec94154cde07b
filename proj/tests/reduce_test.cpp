#include <doctest.h>

#include <numeric>
#include <set>

#include "cfgkit/errors.hpp"
#include "cfgkit/reduce.hpp"
#include "oracles.hpp"

using namespace cfgkit;

namespace {

std::set<Edge> edge_set(const Graph& g) { return {g.edges().begin(), g.edges().end()}; }

std::vector<int> orig_ids(const Graph& sub) {
    std::vector<int> ids;
    const auto it = sub.meta().find("orig_ids");
    if (it == sub.meta().end()) {
        // Nothing was removed; the graph is its own mapping.
        for (int v = 0; v < sub.num_nodes(); ++v) ids.push_back(v);
        return ids;
    }
    if (it->second.empty()) return ids;
    std::string tok;
    for (char c : it->second + ",") {
        if (c == ',') {
            ids.push_back(std::stoi(tok));
            tok.clear();
        } else {
            tok.push_back(c);
        }
    }
    return ids;
}

// sub must be the induced subgraph of g on the nodes listed in orig_ids.
void check_induced(const Graph& g, const Graph& sub) {
    const auto ids = orig_ids(sub);
    REQUIRE(static_cast<int>(ids.size()) == sub.num_nodes());
    std::set<Edge> expected;
    for (const auto& e : g.edges()) {
        const auto a = std::find(ids.begin(), ids.end(), e.src);
        const auto b = std::find(ids.begin(), ids.end(), e.dst);
        if (a != ids.end() && b != ids.end()) {
            expected.insert({static_cast<int>(a - ids.begin()), static_cast<int>(b - ids.begin())});
        }
    }
    CHECK(edge_set(sub) == expected);
}

Graph bidirected_star(int spokes) {
    std::vector<Edge> edges;
    for (int i = 1; i <= spokes; ++i) {
        edges.push_back({0, i});
        edges.push_back({i, 0});
    }
    return Graph::from_edges(spokes + 1, edges);
}

Graph cycle(int n) {
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
    return Graph::from_edges(n, edges);
}

std::vector<std::int64_t> as_int64(const std::vector<WalkCount>& v) {
    return {v.begin(), v.end()};
}

}  // namespace

TEST_SUITE("reduce") {

TEST_CASE("leaf_prune examples") {
    const Graph tri = cycle(3);
    CHECK(structurally_equal(leaf_prune(tri, 5), tri));

    const Graph star = Graph::from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
    const Graph r1 = leaf_prune(star, 1);
    CHECK(r1.num_nodes() == 1);
    CHECK(orig_ids(r1) == std::vector<int>{0});
    CHECK(leaf_prune(star, 2).num_nodes() == 0);

    const Graph path = Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
    const Graph p1 = leaf_prune(path, 1);
    CHECK(orig_ids(p1) == std::vector<int>{1, 2});
    CHECK(edge_set(p1) == std::set<Edge>{{0, 1}});

    CHECK_THROWS_AS(leaf_prune(path, 0), ArgumentError);
}

TEST_CASE("leaf_prune node count is nonincreasing per round") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Graph g = generate_synthetic_cfg(seed, 30, CfgStyle::chain_heavy);
        int prev = g.num_nodes();
        for (int r = 1; r <= 6; ++r) {
            const Graph out = leaf_prune(g, r);
            CHECK(out.num_nodes() <= prev);
            prev = out.num_nodes();
            check_induced(g, out);
        }
    }
}

TEST_CASE("component_prune examples") {
    // Sizes {5,2}: path on 0..4 plus edge 5-6.
    const Graph g52 = Graph::from_edges(7, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {5, 6}});
    CHECK(orig_ids(component_prune(g52, ComponentPolicy::keep_largest())) == std::vector<int>{0, 1, 2, 3, 4});

    // Sizes {3,3}: the component holding node 0 wins the tie even when listed second in edges.
    const Graph g33 = Graph::from_edges(6, {{1, 3}, {3, 5}, {0, 2}, {2, 4}});
    CHECK(orig_ids(component_prune(g33, ComponentPolicy::keep_largest())) == std::vector<int>{0, 2, 4});

    // Sizes {4,2,1}, min-size(2) keeps 6 nodes.
    const Graph g421 = Graph::from_edges(7, {{0, 1}, {1, 2}, {2, 3}, {4, 5}});
    const Graph kept = component_prune(g421, ComponentPolicy::at_least(2));
    CHECK(kept.num_nodes() == 6);
    check_induced(g421, kept);

    CHECK_THROWS_AS(component_prune(g421, ComponentPolicy::at_least(0)), ArgumentError);
    CHECK(component_prune(Graph(), ComponentPolicy::keep_largest()).num_nodes() == 0);
}

TEST_CASE("k_core examples") {
    const Graph tri_pendant = Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}});
    const Graph core = k_core(tri_pendant, 2);
    CHECK(orig_ids(core) == std::vector<int>{0, 1, 2});
    CHECK(core.num_edges() == 3);

    const Graph g = oracle::random_graph(9, 12, 0.2, true);
    CHECK(structurally_equal(k_core(g, 0), g));
    CHECK_THROWS_AS(k_core(g, -1), ArgumentError);
}

TEST_CASE("self-loop counts once toward k-core degree") {
    // Node 1 has one neighbour plus a self-loop: degree 2.
    const Graph g = Graph::from_edges(3, {{0, 1}, {1, 1}, {1, 2}, {2, 0}});
    CHECK(k_core(g, 2).num_nodes() == 3);
    const Graph h = Graph::from_edges(2, {{0, 1}, {1, 1}});
    CHECK(orig_ids(k_core(h, 2)).empty());
    CHECK(k_core(h, 1).num_nodes() == 2);
}

TEST_CASE("k_core equals exhaustive subset search and is a fixpoint") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        for (int k : {1, 2, 3, 4}) {
            const Graph g = oracle::random_graph(seed * 7 + static_cast<std::uint64_t>(k), 15, 0.17, seed % 3 == 0);
            const Graph core = k_core(g, k);
            const auto ids = orig_ids(core);
            CHECK(std::set<int>(ids.begin(), ids.end()) == oracle::brute_k_core(g, k));
            check_induced(g, core);
            CHECK(structurally_equal(k_core(core, k), core));
        }
    }
}

TEST_CASE("edge_walk_index examples") {
    const auto single = edge_walk_index(Graph::from_edges(2, {{0, 1}}), 1);
    REQUIRE(single.index.size() == 1);
    CHECK(single.index[0] == 1);

    for (int L = 1; L <= 8; ++L) {
        const auto wi = edge_walk_index(cycle(4), L);
        for (const auto v : wi.index) CHECK(v == wi.index[0]);
        // Every walk of length l traverses l edge positions, spread evenly over 4 edges.
        WalkCount total = 0;
        for (int l = 1; l <= L; ++l) total += static_cast<WalkCount>(4 * l);
        CHECK(wi.index[0] * 4 == total);
    }
    CHECK_THROWS_AS(edge_walk_index(cycle(4), 0), ArgumentError);
    CHECK_THROWS_AS(edge_walk_index(cycle(4), 9), ArgumentError);
}

TEST_CASE("edge_walk_index matches exhaustive walk enumeration") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        const Graph g = oracle::random_graph(seed, 8, 0.3, seed % 4 == 0);
        for (int L = 1; L <= 4; ++L) {
            const auto wi = edge_walk_index(g, L);
            const auto expected = oracle::edge_traversals(g, L);
            REQUIRE(wi.edges == g.edges());
            for (std::size_t i = 0; i < wi.edges.size(); ++i) {
                CHECK(static_cast<std::int64_t>(wi.index[i]) == expected.at(wi.edges[i]));
            }
        }
    }
}

TEST_CASE("walk scores match exhaustive enumeration in both modes") {
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        const Graph g = oracle::random_graph(seed, 7, 0.35, seed % 2 == 0);
        for (int L = 1; L <= 4; ++L) {
            CHECK(as_int64(walk_scores(g, L).score) == oracle::walk_scores(g, L));
            std::vector<std::int64_t> upto(7, 0);
            for (int l = 1; l <= L; ++l) {
                const auto s = oracle::walk_scores(g, l);
                for (int v = 0; v < 7; ++v) upto[static_cast<std::size_t>(v)] += s[static_cast<std::size_t>(v)];
            }
            CHECK(as_int64(walk_scores(g, L, WalkMode::upto).score) == upto);
        }
    }
}

TEST_CASE("wide walk counts stay exact") {
    // Complete digraph with self-loops on 64 nodes: 64^8 walks each way at L=8.
    std::vector<Edge> edges;
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) edges.push_back({i, j});
    }
    const Graph k64 = Graph::from_edges(64, edges);
    const auto table = walk_scores(k64, 8);
    CHECK(table.score[0] == static_cast<WalkCount>(2) * (static_cast<WalkCount>(1) << 48));
    CHECK(to_decimal(table.score[0]) == "562949953421312");
    CHECK(to_decimal(0) == "0");
}

TEST_CASE("wis_sparsify examples") {
    const Graph g = oracle::random_graph(5, 10, 0.3);
    CHECK(structurally_equal(wis_sparsify(g, {0.0, 3, 1}), g));

    const Graph c4 = cycle(4);
    const Graph r = wis_sparsify(c4, {0.25, 2, 1});
    CHECK(r.num_nodes() == 4);
    CHECK(edge_set(r) == std::set<Edge>{{1, 2}, {2, 3}, {3, 0}});

    CHECK_THROWS_AS(wis_sparsify(g, {1.0, 3, 1}), ArgumentError);
    CHECK_THROWS_AS(wis_sparsify(g, {-0.1, 3, 1}), ArgumentError);
    CHECK_THROWS_AS(wis_sparsify(g, {0.2, 3, 0}), ArgumentError);
}

TEST_CASE("wis_sparsify equals the greedy enumeration simulation") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const Graph g = oracle::random_graph(seed * 13, 10, 0.25);
        for (int L : {1, 2, 3}) {
            std::set<Edge> current = edge_set(g);
            const int to_remove = static_cast<int>(0.2 * g.num_edges());
            for (int step = 0; step < to_remove; ++step) {
                const Graph cur = Graph::from_edges(10, {current.begin(), current.end()});
                const auto counts = oracle::edge_traversals(cur, L);
                auto best = counts.begin();
                for (auto it = counts.begin(); it != counts.end(); ++it) {
                    if (it->second < best->second) best = it;  // map order breaks ties by (src,dst)
                }
                current.erase(best->first);
            }
            const Graph out = wis_sparsify(g, {0.2, L, 1});
            CHECK(out.num_nodes() == g.num_nodes());
            CHECK(edge_set(out) == current);
        }
    }
}

TEST_CASE("wis_sparsify with batched recomputation removes the requested count") {
    const Graph g = oracle::random_graph(77, 12, 0.3);
    const Graph out = wis_sparsify(g, {0.5, 3, 4});
    CHECK(out.num_edges() == g.num_edges() - g.num_edges() / 2);
    for (const auto& e : out.edges()) CHECK(g.has_edge(e));
    CHECK(wis_sparsify(g, {0.5, 3, 4}) == out);
}

TEST_CASE("nexus threshold takes the ceil(rho*n) order statistic") {
    CHECK(nexus_threshold({1, 2, 3, 4, 5}, 0.8) == 5);
    CHECK(nexus_threshold({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.8) == 9);
    CHECK(nexus_threshold({5, 1}, 0.5) == 5);
    CHECK(nexus_threshold({3}, 0.99) == 3);
    CHECK_THROWS_AS(nexus_threshold({}, 0.5), ArgumentError);
    CHECK_THROWS_AS(nexus_threshold({1}, 1.0), ArgumentError);
}

TEST_CASE("bidirected hub: exact-length L=2 scores tie, so every node is Nexus") {
    const Graph hub = bidirected_star(5);
    const auto brute = oracle::walk_scores(hub, 2);
    CHECK(brute == std::vector<std::int64_t>(6, 10));
    CHECK(as_int64(walk_scores(hub, 2).score) == brute);

    const auto p = ncp_partition(hub, {2, 0.8, 0.1, WalkMode::exact});
    CHECK(p.members(NodeRole::nexus).size() == 6);
}

TEST_CASE("bidirected hub: center dominates with cumulative walks or odd length") {
    const Graph hub = bidirected_star(5);
    const auto upto = ncp_partition(hub, {2, 0.8, 0.1, WalkMode::upto});
    CHECK(upto.members(NodeRole::nexus) == std::vector<NodeId>{0});
    CHECK(upto.members(NodeRole::connector) == std::vector<NodeId>{1, 2, 3, 4, 5});

    const auto odd = ncp_partition(hub, {3, 0.8, 0.1, WalkMode::exact});
    CHECK(odd.members(NodeRole::nexus) == std::vector<NodeId>{0});
    CHECK(odd.members(NodeRole::connector).size() == 5);
}

TEST_CASE("directed cycle: all scores equal, all Nexus") {
    for (double rho : {0.1, 0.5, 0.8, 0.95}) {
        const auto p = ncp_partition(cycle(7), {3, rho, 0.1, WalkMode::exact});
        CHECK(p.members(NodeRole::nexus).size() == 7);
    }
}

TEST_CASE("isolated node scores 0 and is Sparse") {
    const Graph g = Graph::from_edges(4, {{0, 1}, {1, 2}});
    CHECK(walk_scores(g, 1).score[3] == 0);
    const auto p = ncp_partition(g, {1, 0.8, 0.1, WalkMode::exact});
    CHECK(p.role[3] == NodeRole::sparse);
    CHECK(p.members(NodeRole::nexus) == std::vector<NodeId>{1});
    CHECK(p.members(NodeRole::connector) == std::vector<NodeId>{0, 2});
    CHECK_THROWS_AS(ncp_partition(Graph(), {}), ArgumentError);
}

TEST_CASE("partition is total and every Connector touches a Nexus node") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const Graph g = generate_synthetic_cfg(seed, 25, seed % 2 ? CfgStyle::random_dag : CfgStyle::chain_heavy);
        const auto p = ncp_partition(g, {});
        REQUIRE(static_cast<int>(p.role.size()) == g.num_nodes());
        for (NodeId v = 0; v < g.num_nodes(); ++v) {
            bool near_nexus = false;
            for (NodeId w : g.neighbors(v)) near_nexus |= p.role[static_cast<std::size_t>(w)] == NodeRole::nexus;
            if (p.role[static_cast<std::size_t>(v)] == NodeRole::connector) CHECK(near_nexus);
            if (p.role[static_cast<std::size_t>(v)] == NodeRole::sparse) CHECK_FALSE(near_nexus);
        }
    }
}

TEST_CASE("ncp_partition is label-invariant") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Graph g = oracle::random_graph(seed, 9, 0.2);
        std::vector<NodeId> perm(9);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(seed + 1000);
        rng.shuffle(perm);
        const Graph h = oracle::relabeled(g, perm);
        for (auto mode : {WalkMode::exact, WalkMode::upto}) {
            const auto pg = ncp_partition(g, {2, 0.7, 0.1, mode});
            const auto ph = ncp_partition(h, {2, 0.7, 0.1, mode});
            for (int v = 0; v < 9; ++v) {
                CHECK(pg.role[static_cast<std::size_t>(v)] == ph.role[static_cast<std::size_t>(perm[static_cast<std::size_t>(v)])]);
            }
        }
    }
}

TEST_CASE("jaccard on sorted id lists") {
    const std::vector<NodeId> a{1, 2, 3}, b{2, 3, 4}, none{};
    CHECK(jaccard(a, b) == doctest::Approx(0.5));
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, none) == 0.0);
    CHECK(jaccard(none, none) == 0.0);
}

// Hub 0 joined both ways to 1..4, plus 1 -> 2. Scores at L=2 are
// {10, 9, 9, 8, 8}, so only the hub is Nexus. Gamma(0) = {1,2,3,4},
// Gamma(1) = {0,2}, Gamma(2) = {0,1}: J = 1/5 for nodes 1 and 2, 0 for 3 and 4.
TEST_CASE("Jaccard refinement on a hand-computed 5-node instance") {
    const Graph g = Graph::from_edges(5, {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}, {0, 4}, {4, 0}, {1, 2}});
    CHECK(as_int64(walk_scores(g, 2).score) == std::vector<std::int64_t>{10, 9, 9, 8, 8});

    const auto base = ncp_reduce(g, {2, 0.8, 0.1, WalkMode::exact});
    CHECK(base.partition.members(NodeRole::nexus) == std::vector<NodeId>{0});
    CHECK(base.connector_jaccard[1] == doctest::Approx(0.2));
    CHECK(base.connector_jaccard[2] == doctest::Approx(0.2));
    CHECK(base.connector_jaccard[3] == 0.0);
    CHECK(base.kept == std::vector<NodeId>{0, 1, 2});
    check_induced(g, base.graph);

    CHECK(ncp_reduce(g, {2, 0.8, 0.2, WalkMode::exact}).kept == std::vector<NodeId>{0, 1, 2});
    CHECK(ncp_reduce(g, {2, 0.8, 0.25, WalkMode::exact}).kept == std::vector<NodeId>{0});
    CHECK(ncp_reduce(g, {2, 0.8, 1.0, WalkMode::exact}).kept == std::vector<NodeId>{0});
    CHECK(ncp_reduce(g, {2, 0.8, 0.0, WalkMode::exact}).kept == std::vector<NodeId>{0, 1, 2, 3, 4});
}

// K4 minus edge {1,3}, bidirected. Scores {14,12,14,12} make 0 and 2 Nexus;
// Gamma(1) = {0,2} against Gamma(0) = {1,2,3} or Gamma(2) = {0,1,3} gives J = 1/4.
TEST_CASE("Jaccard equal to the threshold is kept") {
    const Graph g = Graph::from_edges(4, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}, {3, 0}, {0, 3}, {0, 2}, {2, 0}});
    const auto r = ncp_reduce(g, {2, 0.5, 0.25, WalkMode::exact});
    CHECK(r.partition.members(NodeRole::nexus) == std::vector<NodeId>{0, 2});
    CHECK(r.connector_jaccard[1] == doctest::Approx(0.25));
    CHECK(r.kept == std::vector<NodeId>{0, 1, 2, 3});
    CHECK(ncp_reduce(g, {2, 0.5, 0.3, WalkMode::exact}).kept == std::vector<NodeId>{0, 2});
}

TEST_CASE("tau 0 keeps Nexus and every Connector; all-Nexus graph is unchanged") {
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        const Graph g = generate_synthetic_cfg(seed, 30, CfgStyle::random_dag);
        const auto r = ncp_reduce(g, {2, 0.8, 0.0, WalkMode::exact});
        std::vector<NodeId> expected;
        for (NodeId v = 0; v < g.num_nodes(); ++v) {
            if (r.partition.role[static_cast<std::size_t>(v)] != NodeRole::sparse) expected.push_back(v);
        }
        CHECK(r.kept == expected);
        check_induced(g, r.graph);
    }
    const Graph c = cycle(6);
    const auto r = ncp_reduce(c, {2, 0.8, 0.5, WalkMode::exact});
    CHECK(structurally_equal(r.graph, c));
}

}  // TEST_SUITE
