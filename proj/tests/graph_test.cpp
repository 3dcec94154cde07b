#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "cfgkit/errors.hpp"
#include "cfgkit/graph.hpp"
#include "cfgkit/json_io.hpp"
#include "oracles.hpp"

using namespace cfgkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "cfgkit_graph_test";
    fs::create_directories(dir);
    return dir / name;
}

std::set<Edge> edge_set(const Graph& g) { return {g.edges().begin(), g.edges().end()}; }

Graph with_random_features(const Graph& g, std::uint64_t seed, int dim) {
    Rng rng(seed);
    auto nodes = g.nodes();
    for (auto& n : nodes) {
        Eigen::VectorXd f(dim);
        for (int i = 0; i < dim; ++i) f[i] = rng.normal();
        n.feat = f;
        n.label = "blk" + std::to_string(n.id);
    }
    return g.with_nodes(nodes);
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("minimal document loads as one node and no edges") {
    const Json doc = Json::parse(R"({"schema":"cfgkit-graph/1","directed":true,"nodes":[{"id":0}],"edges":[]})");
    const Graph g = graph_from_json(doc);
    CHECK(g.num_nodes() == 1);
    CHECK(g.num_edges() == 0);
    CHECK(g.label() == GraphLabel::unknown);
}

TEST_CASE("dangling edge endpoint is a validation error naming the edge") {
    const Json doc = Json::parse(
        R"({"schema":"cfgkit-graph/1","directed":true,"nodes":[{"id":0},{"id":1}],"edges":[{"src":0,"dst":2}]})");
    try {
        (void)graph_from_json(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("(0,2)") != std::string::npos);
    }
}

TEST_CASE("malformed document names the offending path") {
    const Json doc = Json::parse(
        R"({"schema":"cfgkit-graph/1","directed":true,"nodes":[{"id":0},{"id":1}],"edges":[{"src":0,"dst":"x"}]})");
    try {
        (void)graph_from_json(doc);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("/edges/0/dst") != std::string::npos);
    }
    CHECK_THROWS_AS(graph_from_json(Json::parse(R"({"schema":"other/1"})")), ParseError);
    CHECK_THROWS_AS(graph_from_json(Json::parse(R"([1,2])")), ParseError);
}

TEST_CASE("type invariants are enforced") {
    CHECK_THROWS_AS(Graph::from_edges(2, {{0, 1}, {0, 1}}), ValidationError);
    std::vector<NodeRecord> gap{{0, {}, {}}, {2, {}, {}}};
    CHECK_THROWS_AS(Graph(gap, {}), ValidationError);
    std::vector<NodeRecord> mixed{{0, {}, Eigen::VectorXd::Ones(3)}, {1, {}, {}}};
    CHECK_THROWS_AS(Graph(mixed, {}), ValidationError);
    std::vector<NodeRecord> ragged{{0, {}, Eigen::VectorXd::Ones(3)}, {1, {}, Eigen::VectorXd::Ones(2)}};
    CHECK_THROWS_AS(Graph(ragged, {}), ValidationError);
}

TEST_CASE("self-loops are permitted and flagged in meta") {
    const Graph g = Graph::from_edges(3, {{0, 0}, {0, 1}, {2, 2}});
    CHECK(g.meta().at("self_loops") == "2");
    CHECK(g.has_self_loop(0));
    CHECK_FALSE(g.has_self_loop(1));
    CHECK(g.degree(0) == 2);
    CHECK(g.degree(2) == 1);
}

TEST_CASE("save then load a 50-node random graph is structurally equal") {
    const Graph base = with_random_features(oracle::random_graph(11, 50, 0.08, true), 5, 6);
    Meta meta = base.meta();
    meta["sample_id"] = "s-50";
    const Graph g = Graph(base.nodes(), base.edges(), GraphLabel::malicious, meta);
    const auto path = temp_file("roundtrip50.json");
    save_graph(path, g);
    const Graph back = load_graph(path);
    CHECK(structurally_equal(g, back));
    CHECK(back == g);
}

TEST_CASE("unknown top-level fields survive in meta") {
    const Json doc = Json::parse(
        R"({"schema":"cfgkit-graph/1","directed":true,"nodes":[{"id":0},{"id":1}],
            "edges":[{"src":0,"dst":1,"kind":"jump"}],"source_hash":"abc","graph_label":"benign"})");
    const Graph g = graph_from_json(doc);
    CHECK(g.meta().at("extra.source_hash") == "\"abc\"");
    CHECK(g.edge_kind(0).value() == "jump");
    const Graph back = graph_from_json(to_json(g));
    CHECK(back == g);
}

TEST_CASE("induced_subgraph examples") {
    const Graph tri = Graph::from_edges(3, {{0, 1}, {1, 2}, {2, 0}});
    const std::vector<NodeId> keep01{0, 1};
    const Graph sub = induced_subgraph(tri, keep01);
    CHECK(sub.num_nodes() == 2);
    CHECK(sub.num_edges() == 1);
    CHECK(sub.has_edge(0, 1));

    const std::vector<NodeId> all{0, 1, 2};
    CHECK(structurally_equal(induced_subgraph(tri, all), tri));

    const std::vector<NodeId> bad{0, 7};
    CHECK_THROWS_AS(induced_subgraph(tri, bad), ValidationError);
}

TEST_CASE("induced_subgraph matches the brute-force endpoint filter") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const Graph g = oracle::random_graph(seed, 10, 0.3, true);
        Rng rng(seed * 31);
        std::vector<NodeId> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        rng.shuffle(ids);
        std::vector<NodeId> keep(ids.begin(), ids.begin() + 5);
        std::sort(keep.begin(), keep.end());

        std::set<Edge> expected;
        for (const auto& e : g.edges()) {
            const auto a = std::find(keep.begin(), keep.end(), e.src);
            const auto b = std::find(keep.begin(), keep.end(), e.dst);
            if (a != keep.end() && b != keep.end()) {
                expected.insert({static_cast<NodeId>(a - keep.begin()), static_cast<NodeId>(b - keep.begin())});
            }
        }
        const Graph sub = induced_subgraph(g, keep);
        CHECK(edge_set(sub) == expected);
        CHECK(sub.meta().at("orig_ids").size() > 0);
        // Idempotent for a fixed keep set (on the re-indexed graph: keep everything).
        std::vector<NodeId> all(5);
        std::iota(all.begin(), all.end(), 0);
        CHECK(structurally_equal(induced_subgraph(sub, all), sub));
    }
}

TEST_CASE("orig_ids compose across repeated extraction") {
    const Graph g = Graph::from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
    const std::vector<NodeId> first{1, 3, 4, 5};
    const std::vector<NodeId> second{1, 3};
    const Graph twice = induced_subgraph(induced_subgraph(g, first), second);
    CHECK(twice.meta().at("orig_ids") == "3,5");
}

TEST_CASE("weakly_connected_components examples") {
    const Graph g = Graph::from_edges(4, {{0, 1}, {2, 3}});
    const auto comps = weakly_connected_components(g);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0] == std::vector<NodeId>{0, 1});
    CHECK(comps[1] == std::vector<NodeId>{2, 3});
    CHECK(weakly_connected_components(Graph()).empty());
}

TEST_CASE("components equal the union-find oracle and form a partition") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        const Graph g = oracle::random_graph(seed, 30, 0.04);
        const auto comps = weakly_connected_components(g);
        const auto expected = oracle::union_find_components(g);
        REQUIRE(comps.size() == expected.size());
        std::size_t total = 0;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            CHECK_FALSE(comps[i].empty());
            CHECK(std::set<int>(comps[i].begin(), comps[i].end()) == expected[i]);
            total += comps[i].size();
        }
        CHECK(total == 30);
    }
}

TEST_CASE("generator: single block, determinism, hub degree") {
    for (auto style : {CfgStyle::chain_heavy, CfgStyle::hub, CfgStyle::random_dag}) {
        const Graph one = generate_synthetic_cfg(7, 1, style);
        CHECK(one.num_nodes() == 1);
        CHECK(one.num_edges() == 0);
        CHECK(generate_synthetic_cfg(42, 25, style) == generate_synthetic_cfg(42, 25, style));
    }
    const Graph hub = generate_synthetic_cfg(3, 20, CfgStyle::hub);
    int max_deg = 0;
    for (NodeId v = 0; v < hub.num_nodes(); ++v) max_deg = std::max(max_deg, hub.degree(v));
    CHECK(max_deg >= 10);
    CHECK_THROWS_AS(generate_synthetic_cfg(1, 0, CfgStyle::hub), ArgumentError);
}

TEST_CASE("hub generator keeps its degree guarantee across seeds and sizes") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (int n : {2, 3, 9, 40}) {
            const Graph g = generate_synthetic_cfg(seed, n, CfgStyle::hub);
            int max_deg = 0;
            for (NodeId v = 0; v < g.num_nodes(); ++v) max_deg = std::max(max_deg, g.degree(v));
            CHECK(2 * max_deg >= n);
        }
    }
}

TEST_CASE("remove_edges and edge_subgraph") {
    const Graph g = Graph::from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
    const std::vector<Edge> drop{{1, 2}};
    const Graph r = remove_edges(g, drop);
    CHECK(r.num_nodes() == 5);
    CHECK(r.num_edges() == 3);
    CHECK_FALSE(r.has_edge(1, 2));

    const std::vector<Edge> pick{{3, 4}, {1, 2}};
    const Graph s = edge_subgraph(g, pick);
    CHECK(s.num_nodes() == 4);
    CHECK(s.edges() == std::vector<Edge>{{0, 1}, {2, 3}});
    CHECK(s.meta().at("orig_ids") == "1,2,3,4");

    const std::vector<Edge> missing{{4, 0}};
    CHECK_THROWS_AS(edge_subgraph(g, missing), ValidationError);
}

TEST_CASE("masks are validated against the graph") {
    const Graph g = Graph::from_edges(3, {{0, 1}});
    CHECK_NOTHROW(validate_mask(NodeMask{{{0, 0.5}, {2, 1.0}}}, g));
    CHECK_THROWS_AS(validate_mask(NodeMask{{{3, 0.5}}}, g), ValidationError);
    CHECK_THROWS_AS(validate_mask(NodeMask{{{0, 1.5}}}, g), ValidationError);
    CHECK_THROWS_AS(validate_mask(NodeMask{{{0, -0.5}}}, g), ValidationError);
    CHECK_NOTHROW(validate_mask(NodeMask{{{0, -0.5}}}, g, true));
    CHECK_THROWS_AS(validate_mask(NodeMask{{{0, std::nan("")}}}, g, true), ValidationError);
}

}  // TEST_SUITE
