#include <doctest.h>

#include <chrono>

#include "cfgkit/adapter.hpp"
#include "cfgkit/errors.hpp"
#include "cfgkit/surrogate.hpp"

using namespace cfgkit;
using namespace std::chrono_literals;

namespace {

std::vector<std::string> mock(std::initializer_list<std::string> flags = {}) {
    std::vector<std::string> cmd{MOCK_ADAPTER_PATH};
    cmd.insert(cmd.end(), flags);
    return cmd;
}

const Graph kTriangle = Graph::from_edges(3, {{0, 1}, {1, 2}, {2, 0}});

template <typename E, typename F>
std::string message_of(F&& f) {
    try {
        f();
    } catch (const E& e) {
        return e.what();
    }
    return "<no exception>";
}

}  // namespace

TEST_SUITE("adapter") {

TEST_CASE("hello handshake records name and ops") {
    Adapter a(mock());
    CHECK(a.info().name == "mock");
    CHECK(a.info().version == "1.0");
    CHECK(a.info().supports("predict"));
    CHECK(a.info().supports("explain"));
    CHECK(a.name() == "adapter:mock");
}

TEST_CASE("predict returns the echoed distribution") {
    Adapter a(mock());
    CHECK(a.predict(kTriangle) == ClassProbs(0.25, 0.75));
    CHECK(a.predict(kTriangle) == ClassProbs(0.25, 0.75));
}

TEST_CASE("invalid probabilities are a validation error") {
    Adapter a(mock({"--probs", "0.3,0.5"}));
    CHECK_THROWS_AS(a.predict(kTriangle), ValidationError);
    Adapter neg(mock({"--probs", "-0.5,1.5"}));
    CHECK_THROWS_AS(neg.predict(kTriangle), ValidationError);
}

TEST_CASE("ok=false surfaces the error text verbatim") {
    Adapter a(mock({"--fail", "model weights missing: /x/y.pt"}));
    CHECK(message_of<RemoteError>([&] { a.predict(kTriangle); }) == "model weights missing: /x/y.pt");
}

TEST_CASE("mismatched response id names both ids") {
    const std::string msg = message_of<ProtocolError>([] { Adapter a(mock({"--bad-id"})); });
    CHECK(msg.find("1001") != std::string::npos);
    CHECK(msg.find("request id 1") != std::string::npos);
}

TEST_CASE("spawn and handshake failures") {
    CHECK_THROWS_AS(Adapter({"/nonexistent/cfgkit-adapter-binary"}), SpawnError);
    CHECK_THROWS_AS(Adapter(std::vector<std::string>{}), SpawnError);
    CHECK_THROWS_AS(Adapter(mock({"--bad-hello"})), ProtocolError);

    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(Adapter(mock({"--silent"}), AdapterTimeouts{200ms, 200ms}), TimeoutError);
    CHECK(std::chrono::steady_clock::now() - t0 < 5s);

    // A child that exits immediately closes its output.
    CHECK_THROWS_AS(Adapter({"/bin/true"}), ProtocolError);
    // A child that prints garbage and leaves a diagnostic on stderr.
    const std::string msg =
        message_of<ProtocolError>([] { Adapter a({"/bin/sh", "-c", "echo oops-diag >&2; echo not-json; sleep 5"}); });
    CHECK(msg.find("not JSON") != std::string::npos);
}

TEST_CASE("request timeout") {
    Adapter a(mock({"--hang"}), AdapterTimeouts{2000ms, 200ms});
    CHECK_THROWS_AS(a.predict(kTriangle), TimeoutError);
}

TEST_CASE("explain returns a validated ranking") {
    Adapter a(mock());
    const auto ex = a.explain(kTriangle, "saliency");
    CHECK(ex.ranking.size() == 3);
    CHECK_FALSE(ex.empty_warning);
    CHECK(ex.ranking.explainer() == "mock:saliency");
    CHECK(ex.ranking.entries().front().edge == Edge{0, 1});

    CHECK(message_of<RemoteError>([&] { a.explain(kTriangle, "gradcam"); }) == "unknown method 'gradcam'");

    Adapter bogus(mock({"--bogus-edge"}));
    CHECK_THROWS_AS(bogus.explain(kTriangle, "occlusion"), ValidationError);

    Adapter empty(mock({"--empty-explain"}));
    const auto none = empty.explain(kTriangle, "occlusion");
    CHECK(none.ranking.empty());
    CHECK(none.empty_warning);
    CHECK_FALSE(empty.explain(Graph::from_edges(2, {}), "occlusion").empty_warning);

    Adapter no_explain(mock({"--no-explain"}));
    CHECK_THROWS_AS(no_explain.explain(kTriangle, "occlusion"), AdapterError);
}

TEST_CASE("graph payloads round trip through the adapter") {
    Adapter a(mock({"--surrogate", "builtin:mp-sum:5"}));
    const Graph g = generate_synthetic_cfg(3, 15, CfgStyle::hub);
    SurrogateModel local(5, Aggregation::sum);
    const ClassProbs remote = a.predict(g);
    CHECK(remote[1] == doctest::Approx(local.predict(g)[1]).epsilon(1e-12));
    const auto ex = a.explain(g, "occlusion");
    CHECK(ex.ranking.edges() == local.explain(g).edges());
}

TEST_CASE("open_model resolves adapter URIs") {
    auto m = open_model(std::string("adapter:") + MOCK_ADAPTER_PATH + " --probs 0.6,0.4");
    CHECK(m->name() == "adapter:mock");
    CHECK(m->predict(kTriangle) == ClassProbs(0.6, 0.4));
}

TEST_CASE("raw requests: unknown op and malformed lines") {
    Adapter a(mock());
    const Json r = a.raw_request(Json{{"op", "frobnicate"}});
    CHECK_FALSE(r["ok"].get<bool>());
    CHECK(r["error"] == "unsupported op");
    const Json bad = a.raw_line("{nope");
    CHECK_FALSE(bad["ok"].get<bool>());
    CHECK(a.predict(kTriangle) == ClassProbs(0.25, 0.75));
}

TEST_CASE("conformance suite passes against the mock") {
    const auto checks = run_conformance(mock(), {"occlusion", "saliency"});
    REQUIRE(checks.size() == 8);
    for (const auto& c : checks) {
        INFO(c.name << ": " << c.detail);
        CHECK(c.passed);
    }
}

TEST_CASE("conformance suite reports failures") {
    const auto failing = run_conformance(mock({"--probs", "0.5,0.6"}));
    CHECK(failing.front().passed);
    CHECK_FALSE(failing[1].passed);

    const auto dead = run_conformance({"/nonexistent/adapter"});
    REQUIRE(dead.size() == 1);
    CHECK_FALSE(dead[0].passed);

    const auto empty = run_conformance(mock({"--empty-explain"}));
    bool explain_failed = false;
    for (const auto& c : empty) explain_failed |= c.name.rfind("explain", 0) == 0 && !c.passed;
    CHECK(explain_failed);
}

TEST_CASE("split_command honors quotes") {
    CHECK(split_command("a  b \"c d\" e") == std::vector<std::string>{"a", "b", "c d", "e"});
    CHECK(split_command("").empty());
    CHECK(split_command("\"\"") == std::vector<std::string>{""});
}

}  // TEST_SUITE
