#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cfgkit/ensemble.hpp"
#include "cfgkit/errors.hpp"
#include "cfgkit/rng.hpp"
#include "cfgkit/surrogate.hpp"

using namespace cfgkit;

namespace {

BaseOutputs random_outputs(Rng& rng, int n) {
    BaseOutputs o;
    o.z.resize(2, n);
    for (int i = 0; i < n; ++i) {
        const double p = rng.uniform();
        o.z(0, i) = 1.0 - p;
        o.z(1, i) = p;
        o.names.push_back("l" + std::to_string(i));
    }
    return o;
}

double sig(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Plain-loop evaluation of the meta-learner formula chain.
double loop_p_malicious(const MetaParams& p, const BaseOutputs& o, std::vector<double>* attention = nullptr) {
    const int n = static_cast<int>(o.size());
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < p.hidden(); ++k) {
            e[static_cast<std::size_t>(i)] += p.w2[k] * std::tanh(p.w1(k, 0) * o.z(0, i) + p.w1(k, 1) * o.z(1, i) + p.b1[k]);
        }
    }
    double denom = 0.0;
    for (double x : e) denom += std::exp(x);
    std::vector<double> a(static_cast<std::size_t>(n));
    double f0 = 0.0, f1 = 0.0;
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i)] = std::exp(e[static_cast<std::size_t>(i)]) / denom;
        f0 += a[static_cast<std::size_t>(i)] * o.z(0, i);
        f1 += a[static_cast<std::size_t>(i)] * o.z(1, i);
    }
    if (attention) *attention = a;
    return sig(p.w_out[0] * f0 + p.w_out[1] * f1 + p.b_out);
}

std::vector<MetaSample> random_samples(Rng& rng, int count) {
    std::vector<MetaSample> data;
    for (int i = 0; i < count; ++i) {
        data.push_back({random_outputs(rng, 2 + static_cast<int>(rng.below(3))), static_cast<int>(rng.below(2))});
    }
    return data;
}

// Visits every scalar parameter by reference.
template <typename F>
void for_each_param(MetaParams& p, F&& f) {
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) f(p.w1.data()[i]);
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) f(p.b1[i]);
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) f(p.w2[i]);
    f(p.w_out[0]);
    f(p.w_out[1]);
    f(p.b_out);
}

std::vector<Edge> order_of(const EdgeRanking& r) { return r.edges(); }

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("identical base outputs give uniform attention") {
    const MetaParams p = init_meta_params(3);
    for (int n = 2; n <= 6; ++n) {
        BaseOutputs o;
        o.z.resize(2, n);
        for (int i = 0; i < n; ++i) o.z.col(i) << 0.35, 0.65;
        const auto out = meta_forward(p, o);
        for (int i = 0; i < n; ++i) CHECK(std::abs(out.attention[i] - 1.0 / n) <= 1e-12);
    }
}

TEST_CASE("saturated attention selects the first learner") {
    MetaParams p;
    p.w1.resize(1, 2);
    p.w1 << -10, 10;
    p.b1 = Eigen::VectorXd::Zero(1);
    p.w2 = Eigen::VectorXd::Constant(1, 50.0);
    p.w_out << -1.5, 2.0;
    p.b_out = 0.25;
    BaseOutputs o;
    o.z.resize(2, 2);
    o.z.col(0) << 0.1, 0.9;
    o.z.col(1) << 0.9, 0.1;
    const auto out = meta_forward(p, o);
    CHECK(out.attention[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.attention[1] < 1e-40);
    CHECK(out.p[1] == doctest::Approx(sig(-1.5 * 0.1 + 2.0 * 0.9 + 0.25)).epsilon(1e-12));
}

TEST_CASE("forward matches straight-line recomputation") {
    BaseOutputs o;
    o.z.resize(2, 2);
    o.z.col(0) << 0.3, 0.7;
    o.z.col(1) << 0.6, 0.4;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const MetaParams p = init_meta_params(seed);
        std::vector<double> a;
        const double expected = loop_p_malicious(p, o, &a);
        const auto out = meta_forward(p, o);
        CHECK(out.p[1] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(out.p.sum() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(out.attention[0] == doctest::Approx(a[0]).epsilon(1e-12));
        CHECK(out.attention[1] == doctest::Approx(a[1]).epsilon(1e-12));
        CHECK(out.fused[1] == doctest::Approx(a[0] * 0.7 + a[1] * 0.4).epsilon(1e-12));
    }
}

TEST_CASE("attention stays on the simplex and is permutation equivariant") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const MetaParams p = init_meta_params(rng.next());
        const int n = 2 + static_cast<int>(rng.below(6));
        const BaseOutputs o = random_outputs(rng, n);
        const auto out = meta_forward(p, o);
        CHECK(std::abs(out.attention.sum() - 1.0) <= 1e-9);
        CHECK((out.attention.array() >= 0.0).all());

        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        BaseOutputs q;
        q.z.resize(2, n);
        for (int i = 0; i < n; ++i) q.z.col(i) = o.z.col(perm[static_cast<std::size_t>(i)]);
        const auto permuted = meta_forward(p, q);
        CHECK(permuted.p[1] == doctest::Approx(out.p[1]).epsilon(1e-12));
        for (int i = 0; i < n; ++i) {
            CHECK(permuted.attention[i] == doctest::Approx(out.attention[perm[static_cast<std::size_t>(i)]]).epsilon(1e-12));
        }
    }
}

TEST_CASE("invalid base outputs are rejected") {
    const MetaParams p = init_meta_params(1);
    BaseOutputs one;
    one.z.resize(2, 1);
    one.z.col(0) << 0.5, 0.5;
    CHECK_THROWS_AS(meta_forward(p, one), ArgumentError);
    BaseOutputs bad;
    bad.z.resize(2, 2);
    bad.z.col(0) << 0.5, 0.5;
    bad.z.col(1) << 0.5, 0.4;
    CHECK_THROWS_AS(validate_outputs(bad), ArgumentError);
    bad.z.col(1) << 0.5, 0.5 + 5e-10;
    CHECK_NOTHROW(validate_outputs(bad));
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(555);
    for (int draw = 0; draw < 20; ++draw) {
        MetaParams p = init_meta_params(rng.next());
        const auto data = random_samples(rng, 6);
        const MetaParams grad = meta_gradient(p, data);
        std::vector<double> analytic;
        MetaParams g_copy = grad;
        for_each_param(g_copy, [&](double& x) { analytic.push_back(x); });
        std::size_t idx = 0;
        for_each_param(p, [&](double& x) {
            const double saved = x;
            x = saved + 1e-4;
            const double up = meta_loss(p, data);
            x = saved - 1e-4;
            const double down = meta_loss(p, data);
            x = saved;
            const double numeric = (up - down) / 2e-4;
            const double a = analytic[idx++];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            CHECK(rel <= 1e-3);
        });
    }
}

TEST_CASE("meta training separates a toy surrogate corpus") {
    SurrogateModel mean(6, Aggregation::mean), sum(6, Aggregation::sum);
    std::vector<MetaSample> data;
    for (std::uint64_t s = 1; s <= 40; ++s) {
        for (auto style : {CfgStyle::chain_heavy, CfgStyle::hub}) {
            const Graph g = generate_synthetic_cfg(s, 20, style);
            MetaSample m;
            m.outputs.z.resize(2, 2);
            m.outputs.z.col(0) = mean.predict(g);
            m.outputs.z.col(1) = sum.predict(g);
            m.label = style == CfgStyle::hub ? 1 : 0;
            data.push_back(m);
        }
    }
    MetaTrainOptions opts;
    opts.seed = 1;
    const MetaParams p = meta_train(data, opts);
    int correct = 0;
    for (const auto& m : data) correct += (meta_forward(p, m.outputs).p[1] >= 0.5) == (m.label == 1);
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.9);
    CHECK(meta_loss(p, data) <= p.loss_history.front());
    CHECK(p.loss_history.size() == 201);
    CHECK(meta_loss(p, data) == doctest::Approx(p.loss_history[static_cast<std::size_t>(p.best_epoch)]).epsilon(1e-12));

    const MetaParams again = meta_train(data, opts);
    CHECK(again.w1 == p.w1);
    CHECK(again.w2 == p.w2);
    CHECK(again.b_out == p.b_out);
    CHECK(again.loss_history == p.loss_history);
    opts.seed = 2;
    CHECK(meta_train(data, opts).w1 != p.w1);
}

TEST_CASE("meta training argument checks and divergence") {
    Rng rng(8);
    auto data = random_samples(rng, 4);
    for (auto& s : data) s.label = 1;
    CHECK_THROWS_AS(meta_train(data, {}), ArgumentError);
    data[0].label = 0;
    CHECK_THROWS_AS(meta_train(std::span(data).first(1), {}), ArgumentError);
    MetaTrainOptions wild;
    wild.learning_rate = 1e300;
    wild.epochs = 5;
    try {
        (void)meta_train(data, wild);
        FAIL("expected divergence");
    } catch (const TrainingError& e) {
        CHECK(e.epoch() >= 1);
    }
}

TEST_CASE("ensemble_explain hand arithmetic") {
    const Edge e1{0, 1}, e2{1, 2}, e3{2, 0};
    const EdgeRanking a("a", {{e1, 3.0}, {e2, 2.0}, {e3, 1.0}});
    const EdgeRanking b("b", {{e1, 0.0}, {e2, 4.0}, {e3, 2.0}});
    const EdgeRanking rankings[] = {a, b};
    const auto fused = ensemble_explain(rankings, Eigen::Vector2d(0.5, 0.5));
    CHECK(order_of(fused) == std::vector<Edge>{e2, e1, e3});
    CHECK(fused.entries()[0].score == doctest::Approx(0.75));
    CHECK(fused.entries()[1].score == doctest::Approx(0.5));
    CHECK(fused.entries()[2].score == doctest::Approx(0.25));

    // Missing edges contribute zero; constant rankings normalize to 0.5.
    const EdgeRanking c("c", {{e1, 2.0}, {e2, 0.0}});
    const EdgeRanking d("d", {{e3, 7.0}});
    const EdgeRanking partial[] = {c, d};
    const auto mixed = ensemble_explain(partial, Eigen::Vector2d(0.3, 0.7));
    CHECK(order_of(mixed) == std::vector<Edge>{e3, e1, e2});
    CHECK(mixed.entries()[0].score == doctest::Approx(0.35));
    CHECK(mixed.entries()[1].score == doctest::Approx(0.3));
    CHECK(mixed.entries()[2].score == doctest::Approx(0.0));

    CHECK_THROWS_AS(ensemble_explain(partial, Eigen::Vector3d(0.2, 0.3, 0.5)), ArgumentError);
}

TEST_CASE("one-hot and identical-ranking identities") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const Graph g = generate_synthetic_cfg(rng.next(), 10, CfgStyle::random_dag);
        std::vector<EdgeRanking> rs;
        for (int i = 0; i < 3; ++i) {
            std::vector<ScoredEdge> entries;
            for (const auto& e : g.edges()) entries.push_back({e, std::round(rng.uniform(0, 5) * 4) / 4});
            rs.emplace_back("r" + std::to_string(i), entries);
        }
        const int j = static_cast<int>(rng.below(3));
        Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(3);
        one_hot[j] = 1.0;
        CHECK(order_of(ensemble_explain(rs, one_hot)) == order_of(rs[static_cast<std::size_t>(j)]));

        const std::vector<EdgeRanking> same{rs[0], rs[0]};
        const double w = rng.uniform();
        CHECK(order_of(ensemble_explain(same, Eigen::Vector2d(w, 1.0 - w))) == order_of(rs[0]));
    }
}

TEST_CASE("ensemble_predict composes base predictions") {
    const Graph g = generate_synthetic_cfg(12, 16, CfgStyle::hub);
    SurrogateModel m0(4, Aggregation::mean), m1(4, Aggregation::sum), m2(4, Aggregation::max);
    Classifier* models[] = {&m0, &m1, &m2};
    const MetaParams p = init_meta_params(9);
    const auto out = ensemble_predict(models, p, g);
    CHECK(out.outputs.z.col(0) == surrogate_predict(SurrogateParams::make(4, Aggregation::mean, 16), g));
    CHECK(out.outputs.z.col(1) == surrogate_predict(SurrogateParams::make(4, Aggregation::sum, 16), g));
    CHECK(out.outputs.z.col(2) == surrogate_predict(SurrogateParams::make(4, Aggregation::max, 16), g));
    CHECK(out.outputs.names == std::vector<std::string>{"builtin:mp-mean:4", "builtin:mp-sum:4", "builtin:mp-max:4"});
    CHECK(out.meta.p == meta_forward(p, out.outputs).p);

    Classifier* dup[] = {&m1, &m1, &m1, &m1};
    const auto uniform = ensemble_predict(dup, p, g);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(uniform.meta.attention[i] - 0.25) <= 1e-9);

    CHECK_THROWS_AS(ensemble_predict(std::span<Classifier* const>{}, p, g), ArgumentError);
}

TEST_CASE("base-model failures name the learner") {
    struct Broken : Classifier {
        ClassProbs predict(const Graph&) override { throw ValidationError("no"); }
        std::string name() const override { return "broken-one"; }
    } broken;
    SurrogateModel ok(1, Aggregation::mean);
    Classifier* models[] = {&ok, &broken};
    try {
        (void)ensemble_predict(models, init_meta_params(1), generate_synthetic_cfg(1, 8, CfgStyle::hub));
        FAIL("expected failure");
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("broken-one") != std::string::npos);
    }
}

}  // TEST_SUITE
