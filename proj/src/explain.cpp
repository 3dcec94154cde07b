#include "cfgkit/explain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include "cfgkit/errors.hpp"

namespace cfgkit {

namespace {

std::string edge_text(const Edge& e) {
    return "(" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")";
}

}  // namespace

bool ranks_before(const ScoredEdge& a, const ScoredEdge& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.edge < b.edge;
}

EdgeRanking::EdgeRanking(std::string explainer, std::vector<ScoredEdge> entries)
    : explainer_(std::move(explainer)), entries_(std::move(entries)) {
    for (const auto& se : entries_) {
        if (!std::isfinite(se.score)) throw ValidationError("non-finite score for edge " + edge_text(se.edge));
    }
    std::sort(entries_.begin(), entries_.end(), ranks_before);
    std::set<Edge> seen;
    for (const auto& se : entries_) {
        if (!seen.insert(se.edge).second) throw ValidationError("edge " + edge_text(se.edge) + " ranked twice");
    }
}

std::vector<Edge> EdgeRanking::edges() const {
    std::vector<Edge> out;
    out.reserve(entries_.size());
    for (const auto& se : entries_) out.push_back(se.edge);
    return out;
}

std::optional<std::size_t> EdgeRanking::rank_of(const Edge& e) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].edge == e) return i + 1;
    }
    return std::nullopt;
}

void EdgeRanking::validate_against(const Graph& g) const {
    for (const auto& se : entries_) {
        if (!g.has_edge(se.edge)) {
            throw ValidationError("ranking '" + explainer_ + "' scores edge " + edge_text(se.edge) +
                                  " which is not in the graph");
        }
    }
}

EdgeRanking rank_fusion(const EdgeRanking& a, const EdgeRanking& b, const FusionMethod& method) {
    std::map<Edge, std::pair<std::size_t, std::size_t>> ranks;
    for (std::size_t i = 0; i < a.size(); ++i) ranks[a.entries()[i].edge].first = i + 1;
    for (std::size_t i = 0; i < b.size(); ++i) ranks[b.entries()[i].edge].second = i + 1;
    const std::size_t missing = ranks.size() + 1;

    if (method.kind == FusionMethod::Kind::rrf && !(method.rrf_k >= 0.0)) {
        throw ArgumentError("rrf k must be nonnegative");
    }
    std::vector<ScoredEdge> fused;
    fused.reserve(ranks.size());
    for (const auto& [edge, r] : ranks) {
        const auto ra = static_cast<double>(r.first ? r.first : missing);
        const auto rb = static_cast<double>(r.second ? r.second : missing);
        const double score = method.kind == FusionMethod::Kind::mean_rank
                                 ? -(ra + rb) / 2.0
                                 : 1.0 / (method.rrf_k + ra) + 1.0 / (method.rrf_k + rb);
        fused.push_back({edge, score});
    }
    return EdgeRanking("fusion(" + a.explainer() + "," + b.explainer() + ")", std::move(fused));
}

EdgeRanking rank_fusion(const Graph& reference, const EdgeRanking& a, const EdgeRanking& b,
                        const FusionMethod& method) {
    a.validate_against(reference);
    b.validate_against(reference);
    return rank_fusion(a, b, method);
}

ExplanationSubgraph make_explanation(std::vector<Edge> edges, int budget) {
    ExplanationSubgraph s;
    std::set<NodeId> nodes;
    for (const auto& e : edges) {
        nodes.insert(e.src);
        nodes.insert(e.dst);
    }
    s.budget_used = static_cast<int>(edges.size());
    s.edges = std::move(edges);
    s.nodes.assign(nodes.begin(), nodes.end());
    s.budget = budget;
    return s;
}

ExplanationSubgraph gec_compose(const Graph& g, const EdgeRanking& ranking, int budget) {
    if (ranking.empty()) throw ArgumentError("GEC needs a nonempty ranking");
    if (budget < 1) throw ArgumentError("GEC budget must be positive");
    ranking.validate_against(g);

    // Ranking positions incident to each node.
    std::map<NodeId, std::vector<std::size_t>> incident;
    const auto& entries = ranking.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        incident[entries[i].edge.src].push_back(i);
        if (entries[i].edge.dst != entries[i].edge.src) incident[entries[i].edge.dst].push_back(i);
    }

    std::vector<char> used(entries.size(), 0);
    std::set<NodeId> covered;
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> frontier;
    auto cover = [&](NodeId v) {
        if (!covered.insert(v).second) return;
        for (std::size_t i : incident[v]) {
            if (!used[i]) frontier.push(i);
        }
    };

    std::vector<Edge> chosen;
    auto take = [&](std::size_t i) {
        used[i] = 1;
        chosen.push_back(entries[i].edge);
        cover(entries[i].edge.src);
        cover(entries[i].edge.dst);
    };
    take(0);
    while (static_cast<int>(chosen.size()) < budget && !frontier.empty()) {
        const std::size_t i = frontier.top();
        frontier.pop();
        if (!used[i]) take(i);
    }
    return make_explanation(std::move(chosen), budget);
}

ExplanationSubgraph topk_subgraph(const EdgeRanking& ranking, int k) {
    if (k < 1) throw ArgumentError("top-k needs k >= 1");
    const auto count = std::min(ranking.size(), static_cast<std::size_t>(k));
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < count; ++i) edges.push_back(ranking.entries()[i].edge);
    return make_explanation(std::move(edges), k);
}

namespace {

ClassProbs query(Classifier& model, const Graph& g, const std::string& variant) {
    const std::string where = "model '" + model.name() + "' failed on " + variant + ": ";
    try {
        return model.predict(g);
    } catch (const AdapterError& e) {
        // Transport failures keep their category so the CLI exit code stays 2.
        throw AdapterError(where + e.what());
    } catch (const std::exception& e) {
        throw ModelError(where + e.what());
    }
}

}  // namespace

FidelityResult fidelity(Classifier& model, const Graph& g, const ExplanationSubgraph& s,
                        const FidelityOptions& options) {
    for (const auto& e : s.edges) {
        if (!g.has_edge(e)) throw ValidationError("explanation edge " + edge_text(e) + " is not in the graph");
    }
    FidelityResult r;
    const ClassProbs base = query(model, g, "the original graph");
    r.predicted_class = predicted_class(base);
    r.probability = base[r.predicted_class];

    const Graph without = remove_edges(g, s.edges);
    r.fidelity_plus = r.probability - query(model, without, "the graph without the explanation")[r.predicted_class];

    if (options.keep_all_nodes) {
        std::set<Edge> keep(s.edges.begin(), s.edges.end());
        std::vector<Edge> others;
        for (const auto& e : g.edges()) {
            if (!keep.count(e)) others.push_back(e);
        }
        const Graph only = remove_edges(g, others);
        r.fidelity_minus = r.probability - query(model, only, "the explanation-only graph")[r.predicted_class];
    } else if (!s.edges.empty()) {
        const Graph only = edge_subgraph(g, s.edges);
        r.fidelity_minus = r.probability - query(model, only, "the explanation-only graph")[r.predicted_class];
    }
    return r;
}

double sparsity(const ExplanationSubgraph& s, const Graph& g) {
    if (g.num_edges() == 0) throw ArgumentError("sparsity is undefined on an edgeless graph");
    return 1.0 - static_cast<double>(s.edges.size()) / static_cast<double>(g.num_edges());
}

double consistency(std::span<const EdgeRanking> rankings, int k) {
    if (rankings.size() < 2) throw ArgumentError("consistency needs at least two rankings");
    if (k < 1) throw ArgumentError("consistency needs k >= 1");
    std::vector<std::set<Edge>> tops;
    for (const auto& r : rankings) {
        const auto count = std::min(r.size(), static_cast<std::size_t>(k));
        tops.emplace_back();
        for (std::size_t i = 0; i < count; ++i) tops.back().insert(r.entries()[i].edge);
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < tops.size(); ++i) {
        for (std::size_t j = i + 1; j < tops.size(); ++j) {
            std::size_t common = 0;
            for (const auto& e : tops[i]) common += tops[j].count(e);
            const std::size_t uni = tops[i].size() + tops[j].size() - common;
            total += uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

}  // namespace cfgkit
