#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfgkit/classifier.hpp"
#include "cfgkit/graph.hpp"

namespace cfgkit {

struct ScoredEdge {
    Edge edge;
    double score = 0.0;
};

// Descending by score, ties by ascending (src, dst).
bool ranks_before(const ScoredEdge& a, const ScoredEdge& b);

// Totally ordered edge scores from one explainer.
class EdgeRanking {
public:
    EdgeRanking() = default;
    // Sorts into canonical order; throws ValidationError on duplicate edges
    // or non-finite scores.
    EdgeRanking(std::string explainer, std::vector<ScoredEdge> entries);

    const std::string& explainer() const { return explainer_; }
    const std::vector<ScoredEdge>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::vector<Edge> edges() const;
    // 1-based position, or nullopt when the edge is not ranked.
    std::optional<std::size_t> rank_of(const Edge& e) const;

    // Throws ValidationError naming the first edge missing from g.
    void validate_against(const Graph& g) const;

private:
    std::string explainer_;
    std::vector<ScoredEdge> entries_;
};

struct FusionMethod {
    enum class Kind { mean_rank, rrf };
    Kind kind = Kind::mean_rank;
    double rrf_k = 60.0;

    static FusionMethod mean_rank() { return {}; }
    static FusionMethod rrf(double k = 60.0) { return {Kind::rrf, k}; }
};

// Edges missing from one input take rank |universe| + 1 there.
// mean-rank: -(rank_a + rank_b) / 2; rrf: 1/(k + rank_a) + 1/(k + rank_b).
EdgeRanking rank_fusion(const EdgeRanking& a, const EdgeRanking& b, const FusionMethod& method = {});
EdgeRanking rank_fusion(const Graph& reference, const EdgeRanking& a, const EdgeRanking& b,
                        const FusionMethod& method = {});

struct ExplanationSubgraph {
    std::vector<Edge> edges;   // in insertion order
    std::vector<NodeId> nodes; // endpoints, ascending
    int budget = 0;
    int budget_used = 0;
};

ExplanationSubgraph make_explanation(std::vector<Edge> edges, int budget);

// Greedy edge-wise composition: start from the top edge, then keep adding the
// best-ranked unused edge that touches the current node set (undirected).
ExplanationSubgraph gec_compose(const Graph& g, const EdgeRanking& ranking, int budget);

ExplanationSubgraph topk_subgraph(const EdgeRanking& ranking, int k);

struct FidelityOptions {
    // Keep every node of g in the explanation-only graph instead of just
    // the explanation's endpoints.
    bool keep_all_nodes = false;
};

struct FidelityResult {
    int predicted_class = 0;
    double probability = 0.0;
    double fidelity_plus = 0.0;
    // Undefined for an empty explanation (no explanation-only graph exists)
    // unless keep_all_nodes is set.
    std::optional<double> fidelity_minus;
};

FidelityResult fidelity(Classifier& model, const Graph& g, const ExplanationSubgraph& s,
                        const FidelityOptions& options = {});

// 1 - |s| / |E(g)|.
double sparsity(const ExplanationSubgraph& s, const Graph& g);

// Mean pairwise Jaccard overlap of the top-k edge sets.
double consistency(std::span<const EdgeRanking> rankings, int k);

}  // namespace cfgkit
