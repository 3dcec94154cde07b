#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfgkit/classifier.hpp"
#include "cfgkit/explain.hpp"
#include "cfgkit/graph.hpp"

namespace cfgkit {

enum class Verdict { benign, malicious };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& text);

struct NodeCompat {
    enum class Kind {
        automatic,       // label-equal when both graphs label every node, else any
        any,
        label_equal,
        feature_cosine,  // cosine similarity of node features >= threshold
    };
    Kind kind = Kind::automatic;
    double cosine_threshold = 0.9;
};

std::string to_string(const NodeCompat& c);
NodeCompat parse_compat(const std::string& text);

struct MatchLimits {
    std::size_t max_matches = 1000;
    // Zero means no time limit.
    std::chrono::milliseconds time_budget{0};
};

// pattern node i -> target node map[i]; injective.
struct MatchEmbedding {
    std::vector<NodeId> map;

    friend bool operator==(const MatchEmbedding&, const MatchEmbedding&) = default;
    friend auto operator<=>(const MatchEmbedding&, const MatchEmbedding&) = default;
};

struct MatchResult {
    std::vector<MatchEmbedding> embeddings;
    bool truncated = false;
};

bool nodes_compatible(const Graph& pattern, NodeId p, const Graph& target, NodeId t, const NodeCompat& compat);

// Enumerates directed, non-induced subgraph monomorphisms in a VF2-style
// depth-first search. Pattern nodes are visited in a fixed connectivity
// order; candidates are explored by ascending target id, so the output order
// is deterministic. A pattern larger than the target has no embeddings.
MatchResult subgraph_match(const Graph& pattern, const Graph& target, const NodeCompat& compat = {},
                           const MatchLimits& limits = {});

struct Provenance {
    std::string source_id;
    std::string explainer;
    double verification_probability = 0.0;
};

struct Prototype {
    Graph subgraph;
    Verdict verdict = Verdict::malicious;
    Provenance provenance;
};

struct QueryBoxConfig {
    double theta_verify = 0.7;
    int n_min = 3;
    int n_max = 25;
    NodeCompat compat;
    MatchLimits limits;
};

class QueryBox {
public:
    QueryBox() = default;
    explicit QueryBox(QueryBoxConfig config);

    const QueryBoxConfig& config() const { return config_; }
    const std::vector<Prototype>& prototypes() const { return prototypes_; }
    bool empty() const { return prototypes_.empty(); }

    // Throws ValidationError if the prototype breaks the box invariants.
    void add(Prototype proto);
    void remove(std::size_t index);

private:
    QueryBoxConfig config_;
    std::vector<Prototype> prototypes_;
};

void validate_config(const QueryBoxConfig& config);
void validate_prototype(const Prototype& proto, const QueryBoxConfig& config);

struct VerifyResult {
    bool accepted = false;
    double probability = 0.0;
};

// Accepts iff p(verdict | candidate alone) >= theta_verify and the candidate
// size lies in [n_min, n_max]. Throws ValidationError for an empty or
// disconnected candidate.
VerifyResult verify_candidate(Classifier& model, const Graph& candidate, Verdict verdict,
                              const QueryBoxConfig& config);

// Builds the explanation's edge subgraph of g, verifies it and returns a
// prototype when accepted.
std::optional<Prototype> curate_prototype(Classifier& model, const Graph& g, const ExplanationSubgraph& s,
                                          Verdict verdict, const QueryBoxConfig& config,
                                          const std::string& explainer);

struct NodeScoreMap {
    std::vector<long long> malicious_hits;
    std::vector<long long> benign_hits;
    // (m - b) / max(1, max |m - b|), in [-1, 1].
    std::vector<double> score;
    bool truncated = false;

    long long raw(NodeId v) const {
        return malicious_hits[static_cast<std::size_t>(v)] - benign_hits[static_cast<std::size_t>(v)];
    }
};

NodeScoreMap score_nodes(const Graph& target, const QueryBox& box);

NodeMask to_mask(const NodeScoreMap& scores);

struct DualExplanation {
    ExplanationSubgraph subgraph;
    ClassProbs probs;
    std::optional<NodeScoreMap> node_scores;  // nullopt when predicted benign
};

// GEC explanation for every sample; prototype scoring only when the model
// predicts malicious.
DualExplanation dual_explain(Classifier& model, const Graph& g, const EdgeRanking& base_ranking, int budget,
                             const QueryBox& box);

}  // namespace cfgkit
