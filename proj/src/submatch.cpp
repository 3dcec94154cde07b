#include "cfgkit/submatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "cfgkit/errors.hpp"

namespace cfgkit {

std::string to_string(Verdict v) { return v == Verdict::benign ? "benign" : "malicious"; }

Verdict parse_verdict(const std::string& text) {
    if (text == "benign") return Verdict::benign;
    if (text == "malicious") return Verdict::malicious;
    throw ArgumentError("verdict must be 'benign' or 'malicious', got '" + text + "'");
}

std::string to_string(const NodeCompat& c) {
    switch (c.kind) {
        case NodeCompat::Kind::automatic: return "auto";
        case NodeCompat::Kind::any: return "any";
        case NodeCompat::Kind::label_equal: return "label-equal";
        case NodeCompat::Kind::feature_cosine: {
            std::string eps = std::to_string(c.cosine_threshold);
            eps.erase(eps.find_last_not_of('0') + 1);
            if (!eps.empty() && eps.back() == '.') eps.push_back('0');
            return "feature-cosine(" + eps + ")";
        }
    }
    return "auto";
}

NodeCompat parse_compat(const std::string& text) {
    if (text == "auto") return {};
    if (text == "any") return {NodeCompat::Kind::any};
    if (text == "label-equal") return {NodeCompat::Kind::label_equal};
    if (text == "feature-cosine") return {NodeCompat::Kind::feature_cosine, 0.9};
    const std::string prefix = "feature-cosine(";
    if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
        const std::string num = text.substr(prefix.size(), text.size() - prefix.size() - 1);
        char* end = nullptr;
        const double eps = std::strtod(num.c_str(), &end);
        if (end && *end == '\0' && !num.empty() && eps >= -1.0 && eps <= 1.0) {
            return {NodeCompat::Kind::feature_cosine, eps};
        }
    }
    throw ArgumentError("unknown node compatibility mode '" + text + "'");
}

namespace {

bool all_labeled(const Graph& g) {
    return std::all_of(g.nodes().begin(), g.nodes().end(), [](const NodeRecord& r) { return r.label.has_value(); });
}

NodeCompat resolve(const NodeCompat& compat, const Graph& pattern, const Graph& target) {
    if (compat.kind != NodeCompat::Kind::automatic) return compat;
    if (all_labeled(pattern) && all_labeled(target)) return {NodeCompat::Kind::label_equal};
    return {NodeCompat::Kind::any};
}

// Pattern visiting order: most already-ordered neighbors first, then higher
// degree, then smaller id.
std::vector<NodeId> matching_order(const Graph& pattern) {
    const int n = pattern.num_nodes();
    std::vector<char> placed(static_cast<std::size_t>(n), 0);
    std::vector<int> links(static_cast<std::size_t>(n), 0);
    std::vector<NodeId> order;
    order.reserve(static_cast<std::size_t>(n));
    for (int step = 0; step < n; ++step) {
        NodeId best = -1;
        for (NodeId v = 0; v < n; ++v) {
            if (placed[static_cast<std::size_t>(v)]) continue;
            if (best < 0) {
                best = v;
                continue;
            }
            const int lv = links[static_cast<std::size_t>(v)];
            const int lb = links[static_cast<std::size_t>(best)];
            if (lv > lb || (lv == lb && pattern.degree(v) > pattern.degree(best))) best = v;
        }
        placed[static_cast<std::size_t>(best)] = 1;
        order.push_back(best);
        for (NodeId w : pattern.neighbors(best)) ++links[static_cast<std::size_t>(w)];
    }
    return order;
}

class Matcher {
public:
    Matcher(const Graph& pattern, const Graph& target, NodeCompat compat, const MatchLimits& limits)
        : pattern_(pattern),
          target_(target),
          compat_(compat),
          limits_(limits),
          order_(matching_order(pattern)),
          map_(static_cast<std::size_t>(pattern.num_nodes()), -1),
          used_(static_cast<std::size_t>(target.num_nodes()), 0),
          start_(std::chrono::steady_clock::now()) {}

    MatchResult run() {
        if (pattern_.num_nodes() > 0 && pattern_.num_nodes() <= target_.num_nodes()) search(0);
        return std::move(result_);
    }

private:
    bool out_of_time() {
        if (limits_.time_budget.count() <= 0) return false;
        if ((++ticks_ & 0x3ff) != 0) return false;
        return std::chrono::steady_clock::now() - start_ > limits_.time_budget;
    }

    bool feasible(NodeId p, NodeId t) const {
        if (used_[static_cast<std::size_t>(t)]) return false;
        if (target_.out_neighbors(t).size() < pattern_.out_neighbors(p).size()) return false;
        if (target_.in_neighbors(t).size() < pattern_.in_neighbors(p).size()) return false;
        if (pattern_.has_self_loop(p) && !target_.has_self_loop(t)) return false;
        if (!nodes_compatible(pattern_, p, target_, t, compat_)) return false;
        for (NodeId q : pattern_.out_neighbors(p)) {
            const NodeId mq = map_[static_cast<std::size_t>(q)];
            if (q != p && mq >= 0 && !target_.has_edge(t, mq)) return false;
        }
        for (NodeId q : pattern_.in_neighbors(p)) {
            const NodeId mq = map_[static_cast<std::size_t>(q)];
            if (q != p && mq >= 0 && !target_.has_edge(mq, t)) return false;
        }
        return true;
    }

    // Candidate targets for p, ascending: successors/predecessors of an
    // already-mapped pattern neighbor when one exists, else every node.
    std::span<const NodeId> candidates(NodeId p) const {
        for (NodeId q : pattern_.in_neighbors(p)) {
            if (q != p && map_[static_cast<std::size_t>(q)] >= 0) return target_.out_neighbors(map_[static_cast<std::size_t>(q)]);
        }
        for (NodeId q : pattern_.out_neighbors(p)) {
            if (q != p && map_[static_cast<std::size_t>(q)] >= 0) return target_.in_neighbors(map_[static_cast<std::size_t>(q)]);
        }
        return {};
    }

    // Returns false when the search must stop.
    bool search(std::size_t depth) {
        if (out_of_time()) {
            result_.truncated = true;
            return false;
        }
        if (depth == order_.size()) {
            if (result_.embeddings.size() >= limits_.max_matches) {
                result_.truncated = true;
                return false;
            }
            result_.embeddings.push_back({map_});
            return true;
        }
        const NodeId p = order_[depth];
        auto visit = [&](NodeId t) {
            if (!feasible(p, t)) return true;
            map_[static_cast<std::size_t>(p)] = t;
            used_[static_cast<std::size_t>(t)] = 1;
            const bool go_on = search(depth + 1);
            map_[static_cast<std::size_t>(p)] = -1;
            used_[static_cast<std::size_t>(t)] = 0;
            return go_on;
        };
        const bool anchored = depth > 0 && std::any_of(pattern_.neighbors(p).begin(), pattern_.neighbors(p).end(),
                                                       [&](NodeId q) { return map_[static_cast<std::size_t>(q)] >= 0; });
        if (anchored) {
            for (NodeId t : candidates(p)) {
                if (!visit(t)) return false;
            }
        } else {
            for (NodeId t = 0; t < target_.num_nodes(); ++t) {
                if (!visit(t)) return false;
            }
        }
        return true;
    }

    const Graph& pattern_;
    const Graph& target_;
    NodeCompat compat_;
    MatchLimits limits_;
    std::vector<NodeId> order_;
    std::vector<NodeId> map_;
    std::vector<char> used_;
    std::chrono::steady_clock::time_point start_;
    std::uint64_t ticks_ = 0;
    MatchResult result_;
};

}  // namespace

bool nodes_compatible(const Graph& pattern, NodeId p, const Graph& target, NodeId t, const NodeCompat& compat) {
    switch (compat.kind) {
        case NodeCompat::Kind::any: return true;
        case NodeCompat::Kind::automatic: {
            const auto& lp = pattern.node(p).label;
            const auto& lt = target.node(t).label;
            return !(lp && lt) || *lp == *lt;
        }
        case NodeCompat::Kind::label_equal: {
            const auto& lp = pattern.node(p).label;
            const auto& lt = target.node(t).label;
            return lp && lt && *lp == *lt;
        }
        case NodeCompat::Kind::feature_cosine: {
            const auto& fp = pattern.node(p).feat;
            const auto& ft = target.node(t).feat;
            if (!fp || !ft || fp->size() != ft->size()) return false;
            const double denom = fp->norm() * ft->norm();
            if (denom == 0.0) return false;
            return fp->dot(*ft) / denom >= compat.cosine_threshold;
        }
    }
    return false;
}

MatchResult subgraph_match(const Graph& pattern, const Graph& target, const NodeCompat& compat,
                           const MatchLimits& limits) {
    return Matcher(pattern, target, resolve(compat, pattern, target), limits).run();
}

void validate_config(const QueryBoxConfig& config) {
    if (!(config.theta_verify > 0.5 && config.theta_verify <= 1.0)) {
        throw ArgumentError("theta_verify must be in (0.5, 1]");
    }
    if (config.n_min < 1 || config.n_max < config.n_min) throw ArgumentError("need 1 <= n_min <= n_max");
    if (config.limits.max_matches < 1) throw ArgumentError("max_matches must be positive");
}

QueryBox::QueryBox(QueryBoxConfig config) : config_(std::move(config)) { validate_config(config_); }

void validate_prototype(const Prototype& proto, const QueryBoxConfig& config) {
    const int n = proto.subgraph.num_nodes();
    if (!is_weakly_connected(proto.subgraph)) throw ValidationError("prototype subgraph is not weakly connected");
    if (n < config.n_min || n > config.n_max) {
        throw ValidationError("prototype has " + std::to_string(n) + " nodes, outside [" +
                              std::to_string(config.n_min) + ", " + std::to_string(config.n_max) + "]");
    }
    if (!(proto.provenance.verification_probability >= config.theta_verify &&
          proto.provenance.verification_probability <= 1.0)) {
        throw ValidationError("prototype verification probability is below theta_verify");
    }
}

void QueryBox::add(Prototype proto) {
    validate_prototype(proto, config_);
    prototypes_.push_back(std::move(proto));
}

void QueryBox::remove(std::size_t index) {
    if (index >= prototypes_.size()) throw ArgumentError("no prototype at index " + std::to_string(index));
    prototypes_.erase(prototypes_.begin() + static_cast<std::ptrdiff_t>(index));
}

VerifyResult verify_candidate(Classifier& model, const Graph& candidate, Verdict verdict,
                              const QueryBoxConfig& config) {
    validate_config(config);
    if (!is_weakly_connected(candidate)) throw ValidationError("candidate subgraph is empty or not weakly connected");
    VerifyResult r;
    r.probability = model.predict(candidate)[verdict == Verdict::malicious ? 1 : 0];
    const int n = candidate.num_nodes();
    r.accepted = r.probability >= config.theta_verify && n >= config.n_min && n <= config.n_max;
    return r;
}

std::optional<Prototype> curate_prototype(Classifier& model, const Graph& g, const ExplanationSubgraph& s,
                                          Verdict verdict, const QueryBoxConfig& config,
                                          const std::string& explainer) {
    Graph candidate = edge_subgraph(g, s.edges);
    const VerifyResult v = verify_candidate(model, candidate, verdict, config);
    if (!v.accepted) return std::nullopt;
    const auto it = g.meta().find("sample_id");
    Prototype proto{std::move(candidate), verdict,
                    {it == g.meta().end() ? std::string() : it->second, explainer, v.probability}};
    return proto;
}

NodeScoreMap score_nodes(const Graph& target, const QueryBox& box) {
    if (box.empty()) throw ArgumentError("query box is empty");
    const auto n = static_cast<std::size_t>(target.num_nodes());
    NodeScoreMap out;
    out.malicious_hits.assign(n, 0);
    out.benign_hits.assign(n, 0);
    for (const auto& proto : box.prototypes()) {
        const MatchResult m = subgraph_match(proto.subgraph, target, box.config().compat, box.config().limits);
        out.truncated = out.truncated || m.truncated;
        auto& hits = proto.verdict == Verdict::malicious ? out.malicious_hits : out.benign_hits;
        for (const auto& emb : m.embeddings) {
            for (NodeId t : emb.map) ++hits[static_cast<std::size_t>(t)];
        }
    }
    long long scale = 1;
    for (std::size_t v = 0; v < n; ++v) scale = std::max(scale, std::llabs(out.raw(static_cast<NodeId>(v))));
    out.score.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        out.score[v] = static_cast<double>(out.raw(static_cast<NodeId>(v))) / static_cast<double>(scale);
    }
    return out;
}

NodeMask to_mask(const NodeScoreMap& scores) {
    NodeMask mask;
    for (std::size_t v = 0; v < scores.score.size(); ++v) mask.scores.emplace_back(static_cast<NodeId>(v), scores.score[v]);
    return mask;
}

DualExplanation dual_explain(Classifier& model, const Graph& g, const EdgeRanking& base_ranking, int budget,
                             const QueryBox& box) {
    DualExplanation out;
    out.subgraph = gec_compose(g, base_ranking, budget);
    out.probs = model.predict(g);
    if (predicted_class(out.probs) == 0) return out;
    out.node_scores = score_nodes(g, box);
    return out;
}

}  // namespace cfgkit
