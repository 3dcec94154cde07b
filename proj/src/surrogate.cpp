#include "cfgkit/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "cfgkit/errors.hpp"
#include "cfgkit/rng.hpp"

namespace cfgkit {

std::string to_string(Aggregation agg) {
    switch (agg) {
        case Aggregation::mean: return "mean";
        case Aggregation::sum: return "sum";
        case Aggregation::max: return "max";
    }
    return "mean";
}

Aggregation parse_aggregation(const std::string& text) {
    if (text == "mean") return Aggregation::mean;
    if (text == "sum") return Aggregation::sum;
    if (text == "max") return Aggregation::max;
    throw ArgumentError("unknown aggregation '" + text + "'");
}

SurrogateParams SurrogateParams::make(std::uint64_t seed, Aggregation aggregation, int input_dim) {
    if (input_dim < 1) throw ArgumentError("surrogate input dimension must be positive");
    // Distinct streams per (seed, aggregation, d_in).
    Rng rng(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(aggregation) * 0x9e3779b97f4a7c15ULL +
            static_cast<std::uint64_t>(input_dim));
    SurrogateParams p;
    p.seed = seed;
    p.aggregation = aggregation;
    p.input_dim = input_dim;
    auto fill = [&rng](Eigen::MatrixXd& m, double bound) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
        }
    };
    p.w1.resize(kSurrogateHidden1, input_dim);
    fill(p.w1, std::sqrt(6.0 / input_dim));
    p.w2.resize(kSurrogateHidden2, kSurrogateHidden1);
    fill(p.w2, std::sqrt(6.0 / kSurrogateHidden1));
    Eigen::MatrixXd readout(kSurrogateHidden2, 1);
    fill(readout, 2.0);
    p.readout = readout.col(0);
    return p;
}

int surrogate_input_dim(const Graph& g) { return g.has_features() ? g.feature_dim() : kDegreeFeatureCap + 1; }

Eigen::MatrixXd node_feature_matrix(const Graph& g) {
    const int n = g.num_nodes();
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(surrogate_input_dim(g), n);
    for (NodeId v = 0; v < n; ++v) {
        if (g.has_features()) {
            x.col(v) = *g.node(v).feat;
        } else {
            x(std::min(g.degree(v), kDegreeFeatureCap), v) = 1.0;
        }
    }
    return x;
}

namespace {

// One round: h'_v = relu(W * AGG_{u in in(v) + v} h_u).
Eigen::MatrixXd propagate(const Graph& g, const Eigen::MatrixXd& h, const Eigen::MatrixXd& w, Aggregation agg) {
    const int n = g.num_nodes();
    Eigen::MatrixXd pooled(h.rows(), n);
    std::vector<NodeId> group;
    for (NodeId v = 0; v < n; ++v) {
        const auto in = g.in_neighbors(v);
        group.assign(in.begin(), in.end());
        if (!std::binary_search(group.begin(), group.end(), v)) group.insert(std::upper_bound(group.begin(), group.end(), v), v);
        Eigen::VectorXd acc = h.col(group.front());
        for (std::size_t i = 1; i < group.size(); ++i) {
            if (agg == Aggregation::max) {
                acc = acc.cwiseMax(h.col(group[i]));
            } else {
                acc += h.col(group[i]);
            }
        }
        if (agg == Aggregation::mean) acc /= static_cast<double>(group.size());
        pooled.col(v) = acc;
    }
    return (w * pooled).cwiseMax(0.0);
}

}  // namespace

ClassProbs surrogate_predict(const SurrogateParams& params, const Graph& g) {
    if (g.empty()) throw ArgumentError("surrogate prediction on an empty graph");
    const Eigen::MatrixXd x = node_feature_matrix(g);
    if (x.rows() != params.input_dim) {
        throw ArgumentError("surrogate expects " + std::to_string(params.input_dim) + "-dim features, graph has " +
                            std::to_string(x.rows()));
    }
    const Eigen::MatrixXd h1 = propagate(g, x, params.w1, params.aggregation);
    const Eigen::MatrixXd h2 = propagate(g, h1, params.w2, params.aggregation);
    const Eigen::VectorXd embedding = h2.rowwise().mean();
    const double logit = params.readout.dot(embedding);
    const double p_mal = 1.0 / (1.0 + std::exp(-logit));
    return {1.0 - p_mal, p_mal};
}

EdgeRanking occlusion_explain(const SurrogateParams& params, const Graph& g) {
    if (g.num_edges() == 0) throw ArgumentError("occlusion needs at least one edge");
    const ClassProbs base = surrogate_predict(params, g);
    const int c = predicted_class(base);
    std::vector<ScoredEdge> scores;
    scores.reserve(static_cast<std::size_t>(g.num_edges()));
    for (const Edge& e : g.edges()) {
        const Edge one[] = {e};
        scores.push_back({e, base[c] - surrogate_predict(params, remove_edges(g, one))[c]});
    }
    return EdgeRanking("occlusion:mp-" + to_string(params.aggregation) + ":" + std::to_string(params.seed),
                       std::move(scores));
}

const SurrogateParams& SurrogateModel::params_for(int input_dim) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(input_dim);
    if (it == cache_.end()) it = cache_.emplace(input_dim, SurrogateParams::make(seed_, aggregation_, input_dim)).first;
    return it->second;
}

ClassProbs SurrogateModel::predict(const Graph& g) {
    if (g.empty()) throw ArgumentError("surrogate prediction on an empty graph");
    return surrogate_predict(params_for(surrogate_input_dim(g)), g);
}

std::string SurrogateModel::name() const { return "builtin:mp-" + to_string(aggregation_) + ":" + std::to_string(seed_); }

EdgeRanking SurrogateModel::explain(const Graph& g) { return occlusion_explain(params_for(surrogate_input_dim(g)), g); }

}  // namespace cfgkit
