#include "cfgkit/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cfgkit/errors.hpp"
#include "cfgkit/rng.hpp"

namespace cfgkit {

namespace {

double sigmoid(double s) {
    if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

struct Forward {
    Eigen::MatrixXd t;  // h x n, tanh activations
    Eigen::VectorXd e;
    Eigen::VectorXd a;
    Eigen::Vector2d fused;
    double logit = 0.0;
};

Forward forward(const MetaParams& params, const BaseOutputs& outs) {
    Forward f;
    f.t = ((params.w1 * outs.z).colwise() + params.b1).array().tanh().matrix();
    f.e = f.t.transpose() * params.w2;
    f.a = (f.e.array() - f.e.maxCoeff()).exp().matrix();
    f.a /= f.a.sum();
    f.fused = outs.z * f.a;
    f.logit = params.w_out.dot(f.fused) + params.b_out;
    return f;
}

MetaParams zeros_like(const MetaParams& p) {
    MetaParams g;
    g.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), 2);
    g.b1 = Eigen::VectorXd::Zero(p.b1.size());
    g.w2 = Eigen::VectorXd::Zero(p.w2.size());
    g.w_out.setZero();
    g.b_out = 0.0;
    return g;
}

void accumulate(MetaParams& grad, const MetaParams& params, const BaseOutputs& outs, int label, double weight) {
    const Forward f = forward(params, outs);
    const double d_logit = weight * (sigmoid(f.logit) - label);
    grad.w_out += d_logit * f.fused;
    grad.b_out += d_logit;
    const Eigen::Vector2d d_fused = d_logit * params.w_out;
    const Eigen::VectorXd d_a = outs.z.transpose() * d_fused;
    const Eigen::VectorXd d_e = (f.a.array() * (d_a.array() - f.a.dot(d_a))).matrix();
    grad.w2 += f.t * d_e;
    const Eigen::MatrixXd d_pre = ((params.w2 * d_e.transpose()).array() * (1.0 - f.t.array().square())).matrix();
    grad.w1 += d_pre * outs.z.transpose();
    grad.b1 += d_pre.rowwise().sum();
}

}  // namespace

void validate_outputs(const BaseOutputs& outs) {
    if (outs.size() < 2) throw ArgumentError("the meta-learner needs at least two base learners");
    for (Eigen::Index i = 0; i < outs.size(); ++i) {
        const auto col = outs.z.col(i);
        if (!col.allFinite() || (col.array() < 0.0).any() || std::abs(col.sum() - 1.0) > 1e-9) {
            throw ArgumentError("base output " + std::to_string(i) + " is not a probability vector");
        }
    }
}

MetaParams init_meta_params(std::uint64_t seed, int hidden) {
    if (hidden < 1) throw ArgumentError("meta-learner hidden width must be positive");
    Rng rng(seed);
    MetaParams p;
    const double b_in = 1.0 / std::sqrt(2.0);
    const double b_hidden = 1.0 / std::sqrt(static_cast<double>(hidden));
    p.w1.resize(hidden, 2);
    p.b1.resize(hidden);
    p.w2.resize(hidden);
    for (int i = 0; i < hidden; ++i) {
        p.w1(i, 0) = rng.uniform(-b_in, b_in);
        p.w1(i, 1) = rng.uniform(-b_in, b_in);
    }
    for (int i = 0; i < hidden; ++i) p.b1[i] = rng.uniform(-b_in, b_in);
    for (int i = 0; i < hidden; ++i) p.w2[i] = rng.uniform(-b_hidden, b_hidden);
    p.w_out << rng.uniform(-b_in, b_in), rng.uniform(-b_in, b_in);
    p.b_out = rng.uniform(-b_in, b_in);
    p.seed = seed;
    return p;
}

MetaOutput meta_forward(const MetaParams& params, const BaseOutputs& outs) {
    validate_outputs(outs);
    const Forward f = forward(params, outs);
    const double p_mal = sigmoid(f.logit);
    return {ClassProbs(1.0 - p_mal, p_mal), f.a, f.e, f.fused};
}

double meta_loss(const MetaParams& params, std::span<const MetaSample> data) {
    double total = 0.0;
    for (const auto& s : data) {
        const double logit = forward(params, s.outputs).logit;
        total += softplus(logit) - s.label * logit;
    }
    return total / static_cast<double>(data.size());
}

MetaParams meta_gradient(const MetaParams& params, std::span<const MetaSample> data) {
    MetaParams grad = zeros_like(params);
    const double weight = 1.0 / static_cast<double>(data.size());
    for (const auto& s : data) accumulate(grad, params, s.outputs, s.label, weight);
    return grad;
}

MetaParams meta_train(std::span<const MetaSample> data, const MetaTrainOptions& options) {
    if (data.size() < 2) throw ArgumentError("meta training needs at least 2 samples");
    if (!(options.learning_rate > 0.0) || options.epochs < 0) throw ArgumentError("invalid meta training options");
    bool has_pos = false, has_neg = false;
    for (const auto& s : data) {
        validate_outputs(s.outputs);
        if (s.label != 0 && s.label != 1) throw ArgumentError("labels must be 0 or 1");
        (s.label ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw ArgumentError("meta training needs both classes");

    MetaParams params = init_meta_params(options.seed, options.hidden);
    params.learning_rate = options.learning_rate;
    params.epochs = options.epochs;

    Rng shuffle_rng(options.seed ^ 0x2545f4914f6cdd1dULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    double loss = meta_loss(params, data);
    if (!std::isfinite(loss)) throw TrainingError("non-finite initial loss", 0);
    std::vector<double> history{loss};
    MetaParams best = params;
    double best_loss = loss;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t i : order) {
            MetaParams g = zeros_like(params);
            accumulate(g, params, data[i].outputs, data[i].label, 1.0);
            params.w1 -= options.learning_rate * g.w1;
            params.b1 -= options.learning_rate * g.b1;
            params.w2 -= options.learning_rate * g.w2;
            params.w_out -= options.learning_rate * g.w_out;
            params.b_out -= options.learning_rate * g.b_out;
        }
        loss = meta_loss(params, data);
        if (!std::isfinite(loss) || !params.all_finite()) throw TrainingError("meta-learner diverged", epoch);
        history.push_back(loss);
        if (loss <= best_loss) {
            best_loss = loss;
            best = params;
            best_epoch = epoch;
        }
    }
    best.loss_history = std::move(history);
    best.best_epoch = best_epoch;
    return best;
}

EdgeRanking ensemble_explain(std::span<const EdgeRanking> per_learner, const Eigen::VectorXd& attention) {
    if (static_cast<Eigen::Index>(per_learner.size()) != attention.size()) {
        throw ArgumentError("got " + std::to_string(per_learner.size()) + " rankings for " +
                            std::to_string(attention.size()) + " attention weights");
    }
    std::map<Edge, double> fused;
    for (std::size_t i = 0; i < per_learner.size(); ++i) {
        const auto& entries = per_learner[i].entries();
        for (const auto& se : entries) fused.emplace(se.edge, 0.0);
        if (entries.empty()) continue;
        // Entries are sorted descending, so the extremes sit at the ends.
        const double hi = entries.front().score;
        const double lo = entries.back().score;
        for (const auto& se : entries) {
            const double normalized = hi == lo ? 0.5 : (se.score - lo) / (hi - lo);
            fused[se.edge] += attention[static_cast<Eigen::Index>(i)] * normalized;
        }
    }
    std::vector<ScoredEdge> out;
    out.reserve(fused.size());
    for (const auto& [edge, score] : fused) out.push_back({edge, score});
    return EdgeRanking("ensemble", std::move(out));
}

EnsemblePrediction ensemble_predict(std::span<Classifier* const> models, const MetaParams& params, const Graph& g) {
    if (models.size() < 2) throw ArgumentError("ensemble prediction needs at least two base models");
    EnsemblePrediction out;
    out.outputs.z.resize(2, static_cast<Eigen::Index>(models.size()));
    for (std::size_t i = 0; i < models.size(); ++i) {
        const std::string name = models[i]->name();
        try {
            out.outputs.z.col(static_cast<Eigen::Index>(i)) = models[i]->predict(g);
        } catch (const Error& e) {
            throw ModelError("base learner '" + name + "' failed: " + e.what());
        }
        out.outputs.names.push_back(name);
    }
    out.meta = meta_forward(params, out.outputs);
    return out;
}

}  // namespace cfgkit
