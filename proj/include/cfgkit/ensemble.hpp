#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfgkit/classifier.hpp"
#include "cfgkit/explain.hpp"

namespace cfgkit {

// Base-learner probability vectors, one column per learner (2 x n).
struct BaseOutputs {
    Eigen::Matrix<double, 2, Eigen::Dynamic> z;
    std::vector<std::string> names;

    Eigen::Index size() const { return z.cols(); }
};

// Throws ArgumentError for fewer than two learners or a column that is not
// a probability vector (sum within 1e-9 of one).
void validate_outputs(const BaseOutputs& outs);

// Attention scoring e_i = w2 . tanh(W1 z_i + b1), a = softmax(e),
// fused = sum a_i z_i, p_malicious = sigmoid(w_out . fused + b_out).
template <typename Scalar>
struct MetaParamsT {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 2> w1;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b1;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w2;
    Eigen::Matrix<Scalar, 2, 1> w_out = Eigen::Matrix<Scalar, 2, 1>::Zero();
    Scalar b_out = 0;

    std::uint64_t seed = 0;
    double learning_rate = 0.0;
    int epochs = 0;
    std::vector<double> loss_history;
    int best_epoch = 0;

    int hidden() const { return static_cast<int>(w1.rows()); }

    bool all_finite() const {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && w_out.allFinite() && std::isfinite(b_out);
    }
};

using MetaParams = MetaParamsT<double>;

inline constexpr int kMetaHidden = 8;

MetaParams init_meta_params(std::uint64_t seed, int hidden = kMetaHidden);

struct MetaOutput {
    ClassProbs p;
    Eigen::VectorXd attention;
    Eigen::VectorXd scores;  // pre-softmax e
    Eigen::Vector2d fused;
};

MetaOutput meta_forward(const MetaParams& params, const BaseOutputs& outs);

struct MetaSample {
    BaseOutputs outputs;
    int label = 0;  // 1 = malicious
};

// Mean binary cross-entropy of p_malicious over the samples.
double meta_loss(const MetaParams& params, std::span<const MetaSample> data);

// Gradient of meta_loss; the returned params hold gradients in place of weights.
MetaParams meta_gradient(const MetaParams& params, std::span<const MetaSample> data);

struct MetaTrainOptions {
    std::uint64_t seed = 0;
    double learning_rate = 0.5;
    int epochs = 200;
    int hidden = kMetaHidden;
};

// Per-sample SGD with seeded shuffling. Returns the parameters with the
// lowest full-data loss seen; throws TrainingError on divergence.
MetaParams meta_train(std::span<const MetaSample> data, const MetaTrainOptions& options);

// Min-max normalizes each learner's scores (constant rankings map to 0.5),
// then sums attention-weighted scores; an edge a learner did not score
// contributes 0 for that learner.
EdgeRanking ensemble_explain(std::span<const EdgeRanking> per_learner, const Eigen::VectorXd& attention);

struct EnsemblePrediction {
    MetaOutput meta;
    BaseOutputs outputs;
};

EnsemblePrediction ensemble_predict(std::span<Classifier* const> models, const MetaParams& params, const Graph& g);

}  // namespace cfgkit
