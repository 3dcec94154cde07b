#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include <Eigen/Dense>

#include "cfgkit/classifier.hpp"
#include "cfgkit/explain.hpp"

namespace cfgkit {

enum class Aggregation { mean, sum, max };

std::string to_string(Aggregation agg);
Aggregation parse_aggregation(const std::string& text);

inline constexpr int kSurrogateHidden1 = 16;
inline constexpr int kSurrogateHidden2 = 8;
inline constexpr int kDegreeFeatureCap = 15;

// Untrained message-passing classifier d_in -> 16 -> 8 -> readout. All
// weights are reconstructed from (seed, aggregation, d_in).
struct SurrogateParams {
    std::uint64_t seed = 0;
    Aggregation aggregation = Aggregation::mean;
    int input_dim = 0;
    Eigen::MatrixXd w1;       // 16 x d_in
    Eigen::MatrixXd w2;       // 8 x 16
    Eigen::VectorXd readout;  // 8

    static SurrogateParams make(std::uint64_t seed, Aggregation aggregation, int input_dim);
};

// Node features as a d x n matrix; graphs without features get a one-hot of
// the undirected degree clipped at 15.
Eigen::MatrixXd node_feature_matrix(const Graph& g);
int surrogate_input_dim(const Graph& g);

ClassProbs surrogate_predict(const SurrogateParams& params, const Graph& g);

// score(e) = p_c(g) - p_c(g without e) for the predicted class c.
EdgeRanking occlusion_explain(const SurrogateParams& params, const Graph& g);

// Classifier handle over the surrogate; parameters are built lazily per
// input dimension and cached.
class SurrogateModel : public Classifier {
public:
    SurrogateModel(std::uint64_t seed, Aggregation aggregation) : seed_(seed), aggregation_(aggregation) {}

    ClassProbs predict(const Graph& g) override;
    std::string name() const override;
    const SurrogateParams& params_for(int input_dim);
    EdgeRanking explain(const Graph& g);

    std::uint64_t seed() const { return seed_; }
    Aggregation aggregation() const { return aggregation_; }

private:
    std::uint64_t seed_;
    Aggregation aggregation_;
    std::mutex mutex_;
    std::map<int, SurrogateParams> cache_;
};

}  // namespace cfgkit
