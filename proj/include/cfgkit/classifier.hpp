#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

#include "cfgkit/graph.hpp"

namespace cfgkit {

// (p_benign, p_malicious).
using ClassProbs = Eigen::Vector2d;

// Malicious iff p_malicious >= 0.5.
inline int predicted_class(const ClassProbs& p) { return p[1] >= 0.5 ? 1 : 0; }

// Anything that answers probability queries for a graph: the built-in
// surrogate or an external adapter process.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual ClassProbs predict(const Graph& g) = 0;
    virtual std::string name() const = 0;
};

// Resolves a model URI: `builtin:mp-{mean|sum|max}:{seed}` or
// `adapter:<command line>` (whitespace-separated argv).
std::unique_ptr<Classifier> open_model(const std::string& uri);

}  // namespace cfgkit
