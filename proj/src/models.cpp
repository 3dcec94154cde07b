#include <cstdlib>

#include "cfgkit/adapter.hpp"
#include "cfgkit/classifier.hpp"
#include "cfgkit/errors.hpp"
#include "cfgkit/surrogate.hpp"

namespace cfgkit {

std::unique_ptr<Classifier> open_model(const std::string& uri) {
    const std::string builtin = "builtin:mp-";
    if (uri.rfind(builtin, 0) == 0) {
        const std::string rest = uri.substr(builtin.size());
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw ArgumentError("model URI '" + uri + "' lacks a seed");
        const Aggregation agg = parse_aggregation(rest.substr(0, colon));
        const std::string seed_text = rest.substr(colon + 1);
        char* end = nullptr;
        const unsigned long long seed = std::strtoull(seed_text.c_str(), &end, 10);
        if (seed_text.empty() || !end || *end != '\0' || seed_text.front() == '-') {
            throw ArgumentError("model URI '" + uri + "' has an invalid seed");
        }
        return std::make_unique<SurrogateModel>(seed, agg);
    }
    const std::string adapter = "adapter:";
    if (uri.rfind(adapter, 0) == 0) {
        return std::make_unique<Adapter>(split_command(uri.substr(adapter.size())));
    }
    throw ArgumentError("unknown model URI '" + uri + "' (expected builtin:mp-{mean|sum|max}:{seed} or adapter:<command>)");
}

}  // namespace cfgkit
