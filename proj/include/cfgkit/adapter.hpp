#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "cfgkit/classifier.hpp"
#include "cfgkit/explain.hpp"
#include "cfgkit/json_io.hpp"

namespace cfgkit {

inline constexpr const char* kAdapterSchema = "cfgkit-adapter/1";

struct AdapterTimeouts {
    std::chrono::milliseconds handshake{10'000};
    std::chrono::milliseconds request{60'000};
};

struct AdapterInfo {
    std::string name;
    std::string version;
    std::vector<std::string> ops;

    bool supports(const std::string& op) const;
};

struct AdapterExplanation {
    EdgeRanking ranking;
    // Set when the adapter returned no scores for a graph that has edges.
    bool empty_warning = false;
};

// One child process speaking newline-delimited JSON over stdin/stdout, one
// request in flight at a time. The hello handshake runs in the constructor.
// Stderr of the child is captured and attached to adapter errors.
class Adapter : public Classifier {
public:
    explicit Adapter(std::vector<std::string> command, AdapterTimeouts timeouts = {});
    ~Adapter() override;

    Adapter(const Adapter&) = delete;
    Adapter& operator=(const Adapter&) = delete;

    const AdapterInfo& info() const { return info_; }

    ClassProbs predict(const Graph& g) override;
    std::string name() const override;
    AdapterExplanation explain(const Graph& g, const std::string& method);

    // Sends `request` with a fresh id and returns the matched response
    // without interpreting `ok`.
    Json raw_request(Json request);
    // Writes an arbitrary line and reads one response line.
    Json raw_line(const std::string& line);

    std::string diagnostics() const;

private:
    Json read_response(std::chrono::milliseconds timeout);
    Json checked(Json response, long long id);
    void write_line(const std::string& line);
    void drain_stderr();
    void shutdown();

    std::vector<std::string> command_;
    AdapterTimeouts timeouts_;
    AdapterInfo info_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    int err_child_ = -1;
    long long next_id_ = 1;
    std::string stdout_buffer_;
    std::string stderr_buffer_;
};

// Parses and validates a response to `predict`.
ClassProbs parse_probs(const Json& response);
// Converts `edge_scores` into a ranking validated against g.
AdapterExplanation parse_edge_scores(const Json& response, const Graph& g, const std::string& explainer);

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Runs the protocol conformance suite against an adapter command: hello,
// repeated predict, explain for each advertised method, and the
// invalid-request cases (unknown op, malformed line, missing graph).
std::vector<ConformanceCheck> run_conformance(const std::vector<std::string>& command,
                                              const std::vector<std::string>& explain_methods = {},
                                              AdapterTimeouts timeouts = {});

// Splits on whitespace; double quotes group words.
std::vector<std::string> split_command(const std::string& text);

}  // namespace cfgkit
