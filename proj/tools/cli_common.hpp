#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfgkit/classifier.hpp"
#include "cfgkit/explain.hpp"
#include "cfgkit/json_io.hpp"

namespace cfgkit::cli {

namespace fs = std::filesystem;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitUsage = 64;

int exit_code_for(const std::exception& e);

// Verbosity from CFGKIT_LOG (error|warn|info|debug, default warn). Logging
// goes to stderr and never affects outputs.
enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
void log(LogLevel level, const std::string& message);

// Reads a JSON object as option values for the subcommand selected on the
// command line. Flat keys apply to every subcommand and are skipped when it
// has no such option; an object keyed by the subcommand name (nested for
// sub-subcommands, e.g. {"querybox": {"add": {...}}}) holds stage-specific
// values, which win over flat ones and must all be known options.
// Command-line flags win over both.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}
    std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                          std::string prefix) const override;
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;

private:
    const CLI::App* root_;
};

// Installs --config with the JSON reader on the root app. Falling through
// lets it follow the subcommand name.
void enable_json_config(CLI::App* root);

// Every option of the subcommand with its effective value. Excludes help
// and --jobs (parallelism never changes results).
Json parameter_echo(const CLI::App* app);

// Provenance entries for output meta.
Meta provenance(const CLI::App* app);
std::string command_path(const CLI::App* app);

Graph with_provenance(const Graph& g, const Meta& extra);

// Expands files and directories (their *.json entries, sorted by name).
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs);

// Runs task(i, worker) for i in [0, n) on up to `jobs` threads; worker is in
// [0, jobs). When tasks fail, the error of the lowest index is rethrown so
// failures are deterministic.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t, std::size_t)>& task);

// A single graph file or a directory of them. Per-graph companion inputs
// (rankings, explanations) must then be directories holding files of the
// same names, and outputs become directories too.
struct Corpus {
    bool directory = false;
    std::vector<std::string> names;

    static Corpus from(const std::string& primary);
    std::size_t size() const { return names.size(); }
    fs::path input(const std::string& path, std::size_t i) const;
    // Creates the output directory on first use in directory mode.
    fs::path output(const std::string& path, std::size_t i) const;
};

void ensure_directory(const fs::path& dir);

// Writes to `path`, or to stdout when path is empty or "-".
void emit_json(const std::string& path, const Json& doc);

// Explains g with the model behind `model_uri`-style handles: occlusion for
// the built-in surrogate, the named adapter method otherwise.
EdgeRanking explain_with(Classifier& model, const Graph& g, const std::string& method);

}  // namespace cfgkit::cli
