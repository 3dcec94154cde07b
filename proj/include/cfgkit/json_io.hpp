#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfgkit/ensemble.hpp"
#include "cfgkit/explain.hpp"
#include "cfgkit/featurize.hpp"
#include "cfgkit/graph.hpp"
#include "cfgkit/submatch.hpp"

namespace cfgkit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr const char* kGraphSchema = "cfgkit-graph/1";
inline constexpr const char* kMaskSchema = "cfgkit-mask/1";
inline constexpr const char* kScoresSchema = "cfgkit-scores/1";
inline constexpr const char* kExplSchema = "cfgkit-expl/1";
inline constexpr const char* kInstructionSchema = "cfgkit-ins/1";
inline constexpr const char* kEncoderSchema = "cfgkit-encoder/1";
inline constexpr const char* kMetaParamsSchema = "cfgkit-meta/1";
inline constexpr const char* kBoxSchema = "cfgkit-box/1";

// Reads one JSON document. IoError when the file cannot be read, ParseError
// (with the file name) when it is not JSON.
Json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline; IoError on failure.
void write_json_file(const std::filesystem::path& path, const Json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Every from_json below throws ParseError naming the offending JSON path
// (e.g. "/edges/3/dst") for schema violations and lets ValidationError
// through for type invariants.

Json to_json(const Graph& g);
Graph graph_from_json(const Json& doc);
Graph load_graph(const std::filesystem::path& path);
void save_graph(const std::filesystem::path& path, const Graph& g);

Json to_json(const NodeMask& mask, const Meta& meta = {});
NodeMask mask_from_json(const Json& doc);

Json to_json(const EdgeRanking& ranking, const Meta& meta = {});
EdgeRanking ranking_from_json(const Json& doc);
EdgeRanking load_ranking(const std::filesystem::path& path);

Json to_json(const ExplanationSubgraph& s, const Meta& meta = {});
ExplanationSubgraph explanation_from_json(const Json& doc);

InstructionRecord instruction_from_json(const Json& doc, const std::string& where = "");
Json to_json(const InstructionRecord& ins);
// One record per nonblank line; errors name the line number.
std::vector<InstructionRecord> read_instructions(const std::filesystem::path& path);
MnemonicTable mnemonic_table_from_json(const Json& doc);

Json to_json(const EncoderModel& model);
EncoderModel encoder_from_json(const Json& doc);

Json to_json(const MetaParams& params);
MetaParams meta_params_from_json(const Json& doc);

// Directory layout: box.json (config + prototype index) and one graph
// document per prototype.
void save_query_box(const std::filesystem::path& dir, const QueryBox& box);
QueryBox load_query_box(const std::filesystem::path& dir);

Json to_json(const QueryBoxConfig& config);
QueryBoxConfig box_config_from_json(const Json& doc, const std::string& path = "/config");

// Meta values as a JSON object of strings.
Json meta_json(const Meta& meta);

}  // namespace cfgkit
