#include <cctype>
#include "cfgkit/json_io.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cfgkit/errors.hpp"

namespace cfgkit {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ParseError((path.empty() ? std::string("/") : path) + ": " + what);
}

const Json& require(const Json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(path + "/" + key, "missing required field");
    return *it;
}

const Json* optional_field(const Json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return nullptr;
    return &*it;
}

long long as_int(const Json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<long long>();
}

double as_number(const Json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "expected a finite number");
    return x;
}

std::string as_string(const Json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

const Json& as_array(const Json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
}

void check_schema(const Json& doc, const char* schema) {
    const std::string got = as_string(require(doc, "schema", ""), "/schema");
    if (got != schema) fail("/schema", "expected '" + std::string(schema) + "', got '" + got + "'");
}

Meta meta_from_json(const Json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object of strings");
    Meta meta;
    for (const auto& [k, val] : v.items()) meta[k] = as_string(val, path + "/" + k);
    return meta;
}

Json with_meta(Json doc, const Meta& meta) {
    if (!meta.empty()) doc["meta"] = meta_json(meta);
    return doc;
}

std::uint8_t parse_byte(const std::string& hex, const std::string& path) {
    if (hex.size() != 2) fail(path, "expected one byte as two hex digits");
    std::size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(hex, &used, 16);
    } catch (const std::exception&) {
        fail(path, "invalid hex byte '" + hex + "'");
    }
    if (used != 2) fail(path, "invalid hex byte '" + hex + "'");
    return static_cast<std::uint8_t>(v);
}

// Whitespace between bytes is ignored ("0f af" == "0faf").
std::vector<std::uint8_t> parse_bytes(const std::string& text, const std::string& path) {
    std::string hex;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) hex.push_back(c);
    }
    if (hex.size() % 2 != 0) fail(path, "hex string must have an even number of digits");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < hex.size(); i += 2) out.push_back(parse_byte(hex.substr(i, 2), path));
    return out;
}

std::string hex_bytes(const std::vector<std::uint8_t>& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
    Json data = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const Json& v, const std::string& path) {
    const auto rows = as_int(require(v, "rows", path), path + "/rows");
    const auto cols = as_int(require(v, "cols", path), path + "/cols");
    const Json& data = as_array(require(v, "data", path), path + "/data");
    if (rows < 0 || cols < 0 || static_cast<long long>(data.size()) != rows * cols) {
        fail(path + "/data", "expected rows*cols entries");
    }
    Eigen::MatrixXd m(rows, cols);
    for (long long i = 0; i < rows; ++i) {
        for (long long j = 0; j < cols; ++j) {
            const auto k = static_cast<std::size_t>(i * cols + j);
            m(i, j) = as_number(data[k], path + "/data/" + std::to_string(k));
        }
    }
    return m;
}

Json vector_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const Json& v, const std::string& path) {
    as_array(v, path);
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = as_number(v[i], path + "/" + std::to_string(i));
    return out;
}

Json history_json(const std::vector<double>& h) {
    Json out = Json::array();
    for (double x : h) out.push_back(x);
    return out;
}

std::vector<double> history_from_json(const Json& doc, const char* key) {
    std::vector<double> out;
    if (const Json* h = optional_field(doc, key)) {
        as_array(*h, std::string("/") + key);
        for (std::size_t i = 0; i < h->size(); ++i) out.push_back(as_number((*h)[i], std::string("/") + key + "/" + std::to_string(i)));
    }
    return out;
}

}  // namespace

Json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_json_file(const fs::path& path, const Json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

Json meta_json(const Meta& meta) {
    Json out = Json::object();
    for (const auto& [k, v] : meta) out[k] = v;
    return out;
}

Json to_json(const Graph& g) {
    Json nodes = Json::array();
    for (const auto& n : g.nodes()) {
        Json node{{"id", n.id}};
        if (n.label) node["label"] = *n.label;
        if (n.feat) node["feat"] = vector_json(*n.feat);
        nodes.push_back(std::move(node));
    }
    Json edges = Json::array();
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
        Json edge{{"src", g.edges()[i].src}, {"dst", g.edges()[i].dst}};
        if (g.edge_kind(i)) edge["kind"] = *g.edge_kind(i);
        edges.push_back(std::move(edge));
    }
    return Json{{"schema", kGraphSchema},   {"directed", true},
                {"nodes", std::move(nodes)}, {"edges", std::move(edges)},
                {"graph_label", to_string(g.label())}, {"meta", meta_json(g.meta())}};
}

Graph graph_from_json(const Json& doc) {
    if (!doc.is_object()) fail("", "expected a graph object");
    check_schema(doc, kGraphSchema);
    const Json& directed = require(doc, "directed", "");
    if (!directed.is_boolean() || !directed.get<bool>()) fail("/directed", "must be true");

    std::vector<NodeRecord> nodes;
    const Json& jn = as_array(require(doc, "nodes", ""), "/nodes");
    for (std::size_t i = 0; i < jn.size(); ++i) {
        const std::string path = "/nodes/" + std::to_string(i);
        NodeRecord r;
        r.id = static_cast<NodeId>(as_int(require(jn[i], "id", path), path + "/id"));
        if (const Json* label = optional_field(jn[i], "label")) r.label = as_string(*label, path + "/label");
        if (const Json* feat = optional_field(jn[i], "feat")) r.feat = vector_from_json(*feat, path + "/feat");
        nodes.push_back(std::move(r));
    }
    // Ids may arrive in any order as long as they are exactly 0..n-1.
    std::sort(nodes.begin(), nodes.end(), [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });

    std::vector<Edge> edges;
    std::vector<std::optional<std::string>> kinds;
    const Json& je = as_array(require(doc, "edges", ""), "/edges");
    for (std::size_t i = 0; i < je.size(); ++i) {
        const std::string path = "/edges/" + std::to_string(i);
        Edge e{static_cast<NodeId>(as_int(require(je[i], "src", path), path + "/src")),
               static_cast<NodeId>(as_int(require(je[i], "dst", path), path + "/dst"))};
        edges.push_back(e);
        if (const Json* kind = optional_field(je[i], "kind")) {
            kinds.emplace_back(as_string(*kind, path + "/kind"));
        } else {
            kinds.emplace_back();
        }
    }

    GraphLabel label = GraphLabel::unknown;
    if (const Json* jl = optional_field(doc, "graph_label")) {
        const std::string text = as_string(*jl, "/graph_label");
        if (text != "benign" && text != "malicious" && text != "unknown") fail("/graph_label", "unknown label '" + text + "'");
        label = parse_graph_label(text);
    }
    Meta meta;
    if (const Json* jm = optional_field(doc, "meta")) meta = meta_from_json(*jm, "/meta");
    for (const auto& [key, value] : doc.items()) {
        if (key == "schema" || key == "directed" || key == "nodes" || key == "edges" || key == "graph_label" ||
            key == "meta") {
            continue;
        }
        meta["extra." + key] = value.dump();
    }
    return Graph(std::move(nodes), std::move(edges), label, std::move(meta), std::move(kinds));
}

Graph load_graph(const fs::path& path) {
    const Json doc = read_json_file(path);
    try {
        return graph_from_json(doc);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_graph(const fs::path& path, const Graph& g) { write_json_file(path, to_json(g)); }

Json to_json(const NodeMask& mask, const Meta& meta) {
    Json scores = Json::array();
    for (const auto& [id, s] : mask.scores) scores.push_back(Json::array({id, s}));
    return with_meta(Json{{"schema", kMaskSchema}, {"scores", std::move(scores)}}, meta);
}

NodeMask mask_from_json(const Json& doc) {
    check_schema(doc, kMaskSchema);
    NodeMask mask;
    const Json& scores = as_array(require(doc, "scores", ""), "/scores");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const std::string path = "/scores/" + std::to_string(i);
        if (!scores[i].is_array() || scores[i].size() != 2) fail(path, "expected [node_id, score]");
        mask.scores.emplace_back(static_cast<NodeId>(as_int(scores[i][0], path + "/0")), as_number(scores[i][1], path + "/1"));
    }
    return mask;
}

Json to_json(const EdgeRanking& ranking, const Meta& meta) {
    Json scores = Json::array();
    for (const auto& se : ranking.entries()) scores.push_back(Json::array({se.edge.src, se.edge.dst, se.score}));
    return with_meta(Json{{"schema", kScoresSchema}, {"explainer", ranking.explainer()}, {"scores", std::move(scores)}},
                     meta);
}

EdgeRanking ranking_from_json(const Json& doc) {
    check_schema(doc, kScoresSchema);
    std::string explainer;
    if (const Json* e = optional_field(doc, "explainer")) explainer = as_string(*e, "/explainer");
    const Json& scores = as_array(require(doc, "scores", ""), "/scores");
    std::vector<ScoredEdge> entries;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const std::string path = "/scores/" + std::to_string(i);
        if (!scores[i].is_array() || scores[i].size() != 3) fail(path, "expected [src, dst, score]");
        entries.push_back({{static_cast<NodeId>(as_int(scores[i][0], path + "/0")),
                            static_cast<NodeId>(as_int(scores[i][1], path + "/1"))},
                           as_number(scores[i][2], path + "/2")});
    }
    return EdgeRanking(std::move(explainer), std::move(entries));
}

EdgeRanking load_ranking(const fs::path& path) {
    const Json doc = read_json_file(path);
    try {
        return ranking_from_json(doc);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Json to_json(const ExplanationSubgraph& s, const Meta& meta) {
    Json edges = Json::array();
    for (const auto& e : s.edges) edges.push_back(Json::array({e.src, e.dst}));
    Json nodes = Json::array();
    for (NodeId v : s.nodes) nodes.push_back(v);
    return with_meta(Json{{"schema", kExplSchema},
                          {"edges", std::move(edges)},
                          {"nodes", std::move(nodes)},
                          {"budget", s.budget},
                          {"budget_used", s.budget_used}},
                     meta);
}

ExplanationSubgraph explanation_from_json(const Json& doc) {
    check_schema(doc, kExplSchema);
    const Json& edges = as_array(require(doc, "edges", ""), "/edges");
    std::vector<Edge> out;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string path = "/edges/" + std::to_string(i);
        if (!edges[i].is_array() || edges[i].size() != 2) fail(path, "expected [src, dst]");
        out.push_back({static_cast<NodeId>(as_int(edges[i][0], path + "/0")),
                       static_cast<NodeId>(as_int(edges[i][1], path + "/1"))});
    }
    int budget = static_cast<int>(out.size());
    if (const Json* b = optional_field(doc, "budget")) budget = static_cast<int>(as_int(*b, "/budget"));
    return make_explanation(std::move(out), budget);
}

InstructionRecord instruction_from_json(const Json& doc, const std::string& where) {
    const std::string& p = where;
    if (!doc.is_object()) fail(p, "expected an instruction object");
    InstructionRecord ins;
    if (const Json* v = optional_field(doc, "legacy_prefixes")) {
        if (v->is_array()) {
            for (std::size_t i = 0; i < v->size(); ++i) {
                const std::string path = p + "/legacy_prefixes/" + std::to_string(i);
                ins.legacy_prefixes.push_back(parse_byte(as_string((*v)[i], path), path));
            }
        } else {
            ins.legacy_prefixes = parse_bytes(as_string(*v, p + "/legacy_prefixes"), p + "/legacy_prefixes");
        }
    }
    if (const Json* v = optional_field(doc, "rex")) ins.rex = parse_byte(as_string(*v, p + "/rex"), p + "/rex");
    {
        const Json& v = require(doc, "opcode", p);
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string path = p + "/opcode/" + std::to_string(i);
                ins.opcode.push_back(parse_byte(as_string(v[i], path), path));
            }
        } else {
            ins.opcode = parse_bytes(as_string(v, p + "/opcode"), p + "/opcode");
        }
    }
    if (const Json* v = optional_field(doc, "modrm")) ins.modrm = parse_byte(as_string(*v, p + "/modrm"), p + "/modrm");
    if (const Json* v = optional_field(doc, "sib")) ins.sib = parse_byte(as_string(*v, p + "/sib"), p + "/sib");
    auto sized = [&](const char* key) -> std::optional<SizedValue> {
        const Json* v = optional_field(doc, key);
        if (!v) return std::nullopt;
        const std::string path = p + "/" + key;
        SizedValue s;
        s.value = as_int(require(*v, "value", path), path + "/value");
        s.width = static_cast<int>(as_int(require(*v, "width", path), path + "/width"));
        return s;
    };
    ins.displacement = sized("displacement");
    ins.immediate = sized("immediate");
    ins.mnemonic = as_string(require(doc, "mnemonic", p), p + "/mnemonic");
    if (const Json* v = optional_field(doc, "operand_count")) ins.operand_count = static_cast<int>(as_int(*v, p + "/operand_count"));
    ins.length = static_cast<int>(as_int(require(doc, "length", p), p + "/length"));
    if (const Json* v = optional_field(doc, "block")) ins.block = static_cast<int>(as_int(*v, p + "/block"));
    return ins;
}

Json to_json(const InstructionRecord& ins) {
    Json doc{{"schema", kInstructionSchema}};
    if (!ins.legacy_prefixes.empty()) doc["legacy_prefixes"] = hex_bytes(ins.legacy_prefixes);
    if (ins.rex) doc["rex"] = hex_bytes({*ins.rex});
    doc["opcode"] = hex_bytes(ins.opcode);
    if (ins.modrm) doc["modrm"] = hex_bytes({*ins.modrm});
    if (ins.sib) doc["sib"] = hex_bytes({*ins.sib});
    if (ins.displacement) doc["displacement"] = Json{{"value", ins.displacement->value}, {"width", ins.displacement->width}};
    if (ins.immediate) doc["immediate"] = Json{{"value", ins.immediate->value}, {"width", ins.immediate->width}};
    doc["mnemonic"] = ins.mnemonic;
    doc["operand_count"] = ins.operand_count;
    doc["length"] = ins.length;
    if (ins.block) doc["block"] = *ins.block;
    return doc;
}

std::vector<InstructionRecord> read_instructions(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<InstructionRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        Json doc;
        try {
            doc = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (const Json* s = optional_field(doc, "schema")) {
            if (!s->is_string() || s->get<std::string>() != kInstructionSchema) fail(where + "/schema", "expected cfgkit-ins/1");
        }
        out.push_back(instruction_from_json(doc, where));
    }
    return out;
}

MnemonicTable mnemonic_table_from_json(const Json& doc) {
    if (!doc.is_object()) fail("", "mnemonic table must be an object of name -> class index");
    MnemonicTable table;
    for (const auto& [k, v] : doc.items()) {
        const auto idx = as_int(v, "/" + k);
        if (idx < 0 || idx >= kMnemonicClasses) fail("/" + k, "class index must be in [0, 200)");
        table[k] = static_cast<int>(idx);
    }
    if (table.size() > static_cast<std::size_t>(kMnemonicClasses)) fail("", "more than 200 mnemonic classes");
    return table;
}

Json to_json(const EncoderModel& model) {
    return Json{{"schema", kEncoderSchema},
                {"input_dim", model.input_dim()},
                {"hidden_dim", model.hidden_dim()},
                {"w_enc", matrix_json(model.w_enc)},
                {"b_enc", vector_json(model.b_enc)},
                {"w_dec", matrix_json(model.w_dec)},
                {"b_dec", vector_json(model.b_dec)},
                {"seed", model.seed},
                {"learning_rate", model.learning_rate},
                {"epochs", model.epochs},
                {"batch_size", model.batch_size},
                {"best_epoch", model.best_epoch},
                {"loss_history", history_json(model.loss_history)}};
}

EncoderModel encoder_from_json(const Json& doc) {
    check_schema(doc, kEncoderSchema);
    EncoderModel m;
    m.w_enc = matrix_from_json(require(doc, "w_enc", ""), "/w_enc");
    m.b_enc = vector_from_json(require(doc, "b_enc", ""), "/b_enc");
    m.w_dec = matrix_from_json(require(doc, "w_dec", ""), "/w_dec");
    m.b_dec = vector_from_json(require(doc, "b_dec", ""), "/b_dec");
    if (m.b_enc.size() != m.w_enc.rows() || m.w_dec.rows() != m.w_enc.cols() || m.w_dec.cols() != m.w_enc.rows() ||
        m.b_dec.size() != m.w_dec.rows()) {
        fail("", "encoder parameter shapes are inconsistent");
    }
    if (const Json* v = optional_field(doc, "seed")) m.seed = v->get<std::uint64_t>();
    if (const Json* v = optional_field(doc, "learning_rate")) m.learning_rate = as_number(*v, "/learning_rate");
    if (const Json* v = optional_field(doc, "epochs")) m.epochs = static_cast<int>(as_int(*v, "/epochs"));
    if (const Json* v = optional_field(doc, "batch_size")) m.batch_size = static_cast<int>(as_int(*v, "/batch_size"));
    if (const Json* v = optional_field(doc, "best_epoch")) m.best_epoch = static_cast<int>(as_int(*v, "/best_epoch"));
    m.loss_history = history_from_json(doc, "loss_history");
    return m;
}

Json to_json(const MetaParams& params) {
    return Json{{"schema", kMetaParamsSchema},
                {"hidden", params.hidden()},
                {"w1", matrix_json(params.w1)},
                {"b1", vector_json(params.b1)},
                {"w2", vector_json(params.w2)},
                {"w_out", vector_json(params.w_out)},
                {"b_out", params.b_out},
                {"seed", params.seed},
                {"learning_rate", params.learning_rate},
                {"epochs", params.epochs},
                {"best_epoch", params.best_epoch},
                {"loss_history", history_json(params.loss_history)}};
}

MetaParams meta_params_from_json(const Json& doc) {
    check_schema(doc, kMetaParamsSchema);
    MetaParams p;
    const Eigen::MatrixXd w1 = matrix_from_json(require(doc, "w1", ""), "/w1");
    if (w1.cols() != 2) fail("/w1", "expected h x 2");
    p.w1 = w1;
    p.b1 = vector_from_json(require(doc, "b1", ""), "/b1");
    p.w2 = vector_from_json(require(doc, "w2", ""), "/w2");
    const Eigen::VectorXd w_out = vector_from_json(require(doc, "w_out", ""), "/w_out");
    if (w_out.size() != 2) fail("/w_out", "expected 2 entries");
    p.w_out = w_out;
    p.b_out = as_number(require(doc, "b_out", ""), "/b_out");
    if (p.b1.size() != p.w1.rows() || p.w2.size() != p.w1.rows()) fail("", "meta parameter shapes are inconsistent");
    if (const Json* v = optional_field(doc, "seed")) p.seed = v->get<std::uint64_t>();
    if (const Json* v = optional_field(doc, "learning_rate")) p.learning_rate = as_number(*v, "/learning_rate");
    if (const Json* v = optional_field(doc, "epochs")) p.epochs = static_cast<int>(as_int(*v, "/epochs"));
    if (const Json* v = optional_field(doc, "best_epoch")) p.best_epoch = static_cast<int>(as_int(*v, "/best_epoch"));
    p.loss_history = history_from_json(doc, "loss_history");
    return p;
}

Json to_json(const QueryBoxConfig& config) {
    return Json{{"theta_verify", config.theta_verify},
                {"n_min", config.n_min},
                {"n_max", config.n_max},
                {"compat", to_string(config.compat)},
                {"max_matches", config.limits.max_matches},
                {"time_budget_ms", config.limits.time_budget.count()}};
}

QueryBoxConfig box_config_from_json(const Json& doc, const std::string& path) {
    QueryBoxConfig c;
    if (!doc.is_object()) fail(path, "expected an object");
    if (const Json* v = optional_field(doc, "theta_verify")) c.theta_verify = as_number(*v, path + "/theta_verify");
    if (const Json* v = optional_field(doc, "n_min")) c.n_min = static_cast<int>(as_int(*v, path + "/n_min"));
    if (const Json* v = optional_field(doc, "n_max")) c.n_max = static_cast<int>(as_int(*v, path + "/n_max"));
    if (const Json* v = optional_field(doc, "compat")) {
        try {
            c.compat = parse_compat(as_string(*v, path + "/compat"));
        } catch (const ArgumentError& e) {
            fail(path + "/compat", e.what());
        }
    }
    if (const Json* v = optional_field(doc, "max_matches")) {
        const auto m = as_int(*v, path + "/max_matches");
        if (m < 1) fail(path + "/max_matches", "must be positive");
        c.limits.max_matches = static_cast<std::size_t>(m);
    }
    if (const Json* v = optional_field(doc, "time_budget_ms")) {
        c.limits.time_budget = std::chrono::milliseconds(as_int(*v, path + "/time_budget_ms"));
    }
    return c;
}

void save_query_box(const fs::path& dir, const QueryBox& box) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    Json index = Json::array();
    for (std::size_t i = 0; i < box.prototypes().size(); ++i) {
        const auto& proto = box.prototypes()[i];
        std::ostringstream name;
        name << "proto_" << std::setw(4) << std::setfill('0') << i << ".json";
        save_graph(dir / name.str(), proto.subgraph);
        index.push_back(Json{{"file", name.str()},
                             {"verdict", to_string(proto.verdict)},
                             {"source_id", proto.provenance.source_id},
                             {"explainer", proto.provenance.explainer},
                             {"verification_probability", proto.provenance.verification_probability}});
    }
    // Drop prototype files left over from a larger, earlier box.
    for (std::size_t i = box.prototypes().size();; ++i) {
        std::ostringstream name;
        name << "proto_" << std::setw(4) << std::setfill('0') << i << ".json";
        if (!fs::remove(dir / name.str(), ec)) break;
    }
    write_json_file(dir / "box.json",
                    Json{{"schema", kBoxSchema}, {"config", to_json(box.config())}, {"prototypes", std::move(index)}});
}

QueryBox load_query_box(const fs::path& dir) {
    const fs::path index_path = dir / "box.json";
    const Json doc = read_json_file(index_path);
    try {
        check_schema(doc, kBoxSchema);
        QueryBoxConfig config = box_config_from_json(require(doc, "config", ""));
        QueryBox box(config);
        const Json& protos = as_array(require(doc, "prototypes", ""), "/prototypes");
        for (std::size_t i = 0; i < protos.size(); ++i) {
            const std::string path = "/prototypes/" + std::to_string(i);
            const std::string file = as_string(require(protos[i], "file", path), path + "/file");
            Prototype proto;
            proto.subgraph = load_graph(dir / file);
            try {
                proto.verdict = parse_verdict(as_string(require(protos[i], "verdict", path), path + "/verdict"));
            } catch (const ArgumentError& e) {
                fail(path + "/verdict", e.what());
            }
            if (const Json* v = optional_field(protos[i], "source_id")) proto.provenance.source_id = as_string(*v, path + "/source_id");
            if (const Json* v = optional_field(protos[i], "explainer")) proto.provenance.explainer = as_string(*v, path + "/explainer");
            proto.provenance.verification_probability =
                as_number(require(protos[i], "verification_probability", path), path + "/verification_probability");
            box.add(std::move(proto));
        }
        return box;
    } catch (const ParseError& e) {
        throw ParseError(index_path.string() + ": " + e.what());
    }
}

}  // namespace cfgkit
