// cfgkit command-line front end.
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "cfgkit/adapter.hpp"
#include "cfgkit/ensemble.hpp"
#include "cfgkit/errors.hpp"
#include "cfgkit/featurize.hpp"
#include "cfgkit/reduce.hpp"
#include "cfgkit/submatch.hpp"
#include "cfgkit/surrogate.hpp"
#include "cli_common.hpp"

namespace cfgkit::cli {
namespace {

inline constexpr const char* kReportSchema = "cfgkit-report/1";
inline constexpr const char* kEnsembleSchema = "cfgkit-ensemble/1";
inline constexpr const char* kEmbeddingsSchema = "cfgkit-embeddings/1";

std::function<void()> g_action;

void set_action(CLI::App* sub, std::function<void()> action) {
    sub->callback([action = std::move(action)] { g_action = action; });
}

Json with_meta_field(Json doc, const Meta& meta) {
    doc["meta"] = meta_json(meta);
    return doc;
}

std::string sample_name(std::size_t i, std::size_t count) {
    std::ostringstream os;
    const int width = std::max<int>(4, static_cast<int>(std::to_string(count - 1).size()));
    os << "g_" << std::setw(width) << std::setfill('0') << i << ".json";
    return os.str();
}

// Lazily opens one model handle per worker; adapters serve one request at a time.
class ModelPool {
public:
    ModelPool(std::string uri, int jobs) : uri_(std::move(uri)), models_(static_cast<std::size_t>(std::max(1, jobs))) {}
    Classifier& get(std::size_t worker) {
        auto& slot = models_.at(worker);
        if (!slot) slot = open_model(uri_);
        return *slot;
    }

private:
    std::string uri_;
    std::vector<std::unique_ptr<Classifier>> models_;
};

// ---------------------------------------------------------------- gen

struct GenOptions {
    std::uint64_t seed = 0;
    int n = 20;
    std::string style = "hub";
    int count = 1;
    std::string out;
    std::string label = "none";
    int jobs = 1;
};

GraphLabel gen_label(const std::string& mode, CfgStyle style) {
    if (mode == "by-style") return style == CfgStyle::hub ? GraphLabel::malicious : GraphLabel::benign;
    if (mode == "none") return GraphLabel::unknown;
    return parse_graph_label(mode);
}

void run_gen(const CLI::App* sub, const GenOptions& o) {
    const Meta prov = provenance(sub);
    auto make = [&](std::size_t i) {
        CfgStyle style;
        if (o.style == "mixed") {
            style = i % 2 == 0 ? CfgStyle::chain_heavy : CfgStyle::hub;
        } else {
            style = parse_cfg_style(o.style);
        }
        const Graph g = generate_synthetic_cfg(o.seed + i, o.n, style);
        const Graph labeled(g.nodes(), g.edges(), gen_label(o.label, style), g.meta(), g.edge_kinds());
        return with_provenance(labeled, prov);
    };
    if (o.count == 1) {
        save_graph(o.out, make(0));
        return;
    }
    ensure_directory(o.out);
    const auto count = static_cast<std::size_t>(o.count);
    parallel_for(count, o.jobs, [&](std::size_t i, std::size_t) {
        save_graph(fs::path(o.out) / sample_name(i, count), make(i));
    });
    log(LogLevel::info, "wrote " + std::to_string(count) + " graphs to " + o.out);
}

void add_gen(CLI::App& app) {
    auto o = std::make_shared<GenOptions>();
    auto* sub = app.add_subcommand("gen", "Generate seeded synthetic CFGs");
    sub->add_option("--seed", o->seed, "Generator seed (graph i uses seed + i)")->required();
    sub->add_option("--n", o->n, "Basic blocks per graph")->check(CLI::PositiveNumber);
    sub->add_option("--style", o->style, "Graph style; mixed alternates chain-heavy and hub")
        ->check(CLI::IsMember({"chain-heavy", "hub", "random-dag", "mixed"}));
    sub->add_option("--count", o->count, "Number of graphs; above 1, -o names a directory")->check(CLI::PositiveNumber);
    sub->add_option("--label", o->label, "Graph label; by-style marks hub graphs malicious, others benign")
        ->check(CLI::IsMember({"none", "benign", "malicious", "by-style"}));
    sub->add_option("-o,--out", o->out, "Output graph file or directory")->required();
    sub->add_option("--jobs", o->jobs, "Worker threads")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_gen(sub, *o); });
}

// ---------------------------------------------------------------- reduce

struct ReduceOptions {
    std::string input, out, method;
    std::optional<int> walk_length;
    double rho = 0.8;
    double tau_j = 0.1;
    std::string walk_mode = "exact";
    int rounds = 1;
    std::string policy = "keep-largest";
    int min_size = 1;
    int k = 2;
    double fraction = 0.1;
    int recompute_every = 1;
    int jobs = 1;
};

Graph reduce_one(const Graph& g, const ReduceOptions& o, Meta& meta) {
    Json params;
    Graph out;
    if (o.method == "ncp") {
        NcpParams p;
        p.walk_length = o.walk_length.value_or(2);
        p.nexus_quantile = o.rho;
        p.jaccard_threshold = o.tau_j;
        p.walk_mode = parse_walk_mode(o.walk_mode);
        const NcpResult r = ncp_reduce(g, p);
        params = {{"L", p.walk_length}, {"rho", p.nexus_quantile}, {"tau_j", p.jaccard_threshold},
                  {"walk_mode", to_string(p.walk_mode)}};
        meta["ncp.nexus"] = std::to_string(r.partition.members(NodeRole::nexus).size());
        meta["ncp.connector"] = std::to_string(r.partition.members(NodeRole::connector).size());
        meta["ncp.sparse"] = std::to_string(r.partition.members(NodeRole::sparse).size());
        out = r.graph;
    } else if (o.method == "leaf") {
        params = {{"rounds", o.rounds}};
        out = leaf_prune(g, o.rounds);
    } else if (o.method == "component") {
        params = {{"policy", o.policy}};
        ComponentPolicy policy;
        if (o.policy == "min-size") {
            policy = ComponentPolicy::at_least(o.min_size);
            params["min_size"] = o.min_size;
        }
        out = component_prune(g, policy);
    } else if (o.method == "kcore") {
        params = {{"k", o.k}};
        out = k_core(g, o.k);
    } else {
        WisParams p;
        p.remove_fraction = o.fraction;
        p.walk_length = o.walk_length.value_or(3);
        p.recompute_every = o.recompute_every;
        params = {{"fraction", p.remove_fraction}, {"L", p.walk_length}, {"recompute_every", p.recompute_every}};
        out = wis_sparsify(g, p);
    }
    meta["reduction.method"] = o.method;
    meta["reduction.params"] = params.dump();
    meta["reduction.input_nodes"] = std::to_string(g.num_nodes());
    meta["reduction.input_edges"] = std::to_string(g.num_edges());
    return out;
}

void run_reduce(const CLI::App* sub, const ReduceOptions& o) {
    if (o.walk_length && (*o.walk_length < 1 || *o.walk_length > kMaxWalkLength)) {
        throw ArgumentError("--L must be in [1, " + std::to_string(kMaxWalkLength) + "]");
    }
    const Meta prov = provenance(sub);
    const Corpus corpus = Corpus::from(o.input);
    corpus.output(o.out, 0);
    parallel_for(corpus.size(), o.jobs, [&](std::size_t i, std::size_t) {
        const Graph g = load_graph(corpus.input(o.input, i));
        Meta meta = prov;
        const Graph r = reduce_one(g, o, meta);
        log(LogLevel::info, corpus.names[i] + ": " + std::to_string(g.num_nodes()) + " -> " +
                                std::to_string(r.num_nodes()) + " nodes, " + std::to_string(g.num_edges()) + " -> " +
                                std::to_string(r.num_edges()) + " edges");
        save_graph(corpus.output(o.out, i), with_provenance(r, meta));
    });
}

void add_reduce(CLI::App& app) {
    auto o = std::make_shared<ReduceOptions>();
    auto* sub = app.add_subcommand("reduce", "Reduce a graph (or a directory of graphs)");
    sub->add_option("-i,--input", o->input, "Input graph file or directory")->required();
    sub->add_option("-o,--out", o->out, "Output graph file or directory")->required();
    sub->add_option("--method", o->method, "Reduction method")
        ->required()
        ->check(CLI::IsMember({"ncp", "leaf", "component", "kcore", "wis"}));
    sub->add_option("--L", o->walk_length, "Walk length (default 2 for ncp, 3 for wis)");
    sub->add_option("--rho", o->rho, "ncp: Nexus score quantile")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--tau-j", o->tau_j, "ncp: Jaccard threshold for Connectors")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--walk-mode", o->walk_mode, "ncp: walks of length exactly L, or 1..L")
        ->check(CLI::IsMember({"exact", "upto"}));
    sub->add_option("--rounds", o->rounds, "leaf: pruning rounds")->check(CLI::PositiveNumber);
    sub->add_option("--policy", o->policy, "component: keep policy")->check(CLI::IsMember({"keep-largest", "min-size"}));
    sub->add_option("--min-size", o->min_size, "component: minimum component size")->check(CLI::PositiveNumber);
    sub->add_option("--k", o->k, "kcore: minimum undirected degree")->check(CLI::NonNegativeNumber);
    sub->add_option("--fraction", o->fraction, "wis: fraction of edges to remove")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--recompute-every", o->recompute_every, "wis: removals between index recomputations")
        ->check(CLI::PositiveNumber);
    sub->add_option("--jobs", o->jobs, "Worker threads for directory input")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_reduce(sub, *o); });
}

// ---------------------------------------------------------------- featurize

struct FeaturizeOptions {
    std::string instructions, mnemonics, graph, encoder, out;
    std::optional<std::uint64_t> project_seed;
};

void run_featurize(const CLI::App* sub, const FeaturizeOptions& o) {
    const auto records = read_instructions(o.instructions);
    MnemonicTable table;
    if (!o.mnemonics.empty()) {
        table = mnemonic_table_from_json(read_json_file(o.mnemonics));
    } else {
        log(LogLevel::warn, "no mnemonic table given; every mnemonic one-hot region stays zero");
    }
    const Graph g = load_graph(o.graph);
    std::vector<std::vector<BitVector439>> blocks(static_cast<std::size_t>(g.num_nodes()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.block) throw ValidationError("instruction " + std::to_string(i + 1) + " has no 'block' field");
        if (*r.block < 0 || *r.block >= g.num_nodes()) {
            throw ValidationError("instruction " + std::to_string(i + 1) + " names block " + std::to_string(*r.block) +
                                  " but the graph has " + std::to_string(g.num_nodes()) + " nodes");
        }
        blocks[static_cast<std::size_t>(*r.block)].push_back(encode_instruction(r, table));
    }

    std::optional<EncoderModel> encoder;
    if (!o.encoder.empty()) {
        encoder = encoder_from_json(read_json_file(o.encoder));
        if (encoder->input_dim() != kInstructionBits) {
            throw ValidationError("encoder input dimension is " + std::to_string(encoder->input_dim()) + ", expected " +
                                  std::to_string(kInstructionBits));
        }
    }
    std::optional<Eigen::MatrixXd> projection;
    if (o.project_seed) projection = projection_matrix(*o.project_seed);

    auto nodes = g.nodes();
    int empty_blocks = 0;
    for (std::size_t v = 0; v < nodes.size(); ++v) {
        BlockFeature x = Eigen::VectorXd::Zero(kInstructionBits);
        if (blocks[v].empty()) {
            ++empty_blocks;
        } else {
            x = block_feature(blocks[v]);
        }
        if (encoder) {
            nodes[v].feat = compress(*encoder, x);
        } else if (projection) {
            nodes[v].feat = Eigen::VectorXd(*projection * x);
        } else {
            nodes[v].feat = x;
        }
    }
    if (empty_blocks > 0) log(LogLevel::warn, std::to_string(empty_blocks) + " blocks have no instructions");
    Meta meta = provenance(sub);
    meta["featurize.mode"] = encoder ? "encoder" : projection ? "projection" : "bits";
    meta["featurize.instructions"] = std::to_string(records.size());
    save_graph(o.out, with_provenance(g.with_nodes(std::move(nodes)), meta));
}

void add_featurize(CLI::App& app) {
    auto o = std::make_shared<FeaturizeOptions>();
    auto* sub = app.add_subcommand("featurize", "Encode instructions into per-block feature vectors");
    sub->add_option("--ins", o->instructions, "Instruction listing (JSON lines, each with a 'block')")->required();
    sub->add_option("--mnemonics", o->mnemonics, "Mnemonic table: JSON object name -> class index");
    sub->add_option("-i,--graph", o->graph, "Graph whose nodes are the blocks")->required();
    auto* enc = sub->add_option("--encoder", o->encoder, "Compress with a trained autoencoder");
    auto* proj = sub->add_option("--project-seed", o->project_seed, "Compress with a seeded random projection");
    enc->excludes(proj);
    sub->add_option("-o,--out", o->out, "Output graph with node features")->required();
    set_action(sub, [sub, o] { run_featurize(sub, *o); });
}

// ---------------------------------------------------------------- autoencode

struct AutoencodeOptions {
    std::vector<std::string> inputs;
    std::string out;
    std::optional<std::uint64_t> seed;
    AutoencoderOptions train;
};

void run_autoencode(const CLI::App* sub, AutoencodeOptions o) {
    o.train.seed = *o.seed;
    std::vector<BlockFeature> data;
    for (const auto& path : expand_inputs(o.inputs)) {
        const Graph g = load_graph(path);
        if (!g.has_features()) throw ValidationError(path.string() + ": graph has no node features");
        for (const auto& node : g.nodes()) data.push_back(*node.feat);
    }
    if (data.empty()) throw ArgumentError("no feature vectors found in the inputs");
    log(LogLevel::info, "training on " + std::to_string(data.size()) + " feature vectors");
    const EncoderModel model = train_autoencoder(data, o.train);
    write_json_file(o.out, with_meta_field(to_json(model), provenance(sub)));
}

void add_autoencode(CLI::App& app) {
    auto o = std::make_shared<AutoencodeOptions>();
    auto* sub = app.add_subcommand("autoencode", "Train the feature autoencoder");
    sub->add_option("-i,--input", o->inputs, "Featurized graph files or directories")->required();
    sub->add_option("-o,--out", o->out, "Output encoder parameters")->required();
    sub->add_option("--seed", o->seed, "Initialization and shuffling seed")->required();
    sub->add_option("--epochs", o->train.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", o->train.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--batch", o->train.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    sub->add_option("--hidden", o->train.hidden_dim, "Embedding dimension")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_autoencode(sub, *o); });
}

// ---------------------------------------------------------------- explain

struct ExplainOptions {
    std::string input, out, model, method = "occlusion";
    int jobs = 1;
};

void run_explain(const CLI::App* sub, const ExplainOptions& o) {
    const Meta prov = provenance(sub);
    const Corpus corpus = Corpus::from(o.input);
    corpus.output(o.out, 0);
    ModelPool pool(o.model, o.jobs);
    parallel_for(corpus.size(), o.jobs, [&](std::size_t i, std::size_t worker) {
        const Graph g = load_graph(corpus.input(o.input, i));
        Classifier& model = pool.get(worker);
        Meta meta = prov;
        meta["model"] = model.name();
        if (const auto it = g.meta().find("sample_id"); it != g.meta().end()) meta["sample_id"] = it->second;
        write_json_file(corpus.output(o.out, i), to_json(explain_with(model, g, o.method), meta));
    });
}

void add_explain(CLI::App& app) {
    auto o = std::make_shared<ExplainOptions>();
    auto* sub = app.add_subcommand("explain", "Score edges with a model's explainer");
    sub->add_option("-i,--graph", o->input, "Graph file or directory")->required();
    sub->add_option("-o,--out", o->out, "Output scores file or directory")->required();
    sub->add_option("--model", o->model, "builtin:mp-{mean|sum|max}:{seed} or adapter:<command>")->required();
    sub->add_option("--method", o->method, "Explainer method (occlusion for the built-in surrogate)");
    sub->add_option("--jobs", o->jobs, "Worker threads for directory input")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_explain(sub, *o); });
}

// ---------------------------------------------------------------- fuse

struct FuseOptions {
    std::string a, b, graph, out, method = "mean-rank";
    double rrf_k = 60.0;
    int jobs = 1;
};

void run_fuse(const CLI::App* sub, const FuseOptions& o) {
    const Meta prov = provenance(sub);
    const FusionMethod method = o.method == "rrf" ? FusionMethod::rrf(o.rrf_k) : FusionMethod::mean_rank();
    const Corpus corpus = Corpus::from(o.a);
    corpus.output(o.out, 0);
    parallel_for(corpus.size(), o.jobs, [&](std::size_t i, std::size_t) {
        const EdgeRanking a = load_ranking(corpus.input(o.a, i));
        const EdgeRanking b = load_ranking(corpus.input(o.b, i));
        EdgeRanking fused;
        if (o.graph.empty()) {
            fused = rank_fusion(a, b, method);
        } else {
            fused = rank_fusion(load_graph(corpus.input(o.graph, i)), a, b, method);
        }
        write_json_file(corpus.output(o.out, i), to_json(fused, prov));
    });
}

void add_fuse(CLI::App& app) {
    auto o = std::make_shared<FuseOptions>();
    auto* sub = app.add_subcommand("fuse", "Fuse two edge rankings");
    sub->add_option("--a", o->a, "First ranking (file or directory)")->required();
    sub->add_option("--b", o->b, "Second ranking (file or directory)")->required();
    sub->add_option("--graph", o->graph, "Reference graph: its edges form the universe");
    sub->add_option("--method", o->method, "Fusion rule")->check(CLI::IsMember({"mean-rank", "rrf"}));
    sub->add_option("--rrf-k", o->rrf_k, "rrf: rank offset k")->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", o->out, "Output ranking file or directory")->required();
    sub->add_option("--jobs", o->jobs, "Worker threads for directory input")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_fuse(sub, *o); });
}

// ---------------------------------------------------------------- compose

struct ComposeOptions {
    std::string graph, scores, out, dot, mode = "gec";
    int budget = 8;
    int jobs = 1;
};

std::string to_dot(const Graph& g, const ExplanationSubgraph& s) {
    std::set<Edge> chosen(s.edges.begin(), s.edges.end());
    std::ostringstream os;
    os << "digraph explanation {\n  node [shape=box];\n";
    std::set<NodeId> in_expl(s.nodes.begin(), s.nodes.end());
    for (const auto& node : g.nodes()) {
        os << "  n" << node.id << " [label=\"" << node.id;
        if (node.label) {
            std::string label;
            for (char c : *node.label) {
                if (c == '"' || c == '\\') label.push_back('\\');
                label.push_back(c);
            }
            os << ": " << label;
        }
        os << "\"";
        if (in_expl.count(node.id)) os << ", color=red, penwidth=2";
        os << "];\n";
    }
    for (const auto& e : g.edges()) {
        os << "  n" << e.src << " -> n" << e.dst;
        if (chosen.count(e)) {
            os << " [color=red, penwidth=2]";
        } else {
            os << " [color=gray]";
        }
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

void run_compose(const CLI::App* sub, const ComposeOptions& o) {
    const Meta prov = provenance(sub);
    const Corpus corpus = Corpus::from(o.graph);
    corpus.output(o.out, 0);
    if (!o.dot.empty()) corpus.output(o.dot, 0);
    parallel_for(corpus.size(), o.jobs, [&](std::size_t i, std::size_t) {
        const Graph g = load_graph(corpus.input(o.graph, i));
        const EdgeRanking r = load_ranking(corpus.input(o.scores, i));
        r.validate_against(g);
        ExplanationSubgraph s;
        if (r.empty()) {
            s.budget = o.budget;
            log(LogLevel::warn, corpus.names[i] + ": empty ranking, writing an empty explanation");
        } else {
            s = o.mode == "gec" ? gec_compose(g, r, o.budget) : topk_subgraph(r, o.budget);
        }
        write_json_file(corpus.output(o.out, i), to_json(s, prov));
        if (!o.dot.empty()) {
            fs::path dot = corpus.output(o.dot, i);
            if (corpus.directory) dot.replace_extension(".dot");
            write_text_file(dot, to_dot(g, s));
        }
    });
}

void add_compose(CLI::App& app) {
    auto o = std::make_shared<ComposeOptions>();
    auto* sub = app.add_subcommand("compose", "Build an explanation subgraph from a ranking");
    sub->add_option("-i,--graph", o->graph, "Graph file or directory")->required();
    sub->add_option("--scores", o->scores, "Edge ranking file or directory")->required();
    sub->add_option("--budget", o->budget, "Maximum explanation edges")->check(CLI::PositiveNumber);
    sub->add_option("--mode", o->mode, "gec (connected greedy) or topk")->check(CLI::IsMember({"gec", "topk"}));
    sub->add_option("-o,--out", o->out, "Output explanation file or directory")->required();
    sub->add_option("--dot", o->dot, "Also write Graphviz DOT with the explanation highlighted");
    sub->add_option("--jobs", o->jobs, "Worker threads for directory input")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_compose(sub, *o); });
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
    std::vector<std::string> metrics{"fidelity", "sparsity"};
    std::string graph, expl, model, out;
    std::vector<std::string> scores;
    int k = 8;
    bool keep_all_nodes = false;
    int jobs = 1;
};

void run_eval(const CLI::App* sub, const EvalOptions& o) {
    auto wants = [&](const char* m) { return std::find(o.metrics.begin(), o.metrics.end(), m) != o.metrics.end(); };
    const bool want_fid = wants("fidelity"), want_spa = wants("sparsity"), want_con = wants("consistency");
    if ((want_fid || want_spa) && (o.graph.empty() || o.expl.empty())) {
        throw ArgumentError("fidelity and sparsity need --graph and --expl");
    }
    if (want_fid && o.model.empty()) throw ArgumentError("fidelity needs --model");
    if (want_con && o.scores.size() < 2) throw ArgumentError("consistency needs at least two --scores");

    const std::string primary = !o.graph.empty() ? o.graph : o.scores.front();
    const Corpus corpus = Corpus::from(primary);
    std::vector<Json> per_graph(corpus.size());
    ModelPool pool(o.model, o.jobs);
    parallel_for(corpus.size(), o.jobs, [&](std::size_t i, std::size_t worker) {
        Json m = Json::object();
        if (want_fid || want_spa) {
            const Graph g = load_graph(corpus.input(o.graph, i));
            const ExplanationSubgraph s = explanation_from_json(read_json_file(corpus.input(o.expl, i)));
            if (want_spa) {
                if (g.num_edges() == 0) {
                    log(LogLevel::warn, corpus.names[i] + ": sparsity is undefined on an edgeless graph");
                    m["sparsity"] = nullptr;
                } else {
                    m["sparsity"] = sparsity(s, g);
                }
            }
            if (want_fid) {
                const FidelityResult f = fidelity(pool.get(worker), g, s, {o.keep_all_nodes});
                m["fidelity"] = Json{{"predicted_class", f.predicted_class == 1 ? "malicious" : "benign"},
                                     {"probability", f.probability},
                                     {"fidelity_plus", f.fidelity_plus},
                                     {"fidelity_minus", f.fidelity_minus ? Json(*f.fidelity_minus) : Json(nullptr)}};
            }
        }
        if (want_con) {
            std::vector<EdgeRanking> rankings;
            for (const auto& s : o.scores) rankings.push_back(load_ranking(corpus.input(s, i)));
            m["consistency"] = consistency(rankings, o.k);
        }
        per_graph[i] = std::move(m);
    });

    Json report{{"schema", kReportSchema}};
    if (!corpus.directory) {
        report["metrics"] = per_graph.front();
    } else {
        Json graphs = Json::array();
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            graphs.push_back(Json{{"name", corpus.names[i]}, {"metrics", per_graph[i]}});
        }
        // Mean over graphs where the metric is defined; null when none is.
        auto mean = [&](const Json::json_pointer& ptr) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const Json& m : per_graph) {
                if (m.contains(ptr) && m[ptr].is_number()) {
                    sum += m[ptr].get<double>();
                    ++n;
                }
            }
            return n ? Json(sum / static_cast<double>(n)) : Json(nullptr);
        };
        Json summary{{"graphs", corpus.size()}};
        if (want_spa) summary["sparsity"] = mean(Json::json_pointer("/sparsity"));
        if (want_fid) {
            summary["fidelity_plus"] = mean(Json::json_pointer("/fidelity/fidelity_plus"));
            summary["fidelity_minus"] = mean(Json::json_pointer("/fidelity/fidelity_minus"));
        }
        if (want_con) summary["consistency"] = mean(Json::json_pointer("/consistency"));
        report["summary"] = summary;
        report["graphs"] = graphs;
    }
    report["meta"] = meta_json(provenance(sub));
    emit_json(o.out, report);
}

void add_eval(CLI::App& app) {
    auto o = std::make_shared<EvalOptions>();
    auto* sub = app.add_subcommand("eval", "Report explanation metrics");
    sub->add_option("--metrics", o->metrics, "Comma-separated: fidelity, sparsity, consistency")
        ->delimiter(',')
        ->check(CLI::IsMember({"fidelity", "sparsity", "consistency"}));
    sub->add_option("--graph", o->graph, "Graph file or directory");
    sub->add_option("--expl", o->expl, "Explanation file or directory");
    sub->add_option("--model", o->model, "Model URI for fidelity");
    sub->add_option("--scores", o->scores, "Rankings compared by consistency (repeatable)");
    sub->add_option("--k", o->k, "consistency: top-k edges compared")->check(CLI::PositiveNumber);
    sub->add_flag("--keep-all-nodes", o->keep_all_nodes, "fidelity: explanation-only graph keeps every node");
    sub->add_option("-o,--out", o->out, "Report file (stdout when omitted)");
    sub->add_option("--jobs", o->jobs, "Worker threads for directory input")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_eval(sub, *o); });
}

// ---------------------------------------------------------------- querybox

struct BoxInitOptions {
    std::string dir;
    QueryBoxConfig config;
    std::string compat = "auto";
    std::size_t max_matches = 1000;
    long long time_budget_ms = 0;
    bool force = false;
};

struct BoxAddOptions {
    std::string dir, graph, expl, verdict, model, explainer = "unspecified";
};

struct BoxRemoveOptions {
    std::string dir;
    std::size_t index = 0;
};

void add_querybox(CLI::App& app) {
    auto* box = app.add_subcommand("querybox", "Manage a query box of verified prototypes");
    box->require_subcommand(1);

    auto init = std::make_shared<BoxInitOptions>();
    auto* s_init = box->add_subcommand("init", "Create an empty query box");
    s_init->add_option("--dir", init->dir, "Query box directory")->required();
    s_init->add_option("--theta", init->config.theta_verify, "Verification probability threshold, in (0.5, 1]");
    s_init->add_option("--n-min", init->config.n_min, "Minimum prototype nodes");
    s_init->add_option("--n-max", init->config.n_max, "Maximum prototype nodes");
    s_init->add_option("--compat", init->compat, "auto, any, label-equal or feature-cosine[(eps)]");
    s_init->add_option("--max-matches", init->max_matches, "Embeddings enumerated per prototype");
    s_init->add_option("--time-budget-ms", init->time_budget_ms, "Matching time budget per prototype (0 = none)")
        ->check(CLI::NonNegativeNumber);
    s_init->add_flag("--force", init->force, "Replace an existing box");
    set_action(s_init, [init] {
        if (fs::exists(fs::path(init->dir) / "box.json") && !init->force) {
            throw IoError("query box '" + init->dir + "' already exists (use --force to replace it)");
        }
        QueryBoxConfig c = init->config;
        c.compat = parse_compat(init->compat);
        c.limits.max_matches = init->max_matches;
        c.limits.time_budget = std::chrono::milliseconds(init->time_budget_ms);
        save_query_box(init->dir, QueryBox(c));
    });

    auto add = std::make_shared<BoxAddOptions>();
    auto* s_add = box->add_subcommand("add", "Verify an explanation subgraph and store it as a prototype");
    s_add->add_option("--dir", add->dir, "Query box directory")->required();
    s_add->add_option("--graph", add->graph, "Source graph")->required();
    s_add->add_option("--expl", add->expl, "Explanation subgraph of the source graph")->required();
    s_add->add_option("--verdict", add->verdict, "Prototype verdict")
        ->required()
        ->check(CLI::IsMember({"benign", "malicious"}));
    s_add->add_option("--model", add->model, "Model URI used for verification")->required();
    s_add->add_option("--explainer", add->explainer, "Explainer name recorded as provenance");
    set_action(s_add, [add] {
        QueryBox qb = load_query_box(add->dir);
        const Graph g = load_graph(add->graph);
        const ExplanationSubgraph s = explanation_from_json(read_json_file(add->expl));
        auto model = open_model(add->model);
        const Verdict verdict = parse_verdict(add->verdict);
        const auto proto = curate_prototype(*model, g, s, verdict, qb.config(), add->explainer);
        if (!proto) {
            throw ValidationError("candidate rejected: " + model->name() + " does not confirm the " + add->verdict +
                                  " verdict with probability >= " + std::to_string(qb.config().theta_verify));
        }
        qb.add(*proto);
        save_query_box(add->dir, qb);
        std::cout << "added prototype " << qb.prototypes().size() - 1 << " (p=" << proto->provenance.verification_probability
                  << ")\n";
    });

    auto list_dir = std::make_shared<std::string>();
    auto* s_list = box->add_subcommand("list", "Print the box configuration and prototypes");
    s_list->add_option("--dir", *list_dir, "Query box directory")->required();
    set_action(s_list, [list_dir] {
        const QueryBox qb = load_query_box(*list_dir);
        Json protos = Json::array();
        for (std::size_t i = 0; i < qb.prototypes().size(); ++i) {
            const auto& p = qb.prototypes()[i];
            protos.push_back(Json{{"index", i},
                                  {"verdict", to_string(p.verdict)},
                                  {"nodes", p.subgraph.num_nodes()},
                                  {"edges", p.subgraph.num_edges()},
                                  {"source_id", p.provenance.source_id},
                                  {"explainer", p.provenance.explainer},
                                  {"verification_probability", p.provenance.verification_probability}});
        }
        emit_json("", Json{{"config", to_json(qb.config())}, {"prototypes", protos}});
    });

    auto rm = std::make_shared<BoxRemoveOptions>();
    auto* s_rm = box->add_subcommand("remove", "Remove a prototype by index");
    s_rm->add_option("--dir", rm->dir, "Query box directory")->required();
    s_rm->add_option("--index", rm->index, "Prototype index")->required();
    set_action(s_rm, [rm] {
        QueryBox qb = load_query_box(rm->dir);
        qb.remove(rm->index);
        save_query_box(rm->dir, qb);
    });
}

// ---------------------------------------------------------------- match

struct MatchOptions {
    std::string box, graph, out, pattern, target, compat = "auto", model, scores, expl_out;
    std::size_t max_matches = 1000;
    int budget = 8;
    int jobs = 1;
};

void run_match(const CLI::App* sub, const MatchOptions& o) {
    const Meta prov = provenance(sub);
    if (!o.pattern.empty()) {
        if (o.target.empty()) throw ArgumentError("--pattern needs --target");
        const MatchResult r = subgraph_match(load_graph(o.pattern), load_graph(o.target), parse_compat(o.compat),
                                             MatchLimits{o.max_matches, {}});
        Json embeddings = Json::array();
        for (const auto& e : r.embeddings) embeddings.push_back(e.map);
        emit_json(o.out, with_meta_field(Json{{"schema", kEmbeddingsSchema},
                                              {"count", r.embeddings.size()},
                                              {"truncated", r.truncated},
                                              {"embeddings", embeddings}},
                                         prov));
        return;
    }
    if (o.box.empty() || o.graph.empty()) throw ArgumentError("match needs --box and --graph (or --pattern/--target)");
    if (o.out.empty()) throw ArgumentError("match needs -o");
    const QueryBox box = load_query_box(o.box);
    const bool dual = !o.model.empty();
    if (dual && o.scores.empty()) throw ArgumentError("dual explanation (--model) needs --scores");
    const Corpus corpus = Corpus::from(o.graph);
    corpus.output(o.out, 0);
    if (dual && !o.expl_out.empty()) corpus.output(o.expl_out, 0);
    ModelPool pool(o.model, o.jobs);
    parallel_for(corpus.size(), o.jobs, [&](std::size_t i, std::size_t worker) {
        const Graph g = load_graph(corpus.input(o.graph, i));
        Meta meta = prov;
        std::optional<NodeScoreMap> scores;
        if (dual) {
            const EdgeRanking ranking = load_ranking(corpus.input(o.scores, i));
            ranking.validate_against(g);
            const DualExplanation d = dual_explain(pool.get(worker), g, ranking, o.budget, box);
            meta["dual.p_malicious"] = Json(d.probs[1]).dump();
            if (!o.expl_out.empty()) write_json_file(corpus.output(o.expl_out, i), to_json(d.subgraph, meta));
            scores = d.node_scores;
            if (!scores) meta["dual.stage2"] = "skipped: predicted benign";
        } else {
            scores = score_nodes(g, box);
        }
        NodeMask mask;
        if (scores) {
            mask = to_mask(*scores);
            meta["match.truncated"] = scores->truncated ? "true" : "false";
            if (scores->truncated) log(LogLevel::warn, corpus.names[i] + ": matching hit its limits; scores are partial");
        }
        write_json_file(corpus.output(o.out, i), to_json(mask, meta));
    });
}

void add_match(CLI::App& app) {
    auto o = std::make_shared<MatchOptions>();
    auto* sub = app.add_subcommand("match", "Score nodes by query-box prototype matches");
    sub->add_option("--box", o->box, "Query box directory");
    sub->add_option("--graph", o->graph, "Target graph file or directory");
    sub->add_option("-o,--out", o->out, "Output signed node mask (file or directory)");
    sub->add_option("--model", o->model, "Dual explanation: model URI gating the match stage");
    sub->add_option("--scores", o->scores, "Dual explanation: edge ranking of the graph");
    sub->add_option("--budget", o->budget, "Dual explanation: GEC edge budget")->check(CLI::PositiveNumber);
    sub->add_option("--expl-out", o->expl_out, "Dual explanation: write the GEC subgraph here");
    sub->add_option("--pattern", o->pattern, "Enumerate embeddings of this pattern graph instead");
    sub->add_option("--target", o->target, "Target graph for --pattern");
    sub->add_option("--compat", o->compat, "--pattern node compatibility");
    sub->add_option("--max-matches", o->max_matches, "--pattern embedding cap")->check(CLI::PositiveNumber);
    sub->add_option("--jobs", o->jobs, "Worker threads for directory input")->check(CLI::PositiveNumber);
    set_action(sub, [sub, o] { run_match(sub, *o); });
}

// ---------------------------------------------------------------- ensemble

std::vector<std::string> resolve_models(const std::vector<std::string>& given, const Json* params_doc) {
    if (!given.empty()) return given;
    if (params_doc) {
        const auto meta = params_doc->find("meta");
        if (meta != params_doc->end() && meta->contains("ensemble.models")) {
            return Json::parse((*meta)["ensemble.models"].get<std::string>()).get<std::vector<std::string>>();
        }
    }
    throw ArgumentError("no --models given and the parameters do not record any");
}

struct Learners {
    std::vector<std::unique_ptr<Classifier>> owned;
    std::vector<Classifier*> handles;

    explicit Learners(const std::vector<std::string>& uris) {
        for (const auto& uri : uris) {
            owned.push_back(open_model(uri));
            handles.push_back(owned.back().get());
        }
    }
};

struct EnsembleTrainOptions {
    std::vector<std::string> inputs, models;
    std::string out;
    std::optional<std::uint64_t> seed;
    MetaTrainOptions train;
    int jobs = 1;
};

void run_ensemble_train(const CLI::App* sub, EnsembleTrainOptions o) {
    if (o.models.size() < 2) throw ArgumentError("the ensemble needs at least two --models");
    o.train.seed = *o.seed;
    std::vector<fs::path> files;
    std::vector<Graph> graphs;
    for (const auto& path : expand_inputs(o.inputs)) {
        Graph g = load_graph(path);
        if (g.label() == GraphLabel::unknown) {
            log(LogLevel::info, path.string() + ": unlabeled, skipped");
            continue;
        }
        graphs.push_back(std::move(g));
    }
    std::vector<MetaSample> data(graphs.size());
    std::vector<std::unique_ptr<Learners>> per_worker(static_cast<std::size_t>(std::max(1, o.jobs)));
    parallel_for(graphs.size(), o.jobs, [&](std::size_t i, std::size_t worker) {
        auto& learners = per_worker[worker];
        if (!learners) learners = std::make_unique<Learners>(o.models);
        BaseOutputs outs;
        outs.z.resize(2, static_cast<Eigen::Index>(o.models.size()));
        for (std::size_t j = 0; j < o.models.size(); ++j) {
            outs.z.col(static_cast<Eigen::Index>(j)) = learners->handles[j]->predict(graphs[i]);
            outs.names.push_back(learners->handles[j]->name());
        }
        data[i] = {std::move(outs), graphs[i].label() == GraphLabel::malicious ? 1 : 0};
    });
    const MetaParams params = meta_train(data, o.train);
    int correct = 0;
    for (const auto& s : data) correct += predicted_class(meta_forward(params, s.outputs).p) == s.label;
    Meta meta = provenance(sub);
    meta["ensemble.models"] = Json(o.models).dump();
    meta["ensemble.samples"] = std::to_string(data.size());
    meta["ensemble.train_accuracy"] = Json(static_cast<double>(correct) / static_cast<double>(data.size())).dump();
    log(LogLevel::info, "training accuracy " + meta["ensemble.train_accuracy"]);
    write_json_file(o.out, with_meta_field(to_json(params), meta));
}

struct EnsembleUseOptions {
    std::string params, graph, out, method = "occlusion";
    std::vector<std::string> models;
};

void run_ensemble_predict(const CLI::App* sub, const EnsembleUseOptions& o) {
    const Json doc = read_json_file(o.params);
    const MetaParams params = meta_params_from_json(doc);
    Learners learners(resolve_models(o.models, &doc));
    const Graph g = load_graph(o.graph);
    const EnsemblePrediction p = ensemble_predict(learners.handles, params, g);
    Json base = Json::array();
    for (Eigen::Index i = 0; i < p.outputs.size(); ++i) {
        base.push_back(Json{{"name", p.outputs.names[static_cast<std::size_t>(i)]},
                            {"probs", {p.outputs.z(0, i), p.outputs.z(1, i)}},
                            {"attention", p.meta.attention[i]}});
    }
    emit_json(o.out, with_meta_field(Json{{"schema", kEnsembleSchema},
                                          {"predicted", predicted_class(p.meta.p) == 1 ? "malicious" : "benign"},
                                          {"probs", {p.meta.p[0], p.meta.p[1]}},
                                          {"learners", base}},
                                     provenance(sub)));
}

void run_ensemble_explain(const CLI::App* sub, const EnsembleUseOptions& o) {
    const Json doc = read_json_file(o.params);
    const MetaParams params = meta_params_from_json(doc);
    Learners learners(resolve_models(o.models, &doc));
    const Graph g = load_graph(o.graph);
    const EnsemblePrediction p = ensemble_predict(learners.handles, params, g);
    std::vector<EdgeRanking> rankings;
    for (Classifier* m : learners.handles) rankings.push_back(explain_with(*m, g, o.method));
    Meta meta = provenance(sub);
    meta["ensemble.attention"] = Json(std::vector<double>(p.meta.attention.data(),
                                                          p.meta.attention.data() + p.meta.attention.size()))
                                     .dump();
    if (o.out.empty()) throw ArgumentError("ensemble explain needs -o");
    write_json_file(o.out, to_json(ensemble_explain(rankings, p.meta.attention), meta));
}

void add_ensemble(CLI::App& app) {
    auto* ens = app.add_subcommand("ensemble", "Attention-weighted stacking over base models");
    ens->require_subcommand(1);

    auto t = std::make_shared<EnsembleTrainOptions>();
    auto* train = ens->add_subcommand("train", "Train the attention meta-learner on labeled graphs");
    train->add_option("-i,--input", t->inputs, "Labeled graph files or directories")->required();
    train->add_option("--models", t->models, "Base model URIs (at least two)")->required();
    train->add_option("--seed", t->seed, "Initialization and shuffling seed")->required();
    train->add_option("--epochs", t->train.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    train->add_option("--lr", t->train.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
    train->add_option("--hidden", t->train.hidden, "Attention hidden width")->check(CLI::PositiveNumber);
    train->add_option("-o,--out", t->out, "Output meta-learner parameters")->required();
    train->add_option("--jobs", t->jobs, "Worker threads for base-model queries")->check(CLI::PositiveNumber);
    set_action(train, [train, t] { run_ensemble_train(train, *t); });

    for (const char* name : {"predict", "explain"}) {
        auto u = std::make_shared<EnsembleUseOptions>();
        const bool is_predict = std::string(name) == "predict";
        auto* s = ens->add_subcommand(name, is_predict ? "Predict with the ensemble and report attention"
                                                       : "Fuse per-learner edge scores by attention");
        s->add_option("--params", u->params, "Meta-learner parameters")->required();
        s->add_option("--models", u->models, "Base model URIs (default: those recorded at training)");
        s->add_option("--graph", u->graph, "Graph to score")->required();
        if (!is_predict) s->add_option("--method", u->method, "Explainer method for every learner");
        s->add_option("-o,--out", u->out, is_predict ? "Output file (stdout when omitted)" : "Output ranking");
        if (is_predict) {
            set_action(s, [s, u] { run_ensemble_predict(s, *u); });
        } else {
            set_action(s, [s, u] { run_ensemble_explain(s, *u); });
        }
    }
}

// ---------------------------------------------------------------- adapter-probe

struct ProbeOptions {
    std::string command;
    std::vector<std::string> methods;
    long long handshake_ms = 10'000;
    long long request_ms = 60'000;
};

int run_probe(const ProbeOptions& o) {
    const AdapterTimeouts timeouts{std::chrono::milliseconds(o.handshake_ms), std::chrono::milliseconds(o.request_ms)};
    const auto checks = run_conformance(split_command(o.command), o.methods, timeouts);
    int failed = 0;
    for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        failed += c.passed ? 0 : 1;
    }
    std::cout << checks.size() - static_cast<std::size_t>(failed) << "/" << checks.size() << " checks passed\n";
    return failed == 0 ? kExitOk : kExitIo;
}

int g_probe_status = kExitOk;

void add_probe(CLI::App& app) {
    auto o = std::make_shared<ProbeOptions>();
    auto* sub = app.add_subcommand("adapter-probe", "Run the protocol conformance suite against an adapter command");
    sub->add_option("--cmd", o->command, "Adapter command line")->required();
    sub->add_option("--method", o->methods, "Explain methods to exercise (default: occlusion)");
    sub->add_option("--handshake-timeout-ms", o->handshake_ms, "Hello timeout")->check(CLI::PositiveNumber);
    sub->add_option("--request-timeout-ms", o->request_ms, "Per-request timeout")->check(CLI::PositiveNumber);
    set_action(sub, [o] { g_probe_status = run_probe(*o); });
}

}  // namespace
}  // namespace cfgkit::cli

int main(int argc, char** argv) {
    using namespace cfgkit::cli;
    CLI::App app{"cfgkit: control-flow-graph reduction, explanation and matching toolkit", "cfgkit"};
    app.set_version_flag("--version", std::string("cfgkit ") + cfgkit::kToolVersion);
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough(false);
    app.failure_message(CLI::FailureMessage::help);

    add_gen(app);
    add_reduce(app);
    add_featurize(app);
    add_autoencode(app);
    add_explain(app);
    add_fuse(app);
    add_compose(app);
    add_eval(app);
    add_querybox(app);
    add_match(app);
    add_ensemble(app);
    add_probe(app);
    enable_json_config(&app);
    for (CLI::App* sub : app.get_subcommands({})) {
        sub->footer("Any option can also come from a JSON file: cfgkit --config FILE " + sub->get_name() + " ...");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::FileError& e) {
        std::cerr << "cfgkit: " << e.what() << "\n";
        return kExitIo;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (g_action) g_action();
    } catch (const std::exception& e) {
        std::cerr << "cfgkit: error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return g_probe_status;
}
