#include "cli_common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cfgkit/adapter.hpp"
#include "cfgkit/errors.hpp"
#include "cfgkit/surrogate.hpp"

namespace cfgkit::cli {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const AdapterError*>(&e)) return kExitIo;
    return kExitValidation;
}

namespace {

LogLevel configured_level() {
    const char* env = std::getenv("CFGKIT_LOG");
    if (!env) return LogLevel::warn;
    const std::string v = env;
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

const char* level_name(LogLevel level) {
    switch (level) {
        case LogLevel::error: return "error";
        case LogLevel::warn: return "warn";
        case LogLevel::info: return "info";
        case LogLevel::debug: return "debug";
    }
    return "?";
}

std::string scalar_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// Numeric options echo as JSON numbers.
Json typed_value(const CLI::Option* opt, const std::string& text) {
    const std::string type = opt->get_type_name();
    if (type.rfind("INT", 0) == 0 || type.rfind("UINT", 0) == 0 || type.rfind("FLOAT", 0) == 0) {
        const Json parsed = Json::parse(text, nullptr, false);
        if (parsed.is_number()) return parsed;
    }
    return text;
}

}  // namespace

void log(LogLevel level, const std::string& message) {
    static const LogLevel threshold = configured_level();
    static std::mutex mutex;
    if (level > threshold) return;
    std::lock_guard lock(mutex);
    std::cerr << "cfgkit: " << level_name(level) << ": " << message << "\n";
}

std::string JsonConfig::to_config(const CLI::App* app, bool, bool, std::string) const {
    return parameter_echo(app).dump(2) + "\n";
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
    Json doc;
    try {
        doc = Json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
        throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConfigError("config must be a JSON object");

    // Values go to the subcommand chosen on the command line.
    std::vector<std::string> path;
    const CLI::App* leaf = root_;
    while (!leaf->get_subcommands().empty()) {
        leaf = leaf->get_subcommands().front();
        path.push_back(leaf->get_name());
    }

    auto known = [leaf](const std::string& key) { return leaf->get_option_no_throw("--" + key) != nullptr; };
    std::map<std::string, Json> values;
    auto take_flat = [&](const Json& obj, bool strict, const std::string& where) {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_object()) continue;
            if (!known(key)) {
                if (strict) throw CLI::ConfigError("unknown option '" + key + "' in config section '" + where + "'");
                continue;
            }
            values[key] = value;
        }
    };
    take_flat(doc, false, "");
    const Json* section = &doc;
    std::string where;
    for (const auto& name : path) {
        const auto it = section->find(name);
        if (it == section->end() || !it->is_object()) break;
        section = &*it;
        where += (where.empty() ? "" : ".") + name;
        take_flat(*section, name == path.back(), where);
    }

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : values) {
        CLI::ConfigItem item;
        item.parents = path;
        item.name = key;
        if (value.is_null()) continue;
        if (value.is_array()) {
            for (const auto& v : value) item.inputs.push_back(scalar_text(v));
        } else {
            item.inputs.push_back(scalar_text(value));
        }
        items.push_back(std::move(item));
    }
    return items;
}

void enable_json_config(CLI::App* root) {
    root->set_config("--config", "", "JSON file with option values for the subcommand (flags win)");
    root->config_formatter(std::make_shared<JsonConfig>(root));
    std::function<void(CLI::App*)> fall = [&](CLI::App* app) {
        for (CLI::App* sub : app->get_subcommands({})) {
            sub->fallthrough();
            fall(sub);
        }
    };
    fall(root);
}

std::string command_path(const CLI::App* app) {
    std::string out;
    for (const CLI::App* a = app; a && a->get_parent(); a = a->get_parent()) {
        out = a->get_name() + (out.empty() ? "" : " " + out);
    }
    return out;
}

Json parameter_echo(const CLI::App* app) {
    Json echo = Json::object();
    for (const CLI::Option* opt : app->get_options()) {
        if (opt == app->get_help_ptr() || opt == app->get_help_all_ptr()) continue;
        const auto& lnames = opt->get_lnames();
        const std::string name = !lnames.empty() ? lnames.front() : opt->get_name(false, true);
        if (name == "jobs") continue;
        if (opt->get_expected_max() == 0) {
            echo[name] = opt->count() > 0 && opt->as<bool>();
        } else if (opt->count() > 0) {
            const auto& results = opt->results();
            if (opt->get_items_expected_max() > 1) {
                Json list = Json::array();
                for (const auto& r : results) list.push_back(typed_value(opt, r));
                echo[name] = list;
            } else {
                echo[name] = typed_value(opt, results.back());
            }
        } else if (opt->get_items_expected_max() > 1) {
            // Vector defaults render as "{}" (empty) or "[a,b]".
            std::string text = opt->get_default_str();
            Json list = Json::array();
            if (text.size() >= 2 && text.front() == '[' && text.back() == ']') {
                std::stringstream items(text.substr(1, text.size() - 2));
                for (std::string item; std::getline(items, item, ',');) list.push_back(typed_value(opt, item));
            }
            echo[name] = list;
        } else if (!opt->get_default_str().empty()) {
            echo[name] = typed_value(opt, opt->get_default_str());
        } else {
            echo[name] = nullptr;
        }
    }
    return echo;
}

Meta provenance(const CLI::App* app) {
    return {{"cfgkit.version", kToolVersion},
            {"cfgkit.command", command_path(app)},
            {"cfgkit.params", parameter_echo(app).dump()}};
}

Graph with_provenance(const Graph& g, const Meta& extra) {
    Meta meta = g.meta();
    for (const auto& [k, v] : extra) meta[k] = v;
    return g.with_meta(std::move(meta));
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        const fs::path p(in);
        std::error_code ec;
        if (fs::is_directory(p, ec)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(p, ec)) {
                if (entry.is_regular_file() && entry.path().extension() == ".json") found.push_back(entry.path());
            }
            if (ec) throw IoError("cannot list '" + p.string() + "': " + ec.message());
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::exists(p, ec)) {
            out.push_back(p);
        } else {
            throw IoError("input '" + p.string() + "' does not exist");
        }
    }
    return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t, std::size_t)>& task) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::size_t failed_index = n;
    std::exception_ptr failure;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    task(i, w);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (i < failed_index) {
                        failed_index = i;
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

Corpus Corpus::from(const std::string& primary) {
    Corpus c;
    std::error_code ec;
    if (fs::is_directory(primary, ec)) {
        c.directory = true;
        for (const auto& p : expand_inputs({primary})) c.names.push_back(p.filename().string());
        if (c.names.empty()) throw IoError("directory '" + primary + "' holds no .json files");
    } else {
        if (!fs::exists(primary, ec)) throw IoError("input '" + primary + "' does not exist");
        c.names.push_back(fs::path(primary).filename().string());
    }
    return c;
}

fs::path Corpus::input(const std::string& path, std::size_t i) const {
    if (!directory) return path;
    std::error_code ec;
    if (!fs::is_directory(path, ec)) throw IoError("'" + path + "' must be a directory in corpus mode");
    return fs::path(path) / names.at(i);
}

fs::path Corpus::output(const std::string& path, std::size_t i) const {
    if (!directory) return path;
    ensure_directory(path);
    return fs::path(path) / names.at(i);
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void emit_json(const std::string& path, const Json& doc) {
    if (path.empty() || path == "-") {
        std::cout << doc.dump(2) << "\n";
    } else {
        write_json_file(path, doc);
    }
}

EdgeRanking explain_with(Classifier& model, const Graph& g, const std::string& method) {
    if (auto* s = dynamic_cast<SurrogateModel*>(&model)) {
        if (method != "occlusion") {
            throw ArgumentError("the built-in surrogate only supports the 'occlusion' method, not '" + method + "'");
        }
        // Nothing to occlude; an empty ranking keeps corpus pipelines going.
        if (g.num_edges() == 0) return EdgeRanking("occlusion:" + s->name().substr(s->name().find(':') + 1), {});
        return s->explain(g);
    }
    if (auto* a = dynamic_cast<Adapter*>(&model)) {
        auto ex = a->explain(g, method);
        if (ex.empty_warning) log(LogLevel::warn, "adapter returned no edge scores for a graph with edges");
        return std::move(ex.ranking);
    }
    throw ArgumentError("model '" + model.name() + "' cannot explain");
}

}  // namespace cfgkit::cli
