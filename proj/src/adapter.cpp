#include "cfgkit/adapter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>

#include "cfgkit/errors.hpp"

namespace cfgkit {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

Graph conformance_graph() {
    std::vector<NodeRecord> nodes(5);
    const char* labels[] = {"push", "mov", "cmp", "jmp", "ret"};
    for (int i = 0; i < 5; ++i) nodes[static_cast<std::size_t>(i)] = {i, labels[i], std::nullopt};
    return Graph(std::move(nodes), {{0, 1}, {1, 2}, {2, 3}, {2, 4}, {3, 1}}, GraphLabel::unknown,
                 {{"sample_id", "conformance-fixture"}});
}

}  // namespace

bool AdapterInfo::supports(const std::string& op) const { return std::find(ops.begin(), ops.end(), op) != ops.end(); }

std::vector<std::string> split_command(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, has = false;
    for (char c : text) {
        if (c == '"') {
            quoted = !quoted;
            has = true;
        } else if (!quoted && std::isspace(static_cast<unsigned char>(c))) {
            if (has) out.push_back(cur);
            cur.clear();
            has = false;
        } else {
            cur.push_back(c);
            has = true;
        }
    }
    if (has) out.push_back(cur);
    return out;
}

Adapter::Adapter(std::vector<std::string> command, AdapterTimeouts timeouts)
    : command_(std::move(command)), timeouts_(timeouts) {
    if (command_.empty()) throw SpawnError("empty adapter command");
    ignore_sigpipe();

    int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0 ||
        ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
        throw SpawnError(std::string("pipe failed: ") + std::strerror(errno));
    }

    std::vector<char*> argv;
    for (auto& arg : command_) argv.push_back(arg.data());
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw SpawnError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::execvp(argv[0], argv.data());
        const int err = errno;
        [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof err);
        ::_exit(127);
    }

    pid_ = pid;
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    err_child_ = err_pipe[0];
    ::fcntl(err_child_, F_SETFL, O_NONBLOCK);

    int exec_errno = 0;
    const auto got = ::read(exec_pipe[0], &exec_errno, sizeof exec_errno);
    ::close(exec_pipe[0]);
    if (got == static_cast<ssize_t>(sizeof exec_errno)) {
        shutdown();
        throw SpawnError("cannot execute '" + command_.front() + "': " + std::strerror(exec_errno));
    }

    try {
        const long long id = next_id_++;
        write_line(Json{{"id", id}, {"op", "hello"}, {"schema", kAdapterSchema}}.dump());
        const Json hello = checked(read_response(timeouts_.handshake), id);
        if (!hello["ok"].get<bool>()) {
            throw ProtocolError("adapter refused hello: " + hello.value("error", std::string("(no error text)")));
        }
        const auto name = hello.find("name");
        const auto ops = hello.find("ops");
        if (name == hello.end() || !name->is_string() || ops == hello.end() || !ops->is_array()) {
            throw ProtocolError("malformed hello response: " + hello.dump());
        }
        info_.name = name->get<std::string>();
        if (const auto v = hello.find("version"); v != hello.end() && v->is_string()) info_.version = v->get<std::string>();
        for (const auto& op : *ops) {
            if (!op.is_string()) throw ProtocolError("malformed hello response: ops must be strings");
            info_.ops.push_back(op.get<std::string>());
        }
    } catch (...) {
        shutdown();
        throw;
    }
}

Adapter::~Adapter() { shutdown(); }

void Adapter::shutdown() {
    close_fd(to_child_);
    if (pid_ > 0) {
        int status = 0;
        const auto deadline = Clock::now() + std::chrono::milliseconds(1000);
        while (::waitpid(pid_, &status, WNOHANG) == 0) {
            if (Clock::now() > deadline) {
                ::kill(pid_, SIGKILL);
                ::waitpid(pid_, &status, 0);
                break;
            }
            ::usleep(2000);
        }
        pid_ = -1;
    }
    close_fd(from_child_);
    close_fd(err_child_);
}

void Adapter::write_line(const std::string& line) {
    const std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        const auto n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError("cannot write to adapter '" + command_.front() + "': " + std::strerror(errno) +
                                diagnostics());
        }
        off += static_cast<std::size_t>(n);
    }
}

void Adapter::drain_stderr() {
    if (err_child_ < 0) return;
    char buf[4096];
    for (;;) {
        const auto n = ::read(err_child_, buf, sizeof buf);
        if (n == 0) close_fd(err_child_);
        if (n <= 0) break;
        stderr_buffer_.append(buf, static_cast<std::size_t>(n));
        // Keep only the tail.
        if (stderr_buffer_.size() > 16384) stderr_buffer_.erase(0, stderr_buffer_.size() - 16384);
    }
}

std::string Adapter::diagnostics() const {
    if (stderr_buffer_.empty()) return "";
    return "\nadapter stderr:\n" + stderr_buffer_;
}

Json Adapter::read_response(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        const auto nl = stdout_buffer_.find('\n');
        if (nl != std::string::npos) {
            const std::string line = stdout_buffer_.substr(0, nl);
            stdout_buffer_.erase(0, nl + 1);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                return Json::parse(line);
            } catch (const nlohmann::json::parse_error&) {
                drain_stderr();
                throw ProtocolError("adapter sent a line that is not JSON: " + line.substr(0, 200) + diagnostics());
            }
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (left.count() <= 0) {
            drain_stderr();
            throw TimeoutError("adapter '" + command_.front() + "' did not answer within " +
                               std::to_string(timeout.count()) + " ms" + diagnostics());
        }
        pollfd fds[2] = {{from_child_, POLLIN, 0}, {err_child_, POLLIN, 0}};
        const int rc = ::poll(fds, 2, static_cast<int>(std::min<long long>(left.count(), 1'000'000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (fds[1].revents & POLLIN) drain_stderr();
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            char buf[65536];
            const auto n = ::read(from_child_, buf, sizeof buf);
            if (n > 0) {
                stdout_buffer_.append(buf, static_cast<std::size_t>(n));
            } else if (n == 0) {
                drain_stderr();
                throw ProtocolError("adapter '" + command_.front() + "' closed its output" + diagnostics());
            } else if (errno != EINTR && errno != EAGAIN) {
                throw ProtocolError(std::string("read from adapter failed: ") + std::strerror(errno));
            }
        }
    }
}

Json Adapter::checked(Json response, long long id) {
    if (!response.is_object()) throw ProtocolError("adapter response is not an object: " + response.dump());
    const auto rid = response.find("id");
    if (rid == response.end() || !rid->is_number_integer()) {
        throw ProtocolError("adapter response lacks an integer id (request id " + std::to_string(id) + ")");
    }
    if (rid->get<long long>() != id) {
        throw ProtocolError("adapter response id " + std::to_string(rid->get<long long>()) +
                            " does not match request id " + std::to_string(id));
    }
    const auto ok = response.find("ok");
    if (ok == response.end() || !ok->is_boolean()) throw ProtocolError("adapter response lacks boolean 'ok'");
    return response;
}

Json Adapter::raw_request(Json request) {
    const long long id = next_id_++;
    request["id"] = id;
    write_line(request.dump());
    return checked(read_response(timeouts_.request), id);
}

Json Adapter::raw_line(const std::string& line) {
    write_line(line);
    return read_response(timeouts_.request);
}

ClassProbs parse_probs(const Json& response) {
    if (!response.value("ok", false)) throw RemoteError(response.value("error", std::string("adapter reported failure")));
    const auto probs = response.find("probs");
    if (probs == response.end() || !probs->is_array() || probs->size() != 2 || !(*probs)[0].is_number() ||
        !(*probs)[1].is_number()) {
        throw ValidationError("adapter 'probs' must be an array of two numbers");
    }
    const ClassProbs p((*probs)[0].get<double>(), (*probs)[1].get<double>());
    if (!p.allFinite() || (p.array() < 0.0).any() || (p.array() > 1.0).any() || std::abs(p.sum() - 1.0) > 1e-6) {
        throw ValidationError("adapter probabilities (" + (*probs)[0].dump() + ", " + (*probs)[1].dump() +
                              ") do not form a distribution");
    }
    return p;
}

AdapterExplanation parse_edge_scores(const Json& response, const Graph& g, const std::string& explainer) {
    if (!response.value("ok", false)) throw RemoteError(response.value("error", std::string("adapter reported failure")));
    const auto scores = response.find("edge_scores");
    if (scores == response.end() || !scores->is_array()) throw ValidationError("adapter 'edge_scores' must be an array");
    std::vector<ScoredEdge> entries;
    for (std::size_t i = 0; i < scores->size(); ++i) {
        const Json& row = (*scores)[i];
        if (!row.is_array() || row.size() != 3 || !row[0].is_number_integer() || !row[1].is_number_integer() ||
            !row[2].is_number()) {
            throw ValidationError("edge_scores[" + std::to_string(i) + "] must be [src, dst, score]");
        }
        entries.push_back({{row[0].get<NodeId>(), row[1].get<NodeId>()}, row[2].get<double>()});
    }
    AdapterExplanation out{EdgeRanking(explainer, std::move(entries)), false};
    out.ranking.validate_against(g);
    out.empty_warning = out.ranking.empty() && g.num_edges() > 0;
    return out;
}

ClassProbs Adapter::predict(const Graph& g) {
    if (!info_.supports("predict")) throw AdapterError("adapter '" + info_.name + "' does not advertise predict");
    return parse_probs(raw_request(Json{{"op", "predict"}, {"graph", to_json(g)}}));
}

AdapterExplanation Adapter::explain(const Graph& g, const std::string& method) {
    if (!info_.supports("explain")) throw AdapterError("adapter '" + info_.name + "' does not advertise explain");
    return parse_edge_scores(raw_request(Json{{"op", "explain"}, {"graph", to_json(g)}, {"method", method}}), g,
                             info_.name + ":" + method);
}

std::string Adapter::name() const { return "adapter:" + info_.name; }

std::vector<ConformanceCheck> run_conformance(const std::vector<std::string>& command,
                                              const std::vector<std::string>& explain_methods,
                                              AdapterTimeouts timeouts) {
    std::vector<ConformanceCheck> checks;
    auto record = [&checks](std::string name, auto&& body) {
        ConformanceCheck c{std::move(name), false, ""};
        try {
            c.detail = body();
            c.passed = true;
        } catch (const std::exception& e) {
            c.detail = e.what();
        }
        checks.push_back(std::move(c));
    };

    std::unique_ptr<Adapter> adapter;
    record("hello handshake", [&] {
        adapter = std::make_unique<Adapter>(command, timeouts);
        if (adapter->info().name.empty()) throw ProtocolError("hello carries an empty name");
        if (!adapter->info().supports("predict")) throw ProtocolError("hello does not advertise predict");
        return "name=" + adapter->info().name + " version=" + adapter->info().version;
    });
    if (!adapter) return checks;

    const Graph fixture = conformance_graph();
    ClassProbs first = ClassProbs::Zero();
    record("predict returns a distribution", [&] {
        first = adapter->predict(fixture);
        return "probs=(" + std::to_string(first[0]) + ", " + std::to_string(first[1]) + ")";
    });
    record("predict is deterministic", [&] {
        const ClassProbs again = adapter->predict(fixture);
        if (again != first) throw ProtocolError("second predict on the same graph returned different probabilities");
        return std::string("identical");
    });
    if (adapter->info().supports("explain")) {
        std::vector<std::string> methods = explain_methods;
        if (methods.empty()) methods.push_back("occlusion");
        for (const auto& method : methods) {
            record("explain method '" + method + "'", [&] {
                const auto ex = adapter->explain(fixture, method);
                if (ex.empty_warning) throw ValidationError("no edge scores returned");
                return std::to_string(ex.ranking.size()) + " edges scored";
            });
        }
    }
    record("unknown op is rejected", [&] {
        const Json r = adapter->raw_request(Json{{"op", "frobnicate"}});
        if (r["ok"].get<bool>()) throw ProtocolError("unknown op answered ok=true");
        const std::string err = r.value("error", std::string());
        if (err != "unsupported op") throw ProtocolError("expected error 'unsupported op', got '" + err + "'");
        return err;
    });
    record("predict without graph is rejected", [&] {
        const Json r = adapter->raw_request(Json{{"op", "predict"}});
        if (r["ok"].get<bool>()) throw ProtocolError("predict without a graph answered ok=true");
        return r.value("error", std::string());
    });
    record("malformed request is rejected and the adapter continues", [&] {
        const Json r = adapter->raw_line("{this is not json");
        if (!r.is_object() || r.value("ok", true)) throw ProtocolError("malformed line did not produce ok=false");
        const Json hello = adapter->raw_request(Json{{"op", "hello"}, {"schema", kAdapterSchema}});
        if (!hello["ok"].get<bool>()) throw ProtocolError("adapter stopped answering after a malformed line");
        return std::string("recovered");
    });
    return checks;
}

}  // namespace cfgkit
