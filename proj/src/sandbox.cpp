#include "tirbench/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <semaphore>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "tirbench/errors.hpp"

extern char** environ;

namespace tirbench {

namespace {

// Only async-signal-safe calls: runs in the forked child.
void write_proc_file(const char* path, const char* text, std::size_t len) {
    const int fd = ::open(path, O_WRONLY | O_CLOEXEC);
    if (fd < 0) return;
    [[maybe_unused]] auto w = ::write(fd, text, len);
    ::close(fd);
}

using Clock = std::chrono::steady_clock;

constexpr std::size_t kDiagnosticCap = 64 * 1024;

const Json& member(const Json& j, const char* name) {
    if (!j.is_object()) throw ValidationError("tool_result", "expected an object");
    auto it = j.find(name);
    if (it == j.end()) throw ValidationError(name, "missing");
    return *it;
}

std::string member_string(const Json& j, const char* name) {
    const auto& v = member(j, name);
    if (!v.is_string()) throw ValidationError(name, "expected a string");
    return v.get<std::string>();
}

/// Owns one file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

struct Pipe {
    Fd read;
    Fd write;
};

Pipe make_pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe2");
    return Pipe{Fd(fds[0]), Fd(fds[1])};
}

void set_nonblocking(int fd) {
    const int flags = ::fcntl(fd, F_GETFL);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

std::optional<std::string> resolve_executable(const std::string& name) {
    auto executable = [](const std::string& p) { return ::access(p.c_str(), X_OK) == 0; };
    if (name.find('/') != std::string::npos) return executable(name) ? std::optional(name) : std::nullopt;
    const char* path = std::getenv("PATH");
    std::stringstream dirs(path ? path : "/usr/local/bin:/usr/bin:/bin");
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
        const auto candidate = (dir.empty() ? std::string(".") : dir) + "/" + name;
        if (executable(candidate)) return candidate;
    }
    return std::nullopt;
}

/// RAII scratch directory, removed with its contents on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::filesystem::path& root) {
        std::filesystem::create_directories(root);
        auto templ = (root / "tirbench-guest-XXXXXX").string();
        if (::mkdtemp(templ.data()) == nullptr) {
            throw std::system_error(errno, std::generic_category(), "mkdtemp");
        }
        path_ = templ;
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

ToolResult failure(std::string message, RunStatus status, double elapsed, int rc, std::string stderr_text = {}) {
    ToolResult r;
    r.status = ToolStatus::Error;
    r.message = std::move(message);
    r.run_result.status = status;
    r.run_result.execution_time = elapsed;
    r.run_result.return_code = rc;
    r.run_result.stderr_text = std::move(stderr_text);
    return r;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string_view to_string(ToolStatus v) { return v == ToolStatus::Success ? "Success" : "Error"; }

std::string_view to_string(RunStatus v) {
    switch (v) {
        case RunStatus::Finished: return "Finished";
        case RunStatus::Timeout: return "Timeout";
        case RunStatus::Killed: return "Killed";
    }
    return "?";
}

Json to_json(const ToolResult& r) {
    Json run;
    run["status"] = to_string(r.run_result.status);
    run["execution_time"] = r.run_result.execution_time;
    run["return_code"] = r.run_result.return_code;
    run["stdout"] = r.run_result.stdout_text;
    run["stderr"] = r.run_result.stderr_text;
    Json j;
    j["status"] = to_string(r.status);
    j["message"] = r.message;
    j["compile_result"] = r.compile_result ? Json(*r.compile_result) : Json(nullptr);
    j["run_result"] = std::move(run);
    return j;
}

ToolResult tool_result_from_json(const Json& j) {
    ToolResult r;
    const auto status = member_string(j, "status");
    if (status == "Success") {
        r.status = ToolStatus::Success;
    } else if (status == "Error") {
        r.status = ToolStatus::Error;
    } else {
        throw ValidationError("status", "unknown value '" + status + "'");
    }
    r.message = member_string(j, "message");
    if (const auto& cr = member(j, "compile_result"); !cr.is_null()) r.compile_result = member_string(j, "compile_result");

    const auto& run = member(j, "run_result");
    const auto run_status = member_string(run, "status");
    if (run_status == "Finished") {
        r.run_result.status = RunStatus::Finished;
    } else if (run_status == "Timeout") {
        r.run_result.status = RunStatus::Timeout;
    } else if (run_status == "Killed") {
        r.run_result.status = RunStatus::Killed;
    } else {
        throw ValidationError("run_result.status", "unknown value '" + run_status + "'");
    }
    const auto& et = member(run, "execution_time");
    if (!et.is_number()) throw ValidationError("run_result.execution_time", "expected a number");
    r.run_result.execution_time = et.get<double>();
    const auto& rc = member(run, "return_code");
    if (!rc.is_number_integer()) throw ValidationError("run_result.return_code", "expected an integer");
    r.run_result.return_code = rc.get<int>();
    r.run_result.stdout_text = member_string(run, "stdout");
    r.run_result.stderr_text = member_string(run, "stderr");

    if (r.status == ToolStatus::Success && r.run_result.status != RunStatus::Finished) {
        throw ValidationError("status", "Success requires run_result.status Finished");
    }
    return r;
}

std::string describe_failure(const ToolResult& r) {
    if (r.run_result.status == RunStatus::Timeout) return "Timeout: " + r.message;
    if (r.run_result.status == RunStatus::Killed) return "Killed: " + r.message;
    std::string out = r.run_result.stderr_text;
    if (!r.message.empty()) out = r.message + (out.empty() ? "" : "\n" + out);
    return out;
}

Json to_json(const ShimRequest& r) {
    Json j;
    j["code"] = r.code;
    j["entrypoint_mode"] = r.entrypoint_mode;
    j["limits"] = Json{{"timeout", r.timeout_s}, {"output_cap", r.output_cap}};
    return j;
}

ShimRequest shim_request_from_json(const Json& j) {
    ShimRequest r;
    r.code = member_string(j, "code");
    const auto& em = member(j, "entrypoint_mode");
    if (!em.is_boolean()) throw ValidationError("entrypoint_mode", "expected a boolean");
    r.entrypoint_mode = em.get<bool>();
    const auto& limits = member(j, "limits");
    const auto& t = member(limits, "timeout");
    const auto& c = member(limits, "output_cap");
    if (!t.is_number() || !(t.get<double>() > 0)) throw ValidationError("limits.timeout", "expected a positive number");
    if (!c.is_number_unsigned()) throw ValidationError("limits.output_cap", "expected a non-negative integer");
    r.timeout_s = t.get<double>();
    r.output_cap = c.get<std::size_t>();
    return r;
}

std::string encode_frame(std::string_view payload) {
    const auto n = static_cast<std::uint32_t>(payload.size());
    std::string out;
    out.reserve(4 + payload.size());
    out += static_cast<char>((n >> 24) & 0xFF);
    out += static_cast<char>((n >> 16) & 0xFF);
    out += static_cast<char>((n >> 8) & 0xFF);
    out += static_cast<char>(n & 0xFF);
    out.append(payload);
    return out;
}

std::optional<std::string> decode_frame(std::string_view bytes, std::size_t max_payload) {
    if (bytes.size() < 4) return std::nullopt;
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]);
    if (n > max_payload) throw ProtocolError(fmt::format("frame length {} exceeds limit {}", n, max_payload));
    if (bytes.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    return std::string(bytes.substr(4, n));
}

void apply_output_cap(ToolResult& r, std::size_t cap) {
    std::vector<std::string> notes;
    auto cut = [&](std::string& s, const char* name) {
        if (s.size() <= cap) return;
        notes.push_back(fmt::format("{} truncated from {} to {} bytes", name, s.size(), cap));
        s.resize(cap);
    };
    cut(r.run_result.stdout_text, "stdout");
    cut(r.run_result.stderr_text, "stderr");
    for (const auto& n : notes) {
        if (!r.message.empty()) r.message += "; ";
        r.message += n;
    }
}

struct Sandbox::Slots {
    explicit Slots(std::ptrdiff_t n) : sem(n) {}
    std::counting_semaphore<1 << 16> sem;
};

Sandbox::Sandbox(SandboxConfig config)
    : config_(std::move(config)),
      slots_(std::make_unique<Slots>(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_concurrent)))) {
    // A guest that dies mid-request must not take the supervisor down with SIGPIPE.
    ::signal(SIGPIPE, SIG_IGN);
}

Sandbox::~Sandbox() = default;

ToolResult Sandbox::execute(std::string_view code, const SandboxLimits& limits) {
    return run(code, false, limits);
}

ToolResult Sandbox::execute_with_entrypoint(std::string_view code, const SandboxLimits& limits) {
    return run(code, true, limits);
}

ToolResult Sandbox::run(std::string_view code, bool entrypoint_mode, const SandboxLimits& limits) {
    if (!(limits.timeout_s > 0.0) || limits.output_cap == 0) {
        throw ArgumentError("sandbox limits must be positive");
    }
    slots_->sem.acquire();
    struct Release {
        Sandbox::Slots& s;
        ~Release() { s.sem.release(); }
    } release{*slots_};

    const auto start = Clock::now();
    if (config_.guest_command.empty()) return failure("no guest runner configured", RunStatus::Finished, 0.0, -1);
    const auto exe = resolve_executable(config_.guest_command.front());
    if (!exe) {
        return failure("guest runner not found: " + config_.guest_command.front(), RunStatus::Finished, 0.0, -1);
    }

    ShimRequest request{std::string(code), entrypoint_mode, limits.timeout_s, limits.output_cap};
    const std::string frame = encode_frame(to_json(request).dump(-1, ' ', false, Json::error_handler_t::replace));

    std::optional<ScratchDir> scratch;
    Pipe in, out, err;
    try {
        scratch.emplace(config_.scratch_root);
        in = make_pipe();
        out = make_pipe();
        err = make_pipe();
    } catch (const std::exception& e) {
        return failure(std::string("cannot prepare guest: ") + e.what(), RunStatus::Finished, 0.0, -1);
    }

    // Everything the child touches is prepared before fork.
    std::vector<std::string> args = config_.guest_command;
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    const std::string scratch_path = scratch->path().string();
    const std::string exe_path = *exe;
    const rlim_t mem = static_cast<rlim_t>(limits.memory_bytes);
    const bool isolate = config_.isolate_network;
    // Keep the caller's identity inside the namespace so paths stay reachable.
    const std::string uid_map = fmt::format("{0} {0} 1\n", ::getuid());
    const std::string gid_map = fmt::format("{0} {0} 1\n", ::getgid());

    const pid_t pid = ::fork();
    if (pid < 0) return failure("fork failed: " + std::string(std::strerror(errno)), RunStatus::Finished, 0.0, -1);
    if (pid == 0) {
        ::setpgid(0, 0);
        if (::chdir(scratch_path.c_str()) != 0) ::_exit(126);
        if (mem > 0) {
            struct rlimit rl{mem, mem};
            ::setrlimit(RLIMIT_AS, &rl);
        }
        struct rlimit no_core{0, 0};
        ::setrlimit(RLIMIT_CORE, &no_core);
        // Opened before unshare: the new namespace may not reach the binary's directory.
        const int exe_fd = ::open(exe_path.c_str(), O_RDONLY | O_CLOEXEC);
        if (isolate && ::unshare(CLONE_NEWUSER | CLONE_NEWNET) == 0) {
            write_proc_file("/proc/self/setgroups", "deny", 4);
            write_proc_file("/proc/self/uid_map", uid_map.data(), uid_map.size());
            write_proc_file("/proc/self/gid_map", gid_map.data(), gid_map.size());
        }
        ::dup2(in.read.get(), 0);
        ::dup2(out.write.get(), 1);
        ::dup2(err.write.get(), 2);
        if (exe_fd >= 0) ::fexecve(exe_fd, argv.data(), environ);
        ::execve(exe_path.c_str(), argv.data(), environ);
        static const char msg[] = "exec failed\n";
        [[maybe_unused]] auto w = ::write(2, msg, sizeof msg - 1);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    in.read.reset();
    out.write.reset();
    err.write.reset();
    set_nonblocking(in.write.get());
    set_nonblocking(out.read.get());
    set_nonblocking(err.read.get());

    const auto deadline = start + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double>(limits.timeout_s + config_.grace_s));
    std::size_t written = 0;
    std::string reply;
    std::string diag;
    bool reply_overflow = false;
    bool timed_out = false;
    char buf[65536];

    while (out.read || err.read) {
        const auto now = Clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        std::vector<pollfd> fds;
        if (in.write) fds.push_back({in.write.get(), POLLOUT, 0});
        if (out.read) fds.push_back({out.read.get(), POLLIN, 0});
        if (err.read) fds.push_back({err.read.get(), POLLIN, 0});
        const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(wait_ms, 1000)));
        if (ready < 0 && errno != EINTR) break;
        for (const auto& p : fds) {
            if (p.revents == 0) continue;
            if (in.write && p.fd == in.write.get()) {
                const auto n = ::write(p.fd, frame.data() + written, frame.size() - written);
                if (n > 0) written += static_cast<std::size_t>(n);
                if (n < 0 && errno != EAGAIN && errno != EINTR) in.write.reset();
                if (written == frame.size()) in.write.reset();
                continue;
            }
            const bool is_out = out.read && p.fd == out.read.get();
            const auto n = ::read(p.fd, buf, sizeof buf);
            if (n > 0) {
                if (is_out) {
                    reply.append(buf, static_cast<std::size_t>(n));
                    if (reply.size() > config_.max_reply_bytes + 4) {
                        reply_overflow = true;
                        out.read.reset();
                    }
                } else if (diag.size() < kDiagnosticCap) {
                    diag.append(buf, std::min(static_cast<std::size_t>(n), kDiagnosticCap - diag.size()));
                }
            } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
                (is_out ? out.read : err.read).reset();
            }
        }
        if (reply_overflow) break;
    }
    in.write.reset();

    int wstatus = 0;
    bool reaped = false;
    while (!timed_out && !reply_overflow) {
        const pid_t w = ::waitpid(pid, &wstatus, WNOHANG);
        if (w == pid) {
            reaped = true;
            break;
        }
        if (w < 0 && errno != EINTR) break;
        if (Clock::now() >= deadline) {
            timed_out = true;
            break;
        }
        ::usleep(1000);
    }
    // Take down the guest and anything it spawned.
    ::kill(-pid, SIGKILL);
    if (!reaped) {
        while (::waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
        }
    }
    const double elapsed = seconds_since(start);

    if (timed_out) {
        return failure(fmt::format("execution exceeded {}s", limits.timeout_s), RunStatus::Timeout, elapsed, -1, diag);
    }
    if (reply_overflow) {
        return failure(fmt::format("guest reply exceeded {} bytes", config_.max_reply_bytes), RunStatus::Killed,
                       elapsed, -1, diag);
    }

    std::optional<std::string> payload;
    try {
        payload = decode_frame(reply, config_.max_reply_bytes);
    } catch (const ProtocolError& e) {
        return failure(std::string("malformed guest reply: ") + e.what(), RunStatus::Finished, elapsed, -1, diag);
    }
    if (!payload) {
        if (WIFSIGNALED(wstatus)) {
            return failure(fmt::format("guest killed by signal {}", WTERMSIG(wstatus)), RunStatus::Killed, elapsed,
                           -WTERMSIG(wstatus), diag);
        }
        const int rc = WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : -1;
        if (rc == 127 || rc == 126) {
            return failure("guest runner could not be launched: " + config_.guest_command.front(),
                           RunStatus::Finished, elapsed, rc, diag);
        }
        return failure(fmt::format("guest exited with code {} without a reply", rc), RunStatus::Finished, elapsed,
                       rc, diag);
    }

    ToolResult result;
    try {
        result = tool_result_from_json(Json::parse(*payload));
    } catch (const std::exception& e) {
        return failure(std::string("malformed guest reply: ") + e.what(), RunStatus::Finished, elapsed, -1, diag);
    }
    apply_output_cap(result, limits.output_cap);
    return result;
}

}  // namespace tirbench
