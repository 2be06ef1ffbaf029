#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tirbench/records.hpp"

namespace tirbench {

enum class ToolStatus { Success, Error };
enum class RunStatus { Finished, Timeout, Killed };

std::string_view to_string(ToolStatus v);
std::string_view to_string(RunStatus v);

struct RunResult {
    RunStatus status = RunStatus::Finished;
    double execution_time = 0.0;
    int return_code = 0;
    std::string stdout_text;
    std::string stderr_text;
};

/// What a code-interpreter call hands back to the model. Serializes field for
/// field as: status, message, compile_result, run_result{status,
/// execution_time, return_code, stdout, stderr}.
struct ToolResult {
    ToolStatus status = ToolStatus::Success;
    std::string message;
    std::optional<std::string> compile_result;
    RunResult run_result;
};

Json to_json(const ToolResult& r);
/// Throws ValidationError when the object is malformed or breaks
/// "Success implies Finished".
ToolResult tool_result_from_json(const Json& j);

/// Text fed back to the model after a failed or timed-out run.
std::string describe_failure(const ToolResult& r);

struct SandboxLimits {
    double timeout_s = 10.0;
    std::size_t memory_bytes = std::size_t{1} << 30;
    std::size_t output_cap = 64 * 1024;
};

/// Request sent to the guest-side runner. One per guest process.
struct ShimRequest {
    std::string code;
    bool entrypoint_mode = false;
    double timeout_s = 10.0;
    std::size_t output_cap = 64 * 1024;
};

Json to_json(const ShimRequest& r);
ShimRequest shim_request_from_json(const Json& j);

// Framing for the supervisor <-> runner pipe: a 4-byte big-endian payload
// length followed by that many bytes of UTF-8 JSON.
std::string encode_frame(std::string_view payload);

/// Decodes one frame from the front of `bytes`. Returns nullopt when the
/// buffer does not yet hold a whole frame; throws ProtocolError when the
/// declared length exceeds `max_payload`.
std::optional<std::string> decode_frame(std::string_view bytes, std::size_t max_payload);

/// Truncates stdout/stderr to `cap` bytes each, noting it in `message`.
void apply_output_cap(ToolResult& r, std::size_t cap);

/// Anything able to run guest code. The harness only talks to this interface.
class Executor {
public:
    virtual ~Executor() = default;

    virtual ToolResult execute(std::string_view code, const SandboxLimits& limits) = 0;

    /// Like execute, but a `main` function, when defined, is called and its
    /// return value printed as the final stdout line.
    virtual ToolResult execute_with_entrypoint(std::string_view code, const SandboxLimits& limits) = 0;
};

struct SandboxConfig {
    /// argv of the guest runner, e.g. {"python3", "sandbox_runner.py"}.
    std::vector<std::string> guest_command;
    double grace_s = 2.0;
    std::size_t max_concurrent = 4;
    /// Fresh scratch directories are created under this root.
    std::filesystem::path scratch_root = std::filesystem::temp_directory_path();
    /// Try to place the guest in empty user and network namespaces.
    bool isolate_network = true;
    /// Largest reply frame accepted from the guest.
    std::size_t max_reply_bytes = 8 * 1024 * 1024;
};

/// Runs each call in a fresh guest process with its own scratch directory,
/// address-space limit and process group. Never blocks past timeout + grace,
/// and reports every failure as a ToolResult instead of throwing.
class Sandbox final : public Executor {
public:
    explicit Sandbox(SandboxConfig config);
    ~Sandbox() override;

    Sandbox(const Sandbox&) = delete;
    Sandbox& operator=(const Sandbox&) = delete;

    ToolResult execute(std::string_view code, const SandboxLimits& limits) override;
    ToolResult execute_with_entrypoint(std::string_view code, const SandboxLimits& limits) override;

    const SandboxConfig& config() const noexcept { return config_; }

private:
    ToolResult run(std::string_view code, bool entrypoint_mode, const SandboxLimits& limits);

    struct Slots;
    SandboxConfig config_;
    std::unique_ptr<Slots> slots_;
};

}  // namespace tirbench
