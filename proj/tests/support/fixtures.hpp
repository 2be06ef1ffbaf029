#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "tirbench/client.hpp"
#include "tirbench/records.hpp"
#include "tirbench/sandbox.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory, removed with everything in it on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(std::string_view name) const { return path_ / name; }

private:
    fs::path path_;
};

void write_text(const fs::path& path, std::string_view text);

tirbench::TaskSample make_sample(std::string id, std::string gold, tirbench::AnswerKind kind,
                                 std::string question = "What is the answer?");

/// Mock entry from the script-file JSON form.
tirbench::MockEntry entry(const tirbench::Json& match, const tirbench::Json& response);

tirbench::SandboxConfig stub_sandbox_config(const fs::path& scratch, std::vector<std::string> extra_args = {});

/// In-process executor. Each call goes to `handler`; calls are counted.
class FakeExecutor final : public tirbench::Executor {
public:
    using Handler = std::function<tirbench::ToolResult(std::string_view code, bool entrypoint)>;
    explicit FakeExecutor(Handler handler);

    tirbench::ToolResult execute(std::string_view code, const tirbench::SandboxLimits&) override;
    tirbench::ToolResult execute_with_entrypoint(std::string_view code, const tirbench::SandboxLimits&) override;

    int calls() const { return calls_.load(); }

private:
    Handler handler_;
    std::atomic<int> calls_{0};
};

/// Finished run with the given stdout.
tirbench::ToolResult finished(std::string stdout_text);
/// Failed run: Error status, return code 1, `stderr_text` on stderr.
tirbench::ToolResult failed(std::string stderr_text);

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

/// Runs the command line in-process.
CliResult cli(std::vector<std::string> args);

}  // namespace testing
