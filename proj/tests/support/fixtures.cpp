#include "fixtures.hpp"

#include <random>
#include <sstream>

#include "tirbench/cli.hpp"
#include "tirbench/digest.hpp"

namespace testing {

TempDir::TempDir() {
    std::random_device rd;
    const auto base = fs::temp_directory_path();
    for (int attempt = 0;; ++attempt) {
        auto candidate = base / ("tirbench-test-" + std::to_string(rd()) + std::to_string(attempt));
        if (fs::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, std::string_view text) { tirbench::write_file(path, text); }

tirbench::TaskSample make_sample(std::string id, std::string gold, tirbench::AnswerKind kind, std::string question) {
    tirbench::TaskSample s;
    s.id = std::move(id);
    s.category = tirbench::Category::number_calculation;
    s.instructions = "Answer the question.";
    s.question = std::move(question);
    s.gold_answer = std::move(gold);
    s.answer_kind = kind;
    return s;
}

tirbench::MockEntry entry(const tirbench::Json& match, const tirbench::Json& response) {
    return tirbench::mock_entry_from_json(tirbench::Json{{"match", match}, {"response", response}});
}

tirbench::SandboxConfig stub_sandbox_config(const fs::path& scratch, std::vector<std::string> extra_args) {
    tirbench::SandboxConfig c;
    c.guest_command = {STUB_GUEST_PATH};
    for (auto& a : extra_args) c.guest_command.push_back(std::move(a));
    c.scratch_root = scratch;
    c.grace_s = 1.0;
    return c;
}

FakeExecutor::FakeExecutor(Handler handler) : handler_(std::move(handler)) {}

tirbench::ToolResult FakeExecutor::execute(std::string_view code, const tirbench::SandboxLimits&) {
    ++calls_;
    return handler_(code, false);
}

tirbench::ToolResult FakeExecutor::execute_with_entrypoint(std::string_view code, const tirbench::SandboxLimits&) {
    ++calls_;
    return handler_(code, true);
}

tirbench::ToolResult finished(std::string stdout_text) {
    tirbench::ToolResult r;
    r.run_result.stdout_text = std::move(stdout_text);
    return r;
}

tirbench::ToolResult failed(std::string stderr_text) {
    tirbench::ToolResult r;
    r.status = tirbench::ToolStatus::Error;
    r.message = "error";
    r.run_result.return_code = 1;
    r.run_result.stderr_text = std::move(stderr_text);
    return r;
}

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "tirbench");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliResult r;
    r.code = tirbench::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

}  // namespace testing
