#include <doctest.h>

#include <cstdlib>

#include "fixtures.hpp"
#include "tirbench/config.hpp"
#include "tirbench/errors.hpp"

using namespace tirbench;

namespace {

const char* kFull = R"([run]
paradigm = mt_tir
tasks = data/tasks.jsonl
traces = out/run.jsonl
parallelism = 3
created_at = 2024-01-01T00:00:00Z

[client]
kind = openai
base_url = http://127.0.0.1:8000/v1
model = served
api_key = from-file
extra_body = {"chat_template_kwargs": {"enable_thinking": false}}

[sampling]
temperature = 0.6
top_p = 0.95

[harness]
budget = 8192
max_tool_calls = 4
record_timing = false

[sandbox]
timeout_s = 3.5
memory_mb = 256
guest = bin/guest --flag

[metrics]
c_max = 16384
thresholds = 0.5, 1.0
budgets = 1024, 2048

[judge]
kind = mock
mock_script = judge.jsonl
)";

std::string field_of(const std::filesystem::path& path) {
    try {
        load_config(path);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    return text.replace(at, from.size(), to);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("a complete file loads with paths resolved against it") {
    testing::TempDir dir;
    testing::write_text(dir / "c.ini", kFull);
    ::unsetenv("TIRBENCH_API_KEY");
    const auto c = load_config(dir / "c.ini");
    CHECK(c.harness.paradigm == Paradigm::mt_tir);
    CHECK(c.tasks == dir / "data/tasks.jsonl");
    CHECK(c.traces == dir / "out/run.jsonl");
    CHECK(c.run_id == "run");
    CHECK(c.parallelism == 3);
    CHECK(c.created_at == "2024-01-01T00:00:00Z");
    CHECK(c.client.kind == ClientKind::openai);
    CHECK(c.client.openai.model == "served");
    CHECK(c.client.openai.api_key == "from-file");
    CHECK(c.client.openai.extra_body["chat_template_kwargs"]["enable_thinking"] == false);
    CHECK(c.sampling.temperature == 0.6);
    CHECK(c.harness.budget == 8192);
    CHECK(c.harness.max_tool_calls == 4);
    CHECK_FALSE(c.harness.record_timing);
    CHECK(c.harness.limits.timeout_s == 3.5);
    CHECK(c.harness.limits.memory_bytes == 256u * 1024 * 1024);
    CHECK(c.sandbox.guest_command == std::vector<std::string>{(dir / "bin/guest").string(), "--flag"});
    CHECK(c.metrics.c_max == 16384);
    CHECK(c.metrics.thresholds == std::vector<double>{0.5, 1.0});
    CHECK(c.metrics.budgets == std::vector<TokenCount>{1024, 2048});
    REQUIRE(c.judge);
    CHECK(c.judge->kind == ClientKind::mock);
    CHECK(c.judge->mock_script == dir / "judge.jsonl");

    CHECK(load_metrics_section(dir / "c.ini") == c.metrics);
    CHECK(load_judge_section(dir / "c.ini")->mock_script == c.judge->mock_script);
}

TEST_CASE("environment and command line take precedence") {
    testing::TempDir dir;
    testing::write_text(dir / "c.ini", kFull);
    ::setenv("TIRBENCH_API_KEY", "from-env", 1);
    ConfigOverrides o;
    o.mock_script = dir / "m.jsonl";
    o.traces = dir / "elsewhere.jsonl";
    o.parallelism = 7;
    const auto c = load_config(dir / "c.ini", o);
    ::unsetenv("TIRBENCH_API_KEY");
    CHECK(c.client.kind == ClientKind::mock);
    CHECK(c.client.mock_script == dir / "m.jsonl");
    CHECK(c.traces == dir / "elsewhere.jsonl");
    CHECK(c.run_id == "elsewhere");
    CHECK(c.parallelism == 7);
    CHECK(load_config(dir / "c.ini").client.openai.api_key == "from-file");
    ::setenv("TIRBENCH_API_KEY", "from-env", 1);
    CHECK(load_config(dir / "c.ini").client.openai.api_key == "from-env");
    ::unsetenv("TIRBENCH_API_KEY");
}

TEST_CASE("errors name the offending field") {
    testing::TempDir dir;
    const auto p = dir / "c.ini";
    testing::write_text(p, replace(kFull, "model = served\n", ""));
    CHECK(field_of(p) == "client.model");
    testing::write_text(p, replace(kFull, "paradigm = mt_tir", "paradigm = freestyle"));
    CHECK(field_of(p) == "run.paradigm");
    testing::write_text(p, replace(kFull, "budget = 8192", "budget = lots"));
    CHECK(field_of(p) == "harness.budget");
    testing::write_text(p, replace(kFull, "budget = 8192", "budget = 99999"));
    CHECK(field_of(p) == "harness.budget");
    testing::write_text(p, replace(kFull, "guest = bin/guest --flag\n", ""));
    CHECK(field_of(p) == "sandbox.guest");
    testing::write_text(p, replace(kFull, "record_timing = false", "record_timing = maybe"));
    CHECK(field_of(p) == "harness.record_timing");
    testing::write_text(p, replace(kFull, "thresholds = 0.5, 1.0", "thresholds = 0.5, x"));
    CHECK(field_of(p) == "metrics.thresholds");
    testing::write_text(p, replace(kFull, "kind = openai", "kind = telepathy"));
    CHECK(field_of(p) == "client.kind");
    testing::write_text(p, replace(kFull, "parallelism = 3", "parallelism = 0"));
    CHECK(field_of(p) == "run.parallelism");
    testing::write_text(p, replace(kFull, "extra_body = {", "extra_body = ["));
    CHECK(field_of(p) == "client.extra_body");
    testing::write_text(p, "[run\nparadigm = vanilla\n");
    CHECK(field_of(p) == "file");
}

TEST_CASE("vanilla runs need no sandbox and the judge is optional") {
    testing::TempDir dir;
    testing::write_text(dir / "c.ini", "[run]\nparadigm = vanilla\ntasks = t.jsonl\ntraces = v.jsonl\n"
                                       "[client]\nkind = mock\nmock_script = m.jsonl\n");
    const auto c = load_config(dir / "c.ini");
    CHECK(c.harness.paradigm == Paradigm::vanilla);
    CHECK(c.client.mock_script == dir / "m.jsonl");
    CHECK_FALSE(c.judge);
    CHECK(c.metrics == MetricConfig::defaults());
    CHECK(c.parallelism == 1);
}

TEST_CASE("timestamps are UTC seconds") {
    const auto t = utc_timestamp();
    CHECK(t.size() == 20);
    CHECK(t[10] == 'T');
    CHECK(t.back() == 'Z');
}

}
