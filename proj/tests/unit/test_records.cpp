#include <doctest.h>

#include <random>
#include <string>

#include "fixtures.hpp"
#include "tirbench/digest.hpp"
#include "tirbench/errors.hpp"
#include "tirbench/records.hpp"

using namespace tirbench;
using testing::TempDir;

namespace {

std::string random_text(std::mt19937_64& rng) {
    static const std::string pieces[] = {"x", " ", "\n", "[[", "]]", "\"", "\\", "é", "```", "42", "{}", "\t", "ok."};
    std::string s;
    const auto n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % std::size(pieces)];
    return s;
}

TraceRecord random_record(std::mt19937_64& rng, int index) {
    TraceRecord r;
    r.sample_id = "s" + std::to_string(index);
    r.paradigm = static_cast<Paradigm>(rng() % 4);
    const auto turns = rng() % 6;
    for (std::size_t i = 0; i < turns; ++i) {
        const auto role = static_cast<TurnRole>(rng() % 5);
        const TokenCount n = is_generated(role) ? static_cast<TokenCount>(rng() % 500) : 0;
        r.turns.push_back(Turn{role, random_text(rng), n});
    }
    recount_tokens(r);
    if (rng() % 2) r.final_answer = random_text(rng);
    r.correct = rng() % 2;
    if (r.correct && rng() % 2) r.first_correct_token_index = r.tokens_all == 0 ? 0 : static_cast<TokenCount>(rng() % (r.tokens_all + 1));
    r.step_count = static_cast<std::int64_t>(rng() % 50);
    r.tool_call_count = static_cast<std::int64_t>(rng() % 5);
    r.terminated_by = static_cast<Termination>(rng() % 4);
    return r;
}

TraceRecord simple_record() {
    TraceRecord r;
    r.sample_id = "a";
    r.turns = {Turn{TurnRole::model_reasoning, "think [[1]]", 10}, Turn{TurnRole::model_code, "print(1)", 4},
               Turn{TurnRole::tool_result, "{}", 0}};
    recount_tokens(r);
    r.final_answer = "1";
    r.correct = true;
    r.first_correct_token_index = 10;
    return r;
}

}  // namespace

TEST_SUITE("records") {

TEST_CASE("code turns are the only generated tokens left out of the non-tool count") {
    const auto r = simple_record();
    CHECK(r.tokens_all == 14);
    CHECK(r.tokens_non_tool == 10);
}

TEST_CASE("empty list saves to an empty file") {
    TempDir dir;
    save_traces({}, dir / "t.jsonl");
    CHECK(read_file(dir / "t.jsonl").empty());
    CHECK(load_traces(dir / "t.jsonl").empty());
}

TEST_CASE("randomized records round-trip in order") {
    TempDir dir;
    std::mt19937_64 rng(11);
    std::vector<TraceRecord> records;
    for (int i = 0; i < 1000; ++i) records.push_back(random_record(rng, i));
    const auto path = dir / "t.jsonl";
    save_traces(records, path);
    const auto bytes = read_file(path);
    CHECK(std::count(bytes.begin(), bytes.end(), '\n') == 1000);
    const auto back = load_traces(path);
    CHECK(back == records);
    save_traces(back, dir / "u.jsonl");
    CHECK(read_file(dir / "u.jsonl") == bytes);
}

TEST_CASE("invariant violations are rejected with the field and line") {
    TempDir dir;
    auto bad = simple_record();
    auto j = to_json(bad);
    j["tokens_non_tool"] = 20;
    const auto path = dir / "t.jsonl";
    testing::write_text(path, dump_line(to_json(simple_record())) + "\n" + dump_line(j) + "\n");
    try {
        load_traces(path);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "tokens_non_tool");
        CHECK(e.line() == 2);
    }
}

TEST_CASE("tool results cannot carry tokens") {
    auto r = simple_record();
    r.turns[2].token_count = 3;
    recount_tokens(r);
    CHECK_THROWS_AS(validate(r), ValidationError);
}

TEST_CASE("first-correct index needs a correct record") {
    auto r = simple_record();
    r.correct = false;
    CHECK_THROWS_AS(validate(r), ValidationError);
    r = simple_record();
    r.first_correct_token_index = r.tokens_all + 1;
    CHECK_THROWS_AS(validate(r), ValidationError);
}

TEST_CASE("truncated final line is a parse error at that line") {
    TempDir dir;
    std::mt19937_64 rng(3);
    std::vector<TraceRecord> records;
    for (int i = 0; i < 5; ++i) records.push_back(random_record(rng, i));
    const auto path = dir / "t.jsonl";
    save_traces(records, path);
    auto bytes = read_file(path);
    bytes.resize(bytes.size() - 10);
    testing::write_text(path, bytes);
    try {
        load_traces(path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
    }
    const auto survivors = recover_traces(path);
    CHECK(survivors.size() == 4);
    CHECK(load_traces(path).size() == 4);
}

TEST_CASE("blank lines are not skipped silently") {
    TempDir dir;
    const auto path = dir / "t.jsonl";
    testing::write_text(path, dump_line(to_json(simple_record())) + "\n\n");
    CHECK_THROWS_AS(load_traces(path), ParseError);
}

TEST_CASE("task files reject duplicate ids and unparsable gold answers") {
    TempDir dir;
    const auto a = testing::make_sample("a", "[[1]]", AnswerKind::numeric);
    save_tasks(std::vector{a, a}, dir / "dup.jsonl");
    CHECK_THROWS_AS(load_tasks(dir / "dup.jsonl"), ParseError);

    auto bad = to_json(a);
    bad["gold_answer"] = "[[not a number]]";
    testing::write_text(dir / "bad.jsonl", dump_line(bad) + "\n");
    try {
        load_tasks(dir / "bad.jsonl");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "gold_answer");
    }
}

TEST_CASE("manifest round-trips and detects a changed task file") {
    TempDir dir;
    const auto tasks = dir / "tasks.jsonl";
    save_tasks(std::vector{testing::make_sample("a", "[[1]]", AnswerKind::numeric)}, tasks);
    RunManifest m;
    m.run_id = "r";
    m.model_id = "mock";
    m.paradigm = Paradigm::tit;
    m.dataset_digest = file_digest(tasks);
    m.dataset_path = tasks.string();
    m.created_at = "2024-01-01T00:00:00Z";
    m.token_source = TokenSource::mixed;
    m.config = MetricConfig::defaults();
    const auto path = manifest_path_for(dir / "t.jsonl");
    save_manifest(m, path);
    CHECK(load_manifest(path) == m);
    CHECK_NOTHROW(check_manifest_dataset(m, tasks));
    save_tasks(std::vector{testing::make_sample("a", "[[2]]", AnswerKind::numeric)}, tasks);
    CHECK_THROWS_AS(check_manifest_dataset(m, tasks), ValidationError);
}

TEST_CASE("metric config defaults follow the published configuration") {
    const auto c = MetricConfig::defaults();
    CHECK(c.c_max == 32768);
    REQUIRE(c.thresholds.size() == 10);
    CHECK(c.thresholds.front() == doctest::Approx(0.1));
    CHECK(c.thresholds.back() == 1.0);
    CHECK(c.budgets.front() == 1024);
    CHECK(c.budgets.back() == 32768);
    auto bad = c;
    bad.thresholds = {0.5, 0.5};
    CHECK_THROWS_AS(validate(bad), ValidationError);
    bad = c;
    bad.thresholds = {0.0, 0.5};
    CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("enum names parse back") {
    for (auto p : {Paradigm::vanilla, Paradigm::pot, Paradigm::mt_tir, Paradigm::tit}) {
        CHECK(parse_paradigm(to_string(p)) == p);
    }
    CHECK_THROWS_AS(parse_category("cooking"), ArgumentError);
}

}
