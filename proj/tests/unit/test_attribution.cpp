#include <doctest.h>

#include <atomic>
#include <random>
#include <algorithm>

#include "fixtures.hpp"
#include "tirbench/attribution.hpp"
#include "tirbench/errors.hpp"

using namespace tirbench;
using testing::entry;

namespace {

TraceRecord outcome(std::string id, bool correct, std::string content = "work") {
    TraceRecord t;
    t.sample_id = std::move(id);
    t.turns = {Turn{TurnRole::model_reasoning, std::move(content), 3}};
    recount_tokens(t);
    t.correct = correct;
    if (correct) t.first_correct_token_index = 3;
    return t;
}

/// Replies from a fixed list, one per call, then repeats the last.
class SequenceClient final : public ChatClient {
public:
    explicit SequenceClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    ChatResponse chat(const ChatRequest&) override {
        const auto i = std::min<std::size_t>(calls++, replies_.size() - 1);
        if (replies_[i] == "!throw") throw TransportError(500, "judge down");
        ChatResponse r;
        r.content = replies_[i];
        return r;
    }
    std::string model_id() const override { return "judge"; }
    std::atomic<std::size_t> calls{0};

private:
    std::vector<std::string> replies_;
};

}  // namespace

TEST_SUITE("attribution") {

TEST_CASE("flip sets by sample") {
    std::vector<TraceRecord> base{outcome("a", false), outcome("b", true), outcome("c", true), outcome("d", false)};
    std::vector<TraceRecord> tir{outcome("d", false), outcome("c", false), outcome("b", true), outcome("a", true)};
    const auto f = diff_runs(base, tir);
    CHECK(f.gained == std::vector<std::string>{"a"});
    CHECK(f.lost == std::vector<std::string>{"c"});
    CHECK(f.unchanged == std::vector<std::string>{"b", "d"});
    CHECK(f.inconsistent() == 2);
}

TEST_CASE("mismatched runs list the missing ids") {
    std::vector<TraceRecord> base{outcome("a", false), outcome("b", true)};
    std::vector<TraceRecord> tir{outcome("a", true), outcome("z", true)};
    try {
        diff_runs(base, tir);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("b") != std::string::npos);
        CHECK(what.find("z") != std::string::npos);
    }
    std::vector<TraceRecord> dup{outcome("a", true), outcome("a", true)};
    CHECK_THROWS_AS(diff_runs(dup, dup), ValidationError);
}

TEST_CASE("flip sets from trace files") {
    testing::TempDir dir;
    std::vector<TraceRecord> base{outcome("a", false), outcome("b", true)};
    std::vector<TraceRecord> tir{outcome("a", true), outcome("b", true)};
    save_traces(base, dir / "base.jsonl");
    save_traces(tir, dir / "tir.jsonl");
    CHECK(diff_runs(dir / "base.jsonl", dir / "tir.jsonl") == diff_runs(base, tir));
}

TEST_CASE("judge replies") {
    CHECK(parse_judge_reply("TOOL") == JudgeLabel::tool_related);
    CHECK(parse_judge_reply("  tool.\n") == JudgeLabel::tool_related);
    CHECK(parse_judge_reply("Other") == JudgeLabel::other);
    CHECK(parse_judge_reply("TOOL, mostly") == JudgeLabel::unjudged);
    CHECK(parse_judge_reply("") == JudgeLabel::unjudged);
    CHECK(parse_judge_reply("...") == JudgeLabel::unjudged);
}

TEST_CASE("judge prompt shows the problem and the transcript") {
    const auto t = outcome("a", true, "print(6*7) gave 42");
    const auto p = judge_prompt(t, "What is six times seven?");
    CHECK(p.find("What is six times seven?") != std::string::npos);
    CHECK(p.find("print(6*7) gave 42") != std::string::npos);
    CHECK(p.find("TOOL") != std::string::npos);
    CHECK(judge_prompt(t, "").find("(not provided)") != std::string::npos);
}

TEST_CASE("gains are classified and shares use the judged set") {
    std::vector<TraceRecord> base, tir;
    for (int i = 0; i < 10; ++i) {
        const auto id = "s" + std::to_string(i);
        base.push_back(outcome(id, i >= 6));
        // s0..s3 gained, s6 lost, the rest unchanged.
        tir.push_back(outcome(id, i < 4 || i > 6, i < 2 ? "marker-qz tool run" : "reasoned it out"));
    }
    const auto flips = diff_runs(base, tir);
    REQUIRE(flips.gained.size() == 4);
    REQUIRE(flips.lost.size() == 1);
    MockClient judge({entry({{"contains", "marker-qz"}}, {{"content", "TOOL"}}),
                      entry(Json::object(), {{"content", "OTHER"}})});
    const auto r = classify_flips(flips, tir, judge, {}, 3);
    CHECK(r.tool_related == 2);
    CHECK(r.other == 2);
    CHECK(r.unjudged_ids.empty());
    CHECK(r.tool_related_gain == doctest::Approx(2.0 / 5.0));
    CHECK(r.other_gain == doctest::Approx(2.0 / 5.0));
    CHECK(r.loss == doctest::Approx(1.0 / 5.0));
    CHECK(r.tool_related_gain + r.other_gain + r.loss == doctest::Approx(1.0));
    CHECK(r.judge_model == "mock");

    const auto back = attribution_from_json(to_json(r));
    CHECK(to_json(back) == to_json(r));
}

TEST_CASE("a non-conforming reply is asked once more") {
    std::vector<TraceRecord> base{outcome("a", false)};
    std::vector<TraceRecord> tir{outcome("a", true)};
    const auto flips = diff_runs(base, tir);

    SequenceClient second_try({"I think it was the tool", "TOOL"});
    const auto ok = classify_flips(flips, tir, second_try);
    CHECK(second_try.calls == 2);
    CHECK(ok.tool_related == 1);

    SequenceClient never({"maybe", "perhaps"});
    const auto miss = classify_flips(flips, tir, never);
    CHECK(never.calls == 2);
    CHECK(miss.unjudged_ids == std::vector<std::string>{"a"});
    CHECK(miss.tool_related_gain == 0.0);

    SequenceClient down({"!throw"});
    const auto err = classify_flips(flips, tir, down);
    CHECK(err.unjudged_ids == std::vector<std::string>{"a"});
}

TEST_CASE("gained samples need a tool-run trace") {
    FlipSet f;
    f.gained = {"ghost"};
    MockClient judge({entry(Json::object(), {{"content", "TOOL"}})});
    CHECK_THROWS_AS(classify_flips(f, std::vector<TraceRecord>{}, judge), ValidationError);
}

TEST_CASE("flip counts match an independent recount") {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 30);
        std::vector<TraceRecord> base, tir;
        std::size_t gained = 0, lost = 0, same = 0;
        for (int i = 0; i < n; ++i) {
            const bool b = rng() % 2;
            const bool t = rng() % 2;
            base.push_back(outcome("id" + std::to_string(i), b));
            tir.push_back(outcome("id" + std::to_string(i), t));
            gained += !b && t;
            lost += b && !t;
            same += b == t;
        }
        std::shuffle(tir.begin(), tir.end(), rng);
        const auto f = diff_runs(base, tir);
        CHECK(f.gained.size() == gained);
        CHECK(f.lost.size() == lost);
        CHECK(f.unchanged.size() == same);
        CHECK(std::is_sorted(f.gained.begin(), f.gained.end()));
        CHECK(std::is_sorted(f.lost.begin(), f.lost.end()));
    }
}

}
