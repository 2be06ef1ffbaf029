#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tirbench/client.hpp"
#include "tirbench/records.hpp"

namespace tirbench {

/// Per-sample correctness flips between a base run and a tool-integrated run.
/// Each list is sorted by id.
struct FlipSet {
    std::vector<std::string> gained;     // correct only with tools
    std::vector<std::string> lost;       // correct only without
    std::vector<std::string> unchanged;

    std::size_t inconsistent() const noexcept { return gained.size() + lost.size(); }
    friend bool operator==(const FlipSet&, const FlipSet&) = default;
};

/// Throws ValidationError listing missing ids when the runs cover different
/// samples, or when a run repeats an id.
FlipSet diff_runs(std::span<const TraceRecord> base, std::span<const TraceRecord> tir);
FlipSet diff_runs(const std::filesystem::path& base, const std::filesystem::path& tir);

enum class JudgeLabel { tool_related, other, unjudged };

struct AttributionReport {
    std::size_t gained = 0;
    std::size_t lost = 0;
    std::size_t unchanged = 0;
    std::size_t tool_related = 0;
    std::size_t other = 0;
    std::vector<std::string> unjudged_ids;
    // Shares of the judged inconsistent set (gained minus unjudged, plus lost).
    double tool_related_gain = 0.0;
    double other_gain = 0.0;
    double loss = 0.0;
    std::string judge_model;
};

Json to_json(const AttributionReport& r);
AttributionReport attribution_from_json(const Json& j);

/// Rubric sent to the judge with one rendered trace.
std::string judge_prompt(const TraceRecord& trace, std::string_view question);

/// Maps a judge reply to a label; anything other than TOOL or OTHER is unjudged.
JudgeLabel parse_judge_reply(std::string_view reply);

/// Asks the judge about every gained sample. A non-conforming reply is asked
/// again once; a second miss, or a client error, leaves the sample unjudged.
/// `questions` maps sample ids to question text and may be empty.
AttributionReport classify_flips(const FlipSet& flips, std::span<const TraceRecord> tir_traces, ChatClient& judge,
                                 const std::map<std::string, std::string>& questions = {},
                                 std::size_t parallelism = 1);

}  // namespace tirbench
