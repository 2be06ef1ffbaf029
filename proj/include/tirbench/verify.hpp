#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tirbench/records.hpp"

namespace tirbench {

/// Normalized form of a grid answer: one entry per non-empty line, inner
/// whitespace collapsed.
struct GridValue {
    std::vector<std::string> rows;
    friend bool operator==(const GridValue&, const GridValue&) = default;
};

/// Normalized form of a free-text answer: lower case, whitespace collapsed.
struct TextValue {
    std::string text;
    friend bool operator==(const TextValue&, const TextValue&) = default;
};

using AnswerValue = std::variant<double, std::vector<double>, std::set<char>, TextValue, GridValue>;

struct ExtractedAnswer {
    std::string raw;
    std::optional<AnswerValue> kind_value;
    std::pair<std::size_t, std::size_t> char_span{0, 0};
};

/// All well-formed, non-empty `[[...]]` payloads in order of appearance. When
/// openers nest, the innermost one closest to the closer wins.
std::vector<ExtractedAnswer> extract_all(std::string_view text);

/// Payload of the last well-formed `[[...]]` in `text`.
std::optional<ExtractedAnswer> extract_answer(std::string_view text);

/// Parses a bare payload (no surrounding `[[ ]]`) under `kind`.
std::optional<AnswerValue> parse_answer(std::string_view payload, AnswerKind kind);

/// Gold answers may be stored with or without the `[[ ]]` wrapper.
std::string_view gold_payload(std::string_view gold);

/// Relative tolerance 1e-6 with an absolute floor of 1e-9.
bool numeric_equal(double a, double b);

/// Unparsable `got` counts as wrong. Either side may keep its `[[ ]]` wrapper.
bool check_answer(const ExtractedAnswer& got, std::string_view gold, AnswerKind kind);
bool check_answer(std::string_view got_payload, std::string_view gold, AnswerKind kind);

struct CorrectPosition {
    TokenCount token_index = 0;
    std::int64_t step_index = 0;
    friend bool operator==(const CorrectPosition&, const CorrectPosition&) = default;
};

/// Generated-token position just past the first accepted answer candidate.
/// Candidates are scanned turn by turn: in-text `[[...]]` of reasoning and answer turns,
/// answers surfaced by tool results, and finally the recorded final answer.
std::optional<CorrectPosition> first_correct_index(const TraceRecord& trace, std::string_view gold,
                                                   AnswerKind kind);

/// Number of reasoning steps: segments split at sentence terminators and blank lines.
std::int64_t segment_steps(std::string_view text);

}  // namespace tirbench
