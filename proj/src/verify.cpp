#include "tirbench/verify.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>

#include "tirbench/tokenizer.hpp"

namespace tirbench {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    const std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string_view strip_list_brackets(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && ((s.front() == '[' && s.back() == ']') || (s.front() == '(' && s.back() == ')'))) {
        s = trim(s.substr(1, s.size() - 2));
    }
    return s;
}

std::optional<std::vector<double>> parse_number_list(std::string_view s) {
    s = strip_list_brackets(s);
    if (s.empty()) return std::nullopt;
    const bool has_comma = s.find(',') != std::string_view::npos;
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t stop = has_comma ? s.find(',', start) : start;
        if (!has_comma) {
            while (stop < s.size() && !is_space(s[stop])) ++stop;
        }
        if (stop == std::string_view::npos) stop = s.size();
        const auto item = trim(s.substr(start, stop - start));
        if (!item.empty() || has_comma) {
            auto v = parse_number(item);
            if (!v) return std::nullopt;
            values.push_back(*v);
        }
        if (stop >= s.size()) break;
        start = stop + 1;
        if (!has_comma) {
            while (start < s.size() && is_space(s[start])) ++start;
        }
    }
    if (values.empty()) return std::nullopt;
    return values;
}

std::optional<std::set<char>> parse_choices(std::string_view s) {
    std::set<char> letters;
    for (char c : s) {
        if (c == '[' || c == ']' || c == ',' || is_space(c)) continue;
        if (!std::isalpha(static_cast<unsigned char>(c))) return std::nullopt;
        letters.insert(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    if (letters.empty()) return std::nullopt;
    return letters;
}

GridValue parse_grid(std::string_view s) {
    GridValue g;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto stop = s.find('\n', start);
        if (stop == std::string_view::npos) stop = s.size();
        auto row = collapse_whitespace(s.substr(start, stop - start));
        if (!row.empty()) g.rows.push_back(std::move(row));
        start = stop + 1;
    }
    return g;
}

bool values_match(const AnswerValue& got, const AnswerValue& gold) {
    if (got.index() != gold.index()) return false;
    if (const auto* g = std::get_if<double>(&gold)) return numeric_equal(std::get<double>(got), *g);
    if (const auto* g = std::get_if<std::vector<double>>(&gold)) {
        const auto& a = std::get<std::vector<double>>(got);
        if (a.size() != g->size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!numeric_equal(a[i], (*g)[i])) return false;
        }
        return true;
    }
    return got == gold;
}

}  // namespace

std::vector<ExtractedAnswer> extract_all(std::string_view text) {
    std::vector<ExtractedAnswer> out;
    std::size_t pos = 0;
    while (true) {
        auto open = text.find("[[", pos);
        if (open == std::string_view::npos) break;
        const auto close = text.find("]]", open + 2);
        if (close == std::string_view::npos) break;
        // Move to the innermost opener that still ends before the closer.
        for (auto next = text.find("[[", open + 1); next != std::string_view::npos && next + 2 <= close;
             next = text.find("[[", open + 1)) {
            open = next;
        }
        const auto payload = text.substr(open + 2, close - open - 2);
        if (!trim(payload).empty()) {
            out.push_back(ExtractedAnswer{std::string(trim(payload)), std::nullopt, {open + 2, close}});
        }
        pos = close + 2;
    }
    return out;
}

std::optional<ExtractedAnswer> extract_answer(std::string_view text) {
    auto all = extract_all(text);
    if (all.empty()) return std::nullopt;
    return std::move(all.back());
}

std::optional<AnswerValue> parse_answer(std::string_view payload, AnswerKind kind) {
    switch (kind) {
        case AnswerKind::numeric: {
            auto v = parse_number(strip_list_brackets(payload));
            if (!v) return std::nullopt;
            return AnswerValue{*v};
        }
        case AnswerKind::numeric_list: {
            auto v = parse_number_list(payload);
            if (!v) return std::nullopt;
            return AnswerValue{std::move(*v)};
        }
        case AnswerKind::choice_set: {
            auto v = parse_choices(payload);
            if (!v) return std::nullopt;
            return AnswerValue{std::move(*v)};
        }
        case AnswerKind::string: {
            auto s = collapse_whitespace(payload);
            if (s.empty()) return std::nullopt;
            std::transform(s.begin(), s.end(), s.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            return AnswerValue{TextValue{std::move(s)}};
        }
        case AnswerKind::grid: {
            auto g = parse_grid(payload);
            if (g.rows.empty()) return std::nullopt;
            return AnswerValue{std::move(g)};
        }
    }
    return std::nullopt;
}

std::string_view gold_payload(std::string_view gold) {
    const auto t = trim(gold);
    if (t.size() >= 4 && t.substr(0, 2) == "[[" && t.substr(t.size() - 2) == "]]") {
        return trim(t.substr(2, t.size() - 4));
    }
    return t;
}

bool numeric_equal(double a, double b) {
    const double scale = std::max(std::fabs(a), std::fabs(b));
    return std::fabs(a - b) <= std::max(1e-6 * scale, 1e-9);
}

bool check_answer(std::string_view got_payload, std::string_view gold, AnswerKind kind) {
    const auto gold_value = parse_answer(gold_payload(gold), kind);
    if (!gold_value) return false;
    const auto got_value = parse_answer(gold_payload(got_payload), kind);
    if (!got_value) return false;
    return values_match(*got_value, *gold_value);
}

bool check_answer(const ExtractedAnswer& got, std::string_view gold, AnswerKind kind) {
    if (got.kind_value) {
        const auto gold_value = parse_answer(gold_payload(gold), kind);
        return gold_value && values_match(*got.kind_value, *gold_value);
    }
    return check_answer(std::string_view(got.raw), gold, kind);
}

std::optional<CorrectPosition> first_correct_index(const TraceRecord& trace, std::string_view gold,
                                                   AnswerKind kind) {
    TokenCount tokens_before = 0;
    std::int64_t steps_before = 0;
    for (const auto& turn : trace.turns) {
        if (turn.role == TurnRole::tool_result) {
            for (const auto& cand : extract_all(turn.content)) {
                if (check_answer(cand, gold, kind)) return CorrectPosition{tokens_before, steps_before};
            }
            continue;
        }
        if (!is_generated(turn.role)) continue;

        const bool counts_steps = turn.role != TurnRole::model_code;
        const TokenCount full = Tokenizer::count(turn.content);
        // Code is not a statement of the answer; its output shows up in the tool result.
        const auto candidates = counts_steps ? extract_all(turn.content) : std::vector<ExtractedAnswer>{};
        for (const auto& cand : candidates) {
            if (!check_answer(cand, gold, kind)) continue;
            const auto prefix = std::string_view(turn.content).substr(0, cand.char_span.second + 2);
            TokenCount within = Tokenizer::count(prefix);
            if (full != turn.token_count && full > 0) {
                within = static_cast<TokenCount>(
                    std::llround(static_cast<double>(within) * static_cast<double>(turn.token_count) /
                                 static_cast<double>(full)));
            }
            within = std::clamp<TokenCount>(within, 0, turn.token_count);
            const auto steps = steps_before + (counts_steps ? segment_steps(prefix) : 0);
            return CorrectPosition{tokens_before + within, steps};
        }
        tokens_before += turn.token_count;
        if (counts_steps) steps_before += segment_steps(turn.content);
    }
    if (trace.final_answer && check_answer(std::string_view(*trace.final_answer), gold, kind)) {
        return CorrectPosition{trace.tokens_all, trace.step_count};
    }
    return std::nullopt;
}

std::int64_t segment_steps(std::string_view text) {
    std::int64_t steps = 0;
    bool has_content = false;
    auto close_segment = [&] {
        if (has_content) ++steps;
        has_content = false;
    };
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        const char c = text[i];
        if (c == '.' || c == '!' || c == '?') {
            if (i + 1 == n || is_space(text[i + 1])) close_segment();
            continue;
        }
        if (c == '\n') {
            std::size_t j = i + 1;
            while (j < n && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
            if (j < n && text[j] == '\n') close_segment();
            continue;
        }
        if (std::isalnum(static_cast<unsigned char>(c))) has_content = true;
    }
    close_segment();
    return steps;
}

}  // namespace tirbench
