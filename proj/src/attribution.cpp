#include "tirbench/attribution.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "tirbench/errors.hpp"
#include "tirbench/parallel.hpp"

namespace tirbench {

namespace {

std::unordered_map<std::string, const TraceRecord*> index_by_id(std::span<const TraceRecord> run, const char* which) {
    std::unordered_map<std::string, const TraceRecord*> out;
    for (const auto& r : run) {
        if (!out.emplace(r.sample_id, &r).second) {
            throw ValidationError("sample_id", fmt::format("{} run repeats sample {}", which, r.sample_id));
        }
    }
    return out;
}

std::string id_list(const std::vector<std::string>& ids) {
    constexpr std::size_t kShown = 20;
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < kShown; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > kShown) s += fmt::format(" and {} more", ids.size() - kShown);
    return s;
}

constexpr std::string_view kRubric =
    "You are auditing a model that solved a reasoning problem with access to a Python code interpreter. "
    "Below are the problem and the model's full transcript, including the code it ran and the tool output it saw. "
    "Decide whether the model reached its correct final answer because of feedback from the tool, for example a "
    "computed value, a verification or a corrected error. Reply with exactly one word: TOOL if the correct answer "
    "depends on tool feedback, OTHER if the model would have reached it through its own reasoning.";

}  // namespace

FlipSet diff_runs(std::span<const TraceRecord> base, std::span<const TraceRecord> tir) {
    const auto b = index_by_id(base, "base");
    const auto t = index_by_id(tir, "tool");
    std::vector<std::string> only_base, only_tir;
    for (const auto& [id, _] : b) {
        if (!t.contains(id)) only_base.push_back(id);
    }
    for (const auto& [id, _] : t) {
        if (!b.contains(id)) only_tir.push_back(id);
    }
    if (!only_base.empty() || !only_tir.empty()) {
        std::sort(only_base.begin(), only_base.end());
        std::sort(only_tir.begin(), only_tir.end());
        std::string msg = "runs cover different samples";
        if (!only_base.empty()) msg += "; missing from tool run: " + id_list(only_base);
        if (!only_tir.empty()) msg += "; missing from base run: " + id_list(only_tir);
        throw ValidationError("sample_id", msg);
    }
    FlipSet f;
    for (const auto& [id, rec] : b) {
        const bool base_ok = rec->correct;
        const bool tir_ok = t.at(id)->correct;
        if (tir_ok && !base_ok) {
            f.gained.push_back(id);
        } else if (base_ok && !tir_ok) {
            f.lost.push_back(id);
        } else {
            f.unchanged.push_back(id);
        }
    }
    for (auto* v : {&f.gained, &f.lost, &f.unchanged}) std::sort(v->begin(), v->end());
    return f;
}

FlipSet diff_runs(const std::filesystem::path& base, const std::filesystem::path& tir) {
    const auto b = load_traces(base);
    const auto t = load_traces(tir);
    return diff_runs(b, t);
}

Json to_json(const AttributionReport& r) {
    Json j;
    j["judge_model"] = r.judge_model;
    j["gained"] = r.gained;
    j["lost"] = r.lost;
    j["unchanged"] = r.unchanged;
    j["tool_related"] = r.tool_related;
    j["other"] = r.other;
    j["unjudged"] = r.unjudged_ids;
    j["tool_related_gain"] = r.tool_related_gain;
    j["other_gain"] = r.other_gain;
    j["loss"] = r.loss;
    return j;
}

AttributionReport attribution_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("attribution", "expected an object");
    AttributionReport r;
    try {
        r.judge_model = j.value("judge_model", std::string{});
        r.gained = j.at("gained").get<std::size_t>();
        r.lost = j.at("lost").get<std::size_t>();
        r.unchanged = j.value("unchanged", std::size_t{0});
        r.tool_related = j.value("tool_related", std::size_t{0});
        r.other = j.value("other", std::size_t{0});
        r.unjudged_ids = j.value("unjudged", std::vector<std::string>{});
        r.tool_related_gain = j.at("tool_related_gain").get<double>();
        r.other_gain = j.at("other_gain").get<double>();
        r.loss = j.at("loss").get<double>();
    } catch (const Json::exception& e) {
        throw ValidationError("attribution", e.what());
    }
    return r;
}

std::string judge_prompt(const TraceRecord& trace, std::string_view question) {
    std::string s(kRubric);
    s += "\n\nProblem:\n";
    s += question.empty() ? std::string_view("(not provided)") : question;
    s += "\n\nTranscript:\n";
    for (const auto& t : trace.turns) {
        s += fmt::format("[{}]\n{}\n", to_string(t.role), t.content);
    }
    s += fmt::format("\nFinal answer: {}\n\nReply TOOL or OTHER.", trace.final_answer.value_or("(none)"));
    return s;
}

JudgeLabel parse_judge_reply(std::string_view reply) {
    const auto b = reply.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return JudgeLabel::unjudged;
    const auto e = reply.find_last_not_of(" \t\r\n.");
    if (e == std::string_view::npos || e < b) return JudgeLabel::unjudged;
    std::string word(reply.substr(b, e - b + 1));
    for (auto& c : word) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (word == "TOOL") return JudgeLabel::tool_related;
    if (word == "OTHER") return JudgeLabel::other;
    return JudgeLabel::unjudged;
}

AttributionReport classify_flips(const FlipSet& flips, std::span<const TraceRecord> tir_traces, ChatClient& judge,
                                 const std::map<std::string, std::string>& questions, std::size_t parallelism) {
    std::unordered_map<std::string, const TraceRecord*> by_id;
    for (const auto& r : tir_traces) by_id.emplace(r.sample_id, &r);
    for (const auto& id : flips.gained) {
        if (!by_id.contains(id)) throw ValidationError("sample_id", "no tool-run trace for gained sample " + id);
    }

    std::vector<JudgeLabel> labels(flips.gained.size(), JudgeLabel::unjudged);
    parallel_for(flips.gained.size(), parallelism, [&](std::size_t i) {
        const auto& id = flips.gained[i];
        const auto q = questions.find(id);
        ChatRequest req;
        req.messages = {ChatMessage{"user", judge_prompt(*by_id.at(id), q == questions.end() ? "" : q->second), {}, {}}};
        req.max_tokens = 8;
        for (int attempt = 0; attempt < 2; ++attempt) {
            try {
                labels[i] = parse_judge_reply(judge.chat(req).content);
            } catch (const std::exception&) {
                labels[i] = JudgeLabel::unjudged;
                break;
            }
            if (labels[i] != JudgeLabel::unjudged) break;
        }
    });

    AttributionReport r;
    r.judge_model = judge.model_id();
    r.gained = flips.gained.size();
    r.lost = flips.lost.size();
    r.unchanged = flips.unchanged.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == JudgeLabel::tool_related) ++r.tool_related;
        if (labels[i] == JudgeLabel::other) ++r.other;
        if (labels[i] == JudgeLabel::unjudged) r.unjudged_ids.push_back(flips.gained[i]);
    }
    const auto judged = static_cast<double>(r.tool_related + r.other + r.lost);
    if (judged > 0) {
        r.tool_related_gain = static_cast<double>(r.tool_related) / judged;
        r.other_gain = static_cast<double>(r.other) / judged;
        r.loss = static_cast<double>(r.lost) / judged;
    }
    return r;
}

}  // namespace tirbench
