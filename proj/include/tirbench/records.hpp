#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tirbench {

using Json = nlohmann::ordered_json;

/// Generated-token counts. Signed so that differences never wrap.
using TokenCount = std::int64_t;

enum class Category {
    number_calculation,
    grade_school_math,
    puzzle,
    communication_code,
    boolean_logic,
    daily_logic,
    operations_research,
    physics,
    formal_language,
};

enum class AnswerKind { numeric, numeric_list, choice_set, string, grid };

enum class TurnRole { model_reasoning, model_code, tool_result, model_answer, forcing_suffix };

enum class Paradigm { vanilla, pot, mt_tir, tit };

enum class Termination { answer, budget, turn_limit, tool_error };

std::string_view to_string(Category v);
std::string_view to_string(AnswerKind v);
std::string_view to_string(TurnRole v);
std::string_view to_string(Paradigm v);
std::string_view to_string(Termination v);

// Each throws ArgumentError on an unknown name.
Category parse_category(std::string_view s);
AnswerKind parse_answer_kind(std::string_view s);
TurnRole parse_turn_role(std::string_view s);
Paradigm parse_paradigm(std::string_view s);
Termination parse_termination(std::string_view s);

/// True for roles whose tokens the model generated.
constexpr bool is_generated(TurnRole r) {
    return r == TurnRole::model_reasoning || r == TurnRole::model_code || r == TurnRole::model_answer;
}

struct TaskSample {
    std::string id;
    Category category = Category::number_calculation;
    std::string instructions;
    std::string question;
    std::string gold_answer;
    AnswerKind answer_kind = AnswerKind::string;

    friend bool operator==(const TaskSample&, const TaskSample&) = default;
};

struct Turn {
    TurnRole role = TurnRole::model_reasoning;
    std::string content;
    TokenCount token_count = 0;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct TraceRecord {
    std::string sample_id;
    Paradigm paradigm = Paradigm::vanilla;
    std::vector<Turn> turns;
    TokenCount tokens_all = 0;
    TokenCount tokens_non_tool = 0;
    std::optional<std::string> final_answer;
    bool correct = false;
    std::optional<TokenCount> first_correct_token_index;
    std::int64_t step_count = 0;
    std::int64_t tool_call_count = 0;
    Termination terminated_by = Termination::answer;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// Recomputes tokens_all and tokens_non_tool from the turns. Code turns are the
/// only generated tokens excluded from the non-tool count.
void recount_tokens(TraceRecord& record);

struct MetricConfig {
    TokenCount c_max = 32768;
    std::vector<double> thresholds;
    double p_max = 1.0;
    std::vector<TokenCount> budgets;

    /// C_max 32,768, thresholds 0.1 .. 1.0 in steps of 0.1, P_max 1, budgets 1K .. 32K.
    static MetricConfig defaults();

    friend bool operator==(const MetricConfig&, const MetricConfig&) = default;
};

struct SamplingSettings {
    double temperature = 0.0;
    double top_p = 1.0;
    TokenCount max_tokens = 32768;

    friend bool operator==(const SamplingSettings&, const SamplingSettings&) = default;
};

/// Where per-turn token counts came from.
enum class TokenSource { endpoint, fallback, mixed };
std::string_view to_string(TokenSource v);
TokenSource parse_token_source(std::string_view s);

struct RunManifest {
    std::string run_id;
    std::string model_id;
    Paradigm paradigm = Paradigm::vanilla;
    SamplingSettings sampling;
    std::string dataset_digest;
    std::string dataset_path;
    std::string created_at;
    TokenSource token_source = TokenSource::fallback;
    MetricConfig config;

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

// Invariant checks; each throws ValidationError naming the field.
void validate(const TraceRecord& record);
void validate(const MetricConfig& config);

Json to_json(const TaskSample& s);
Json to_json(const Turn& t);
Json to_json(const TraceRecord& r);
Json to_json(const MetricConfig& c);
Json to_json(const RunManifest& m);

// These parse and validate; type errors are reported as ValidationError.
TaskSample task_from_json(const Json& j);
Turn turn_from_json(const Json& j);
TraceRecord trace_from_json(const Json& j);
MetricConfig metric_config_from_json(const Json& j);
RunManifest manifest_from_json(const Json& j);

/// Compact single-line serialization used by every line-delimited file.
std::string dump_line(const Json& j);

void save_traces(std::span<const TraceRecord> records, const std::filesystem::path& path);
std::vector<TraceRecord> load_traces(const std::filesystem::path& path);

/// Appends one record and flushes. Caller serializes access per file.
void append_trace(const TraceRecord& record, const std::filesystem::path& path);

/// Drops an unterminated final line (a write cut short by a crash) and returns
/// the surviving records. Complete lines are still validated strictly.
std::vector<TraceRecord> recover_traces(const std::filesystem::path& path);

void save_tasks(std::span<const TaskSample> tasks, const std::filesystem::path& path);

/// Rejects duplicate ids and gold answers that do not parse under their kind.
std::vector<TaskSample> load_tasks(const std::filesystem::path& path);

/// `<trace path>.manifest.json`
std::filesystem::path manifest_path_for(const std::filesystem::path& trace_path);
void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Throws ValidationError("dataset_digest", ...) when the task file changed since the run.
void check_manifest_dataset(const RunManifest& manifest, const std::filesystem::path& task_path);

}  // namespace tirbench
