#include "tirbench/records.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <utility>

#include "tirbench/digest.hpp"
#include "tirbench/errors.hpp"
#include "tirbench/verify.hpp"

namespace tirbench {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Category, 9> kCategoryNames{{
    {Category::number_calculation, "number_calculation"},
    {Category::grade_school_math, "grade_school_math"},
    {Category::puzzle, "puzzle"},
    {Category::communication_code, "communication_code"},
    {Category::boolean_logic, "boolean_logic"},
    {Category::daily_logic, "daily_logic"},
    {Category::operations_research, "operations_research"},
    {Category::physics, "physics"},
    {Category::formal_language, "formal_language"},
}};

constexpr NameTable<AnswerKind, 5> kAnswerKindNames{{
    {AnswerKind::numeric, "numeric"},
    {AnswerKind::numeric_list, "numeric_list"},
    {AnswerKind::choice_set, "choice_set"},
    {AnswerKind::string, "string"},
    {AnswerKind::grid, "grid"},
}};

constexpr NameTable<TurnRole, 5> kTurnRoleNames{{
    {TurnRole::model_reasoning, "model_reasoning"},
    {TurnRole::model_code, "model_code"},
    {TurnRole::tool_result, "tool_result"},
    {TurnRole::model_answer, "model_answer"},
    {TurnRole::forcing_suffix, "forcing_suffix"},
}};

constexpr NameTable<Paradigm, 4> kParadigmNames{{
    {Paradigm::vanilla, "vanilla"},
    {Paradigm::pot, "pot"},
    {Paradigm::mt_tir, "mt_tir"},
    {Paradigm::tit, "tit"},
}};

constexpr NameTable<Termination, 4> kTerminationNames{{
    {Termination::answer, "answer"},
    {Termination::budget, "budget"},
    {Termination::turn_limit, "turn_limit"},
    {Termination::tool_error, "tool_error"},
}};

constexpr NameTable<TokenSource, 3> kTokenSourceNames{{
    {TokenSource::endpoint, "endpoint"},
    {TokenSource::fallback, "fallback"},
    {TokenSource::mixed, "mixed"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E v) {
    for (const auto& [e, name] : table) {
        if (e == v) return name;
    }
    return "?";
}

template <typename E, std::size_t N>
E value_of(const NameTable<E, N>& table, std::string_view s, std::string_view what) {
    for (const auto& [e, name] : table) {
        if (name == s) return e;
    }
    throw ArgumentError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

// Field accessors that turn nlohmann type errors into ValidationErrors naming the field.
const Json& field(const Json& j, const char* name) {
    if (!j.is_object()) throw ValidationError("record", "expected a JSON object");
    auto it = j.find(name);
    if (it == j.end()) throw ValidationError(name, "missing");
    return *it;
}

std::string get_string(const Json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_string()) throw ValidationError(name, "expected a string");
    return v.get<std::string>();
}

std::int64_t get_int(const Json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number_integer()) throw ValidationError(name, "expected an integer");
    return v.get<std::int64_t>();
}

double get_number(const Json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number()) throw ValidationError(name, "expected a number");
    return v.get<double>();
}

bool get_bool(const Json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_boolean()) throw ValidationError(name, "expected a boolean");
    return v.get<bool>();
}

template <typename F>
auto get_enum(const Json& j, const char* name, F parse) {
    const auto s = get_string(j, name);
    try {
        return parse(s);
    } catch (const ArgumentError& e) {
        throw ValidationError(name, e.what());
    }
}

std::vector<std::string> split_lines(const std::string& bytes, bool& unterminated_tail) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    unterminated_tail = false;
    while (start < bytes.size()) {
        auto nl = bytes.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(bytes.substr(start));
            unterminated_tail = true;
            break;
        }
        lines.push_back(bytes.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

template <typename T, typename F>
std::vector<T> parse_lines(const std::filesystem::path& path, const std::vector<std::string>& lines, F from_json) {
    std::vector<T> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        Json j;
        try {
            j = Json::parse(lines[i]);
        } catch (const Json::parse_error& e) {
            throw ParseError(path.string(), i + 1, e.what());
        }
        try {
            out.push_back(from_json(j));
        } catch (const ValidationError& e) {
            throw ValidationError(e, path.string(), i + 1);
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(Category v) { return name_of(kCategoryNames, v); }
std::string_view to_string(AnswerKind v) { return name_of(kAnswerKindNames, v); }
std::string_view to_string(TurnRole v) { return name_of(kTurnRoleNames, v); }
std::string_view to_string(Paradigm v) { return name_of(kParadigmNames, v); }
std::string_view to_string(Termination v) { return name_of(kTerminationNames, v); }
std::string_view to_string(TokenSource v) { return name_of(kTokenSourceNames, v); }

Category parse_category(std::string_view s) { return value_of(kCategoryNames, s, "category"); }
AnswerKind parse_answer_kind(std::string_view s) { return value_of(kAnswerKindNames, s, "answer kind"); }
TurnRole parse_turn_role(std::string_view s) { return value_of(kTurnRoleNames, s, "turn role"); }
Paradigm parse_paradigm(std::string_view s) { return value_of(kParadigmNames, s, "paradigm"); }
Termination parse_termination(std::string_view s) { return value_of(kTerminationNames, s, "termination"); }
TokenSource parse_token_source(std::string_view s) { return value_of(kTokenSourceNames, s, "token source"); }

void recount_tokens(TraceRecord& record) {
    TokenCount all = 0;
    TokenCount code = 0;
    for (const auto& t : record.turns) {
        all += t.token_count;
        if (t.role == TurnRole::model_code) code += t.token_count;
    }
    record.tokens_all = all;
    record.tokens_non_tool = all - code;
}

MetricConfig MetricConfig::defaults() {
    MetricConfig c;
    c.c_max = 32768;
    for (int j = 1; j <= 10; ++j) c.thresholds.push_back(j / 10.0);
    c.p_max = 1.0;
    c.budgets = {1024, 2048, 4096, 8192, 16384, 32768};
    return c;
}

void validate(const TraceRecord& r) {
    if (r.sample_id.empty()) throw ValidationError("sample_id", "empty");
    TokenCount sum = 0;
    for (std::size_t i = 0; i < r.turns.size(); ++i) {
        const auto& t = r.turns[i];
        if (t.token_count < 0) throw ValidationError("turns[" + std::to_string(i) + "].token_count", "negative");
        if ((t.role == TurnRole::tool_result || t.role == TurnRole::forcing_suffix) && t.token_count != 0) {
            throw ValidationError("turns[" + std::to_string(i) + "].token_count",
                                  "must be 0 for role " + std::string(to_string(t.role)));
        }
        sum += t.token_count;
    }
    if (r.tokens_all != sum) {
        throw ValidationError("tokens_all", "is " + std::to_string(r.tokens_all) + " but turns sum to " +
                                                std::to_string(sum));
    }
    if (r.tokens_non_tool < 0) throw ValidationError("tokens_non_tool", "negative");
    if (r.tokens_non_tool > r.tokens_all) throw ValidationError("tokens_non_tool", "exceeds tokens_all");
    if (r.first_correct_token_index) {
        if (!r.correct) throw ValidationError("first_correct_token_index", "present on an incorrect record");
        if (*r.first_correct_token_index < 0 || *r.first_correct_token_index > r.tokens_all) {
            throw ValidationError("first_correct_token_index", "outside [0, tokens_all]");
        }
    }
    if (r.step_count < 0) throw ValidationError("step_count", "negative");
    if (r.tool_call_count < 0) throw ValidationError("tool_call_count", "negative");
}

void validate(const MetricConfig& c) {
    if (c.c_max <= 0) throw ValidationError("c_max", "must be positive");
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
        const double t = c.thresholds[i];
        if (!(t > 0.0 && t <= 1.0)) throw ValidationError("thresholds", "values must lie in (0, 1]");
        if (i > 0 && !(t > c.thresholds[i - 1])) throw ValidationError("thresholds", "must be strictly ascending");
    }
    if (!(c.p_max > 0.0)) throw ValidationError("p_max", "must be positive");
    for (std::size_t i = 0; i < c.budgets.size(); ++i) {
        if (c.budgets[i] <= 0) throw ValidationError("budgets", "must be positive");
        if (i > 0 && c.budgets[i] <= c.budgets[i - 1]) throw ValidationError("budgets", "must be strictly ascending");
    }
}

Json to_json(const TaskSample& s) {
    Json j;
    j["id"] = s.id;
    j["category"] = to_string(s.category);
    j["instructions"] = s.instructions;
    j["question"] = s.question;
    j["gold_answer"] = s.gold_answer;
    j["answer_kind"] = to_string(s.answer_kind);
    return j;
}

Json to_json(const Turn& t) {
    Json j;
    j["role"] = to_string(t.role);
    j["content"] = t.content;
    j["token_count"] = t.token_count;
    return j;
}

Json to_json(const TraceRecord& r) {
    Json j;
    j["sample_id"] = r.sample_id;
    j["paradigm"] = to_string(r.paradigm);
    Json turns = Json::array();
    for (const auto& t : r.turns) turns.push_back(to_json(t));
    j["turns"] = std::move(turns);
    j["tokens_all"] = r.tokens_all;
    j["tokens_non_tool"] = r.tokens_non_tool;
    j["final_answer"] = r.final_answer ? Json(*r.final_answer) : Json(nullptr);
    j["correct"] = r.correct;
    j["first_correct_token_index"] =
        r.first_correct_token_index ? Json(*r.first_correct_token_index) : Json(nullptr);
    j["step_count"] = r.step_count;
    j["tool_call_count"] = r.tool_call_count;
    j["terminated_by"] = to_string(r.terminated_by);
    return j;
}

Json to_json(const MetricConfig& c) {
    Json j;
    j["c_max"] = c.c_max;
    j["thresholds"] = c.thresholds;
    j["p_max"] = c.p_max;
    j["budgets"] = c.budgets;
    return j;
}

Json to_json(const RunManifest& m) {
    Json j;
    j["run_id"] = m.run_id;
    j["model_id"] = m.model_id;
    j["paradigm"] = to_string(m.paradigm);
    j["sampling"] = Json{{"temperature", m.sampling.temperature},
                         {"top_p", m.sampling.top_p},
                         {"max_tokens", m.sampling.max_tokens}};
    j["dataset_digest"] = m.dataset_digest;
    j["dataset_path"] = m.dataset_path;
    j["created_at"] = m.created_at;
    j["token_source"] = to_string(m.token_source);
    j["config"] = to_json(m.config);
    return j;
}

TaskSample task_from_json(const Json& j) {
    TaskSample s;
    s.id = get_string(j, "id");
    if (s.id.empty()) throw ValidationError("id", "empty");
    s.category = get_enum(j, "category", parse_category);
    s.instructions = get_string(j, "instructions");
    s.question = get_string(j, "question");
    s.gold_answer = get_string(j, "gold_answer");
    s.answer_kind = get_enum(j, "answer_kind", parse_answer_kind);
    if (!parse_answer(gold_payload(s.gold_answer), s.answer_kind)) {
        throw ValidationError("gold_answer", "does not parse as " + std::string(to_string(s.answer_kind)));
    }
    return s;
}

Turn turn_from_json(const Json& j) {
    Turn t;
    t.role = get_enum(j, "role", parse_turn_role);
    t.content = get_string(j, "content");
    t.token_count = get_int(j, "token_count");
    return t;
}

TraceRecord trace_from_json(const Json& j) {
    TraceRecord r;
    r.sample_id = get_string(j, "sample_id");
    r.paradigm = get_enum(j, "paradigm", parse_paradigm);
    const auto& turns = field(j, "turns");
    if (!turns.is_array()) throw ValidationError("turns", "expected an array");
    for (const auto& t : turns) r.turns.push_back(turn_from_json(t));
    r.tokens_all = get_int(j, "tokens_all");
    r.tokens_non_tool = get_int(j, "tokens_non_tool");
    if (const auto& fa = field(j, "final_answer"); !fa.is_null()) r.final_answer = get_string(j, "final_answer");
    r.correct = get_bool(j, "correct");
    if (const auto& fc = field(j, "first_correct_token_index"); !fc.is_null()) {
        r.first_correct_token_index = get_int(j, "first_correct_token_index");
    }
    r.step_count = get_int(j, "step_count");
    r.tool_call_count = get_int(j, "tool_call_count");
    r.terminated_by = get_enum(j, "terminated_by", parse_termination);
    validate(r);
    return r;
}

MetricConfig metric_config_from_json(const Json& j) {
    MetricConfig c;
    c.c_max = get_int(j, "c_max");
    c.thresholds.clear();
    const auto& th = field(j, "thresholds");
    if (!th.is_array()) throw ValidationError("thresholds", "expected an array");
    for (const auto& t : th) {
        if (!t.is_number()) throw ValidationError("thresholds", "expected numbers");
        c.thresholds.push_back(t.get<double>());
    }
    c.p_max = get_number(j, "p_max");
    const auto& b = field(j, "budgets");
    if (!b.is_array()) throw ValidationError("budgets", "expected an array");
    for (const auto& v : b) {
        if (!v.is_number_integer()) throw ValidationError("budgets", "expected integers");
        c.budgets.push_back(v.get<TokenCount>());
    }
    validate(c);
    return c;
}

RunManifest manifest_from_json(const Json& j) {
    RunManifest m;
    m.run_id = get_string(j, "run_id");
    m.model_id = get_string(j, "model_id");
    m.paradigm = get_enum(j, "paradigm", parse_paradigm);
    const auto& s = field(j, "sampling");
    m.sampling.temperature = get_number(s, "temperature");
    m.sampling.top_p = get_number(s, "top_p");
    m.sampling.max_tokens = get_int(s, "max_tokens");
    m.dataset_digest = get_string(j, "dataset_digest");
    m.dataset_path = get_string(j, "dataset_path");
    m.created_at = get_string(j, "created_at");
    m.token_source = get_enum(j, "token_source", parse_token_source);
    m.config = metric_config_from_json(field(j, "config"));
    return m;
}

std::string dump_line(const Json& j) {
    return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

void save_traces(std::span<const TraceRecord> records, const std::filesystem::path& path) {
    std::string bytes;
    for (const auto& r : records) {
        bytes += dump_line(to_json(r));
        bytes += '\n';
    }
    write_file(path, bytes);
}

std::vector<TraceRecord> load_traces(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    bool unterminated = false;
    const auto lines = split_lines(bytes, unterminated);
    return parse_lines<TraceRecord>(path, lines, trace_from_json);
}

void append_trace(const TraceRecord& record, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot open for append: " + path.string());
    out << dump_line(to_json(record)) << '\n';
    out.flush();
    if (!out) throw IoError("append failed: " + path.string());
}

std::vector<TraceRecord> recover_traces(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    const auto bytes = read_file(path);
    bool unterminated = false;
    auto lines = split_lines(bytes, unterminated);
    if (unterminated) {
        lines.pop_back();
        std::filesystem::resize_file(path, bytes.rfind('\n') == std::string::npos ? 0 : bytes.rfind('\n') + 1);
    }
    return parse_lines<TraceRecord>(path, lines, trace_from_json);
}

void save_tasks(std::span<const TaskSample> tasks, const std::filesystem::path& path) {
    std::string bytes;
    for (const auto& t : tasks) {
        bytes += dump_line(to_json(t));
        bytes += '\n';
    }
    write_file(path, bytes);
}

std::vector<TaskSample> load_tasks(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    bool unterminated = false;
    const auto lines = split_lines(bytes, unterminated);
    auto tasks = parse_lines<TaskSample>(path, lines, task_from_json);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!seen.insert(tasks[i].id).second) {
            throw ParseError(path.string(), i + 1, "duplicate id '" + tasks[i].id + "'");
        }
    }
    return tasks;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& trace_path) {
    auto p = trace_path;
    p += ".manifest.json";
    return p;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    write_file(path, to_json(manifest).dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return manifest_from_json(Json::parse(bytes));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string(), 1, e.what());
    }
}

void check_manifest_dataset(const RunManifest& manifest, const std::filesystem::path& task_path) {
    const auto digest = file_digest(task_path);
    if (digest != manifest.dataset_digest) {
        throw ValidationError("dataset_digest", "manifest has " + manifest.dataset_digest + " but " +
                                                    task_path.string() + " hashes to " + digest);
    }
}

}  // namespace tirbench
