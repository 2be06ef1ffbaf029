#include "tirbench/harness.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "tirbench/errors.hpp"
#include "tirbench/parallel.hpp"
#include "tirbench/tokenizer.hpp"
#include "tirbench/verify.hpp"

namespace tirbench {

namespace {

constexpr std::string_view kTitStop = "```\n";

bool is_fence_line(std::string_view line) {
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string_view::npos) return false;
    line.remove_prefix(start);
    return line.starts_with("```") || line.starts_with("'''");
}

std::string_view fence_marker(std::string_view line) {
    line.remove_prefix(line.find_first_not_of(" \t"));
    return line.substr(0, 3);
}

// Closing fences carry nothing after the marker but whitespace.
bool is_closing_fence(std::string_view line, std::string_view marker) {
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string_view::npos) return false;
    line.remove_prefix(start);
    if (!line.starts_with(marker)) return false;
    line.remove_prefix(3);
    return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

// Splits `total` in proportion to `weights`, largest remainder first, ties
// to the earlier index. All-zero weights give everything to the last slot.
std::vector<TokenCount> apportion(TokenCount total, const std::vector<TokenCount>& weights) {
    std::vector<TokenCount> out(weights.size(), 0);
    if (weights.empty() || total <= 0) return out;
    const TokenCount sum = std::accumulate(weights.begin(), weights.end(), TokenCount{0});
    if (sum <= 0) {
        out.back() = total;
        return out;
    }
    std::vector<std::pair<TokenCount, std::size_t>> rema;
    TokenCount given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto num = static_cast<__int128>(total) * weights[i];
        out[i] = static_cast<TokenCount>(num / sum);
        rema.emplace_back(static_cast<TokenCount>(num % sum), i);
        given += out[i];
    }
    std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; given < total; ++k, ++given) ++out[rema[k % rema.size()].second];
    return out;
}

struct Piece {
    TurnRole role;
    std::string content;
};

// Turns for one response. Code pieces keep their own token counts; prose
// pieces share whatever is left of the response's completion tokens.
std::vector<Turn> attribute_tokens(std::vector<Piece> pieces, TokenCount completion) {
    std::vector<TokenCount> code_w, prose_w;
    std::vector<std::size_t> code_i, prose_i;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto n = Tokenizer::count(pieces[i].content);
        if (pieces[i].role == TurnRole::model_code) {
            code_w.push_back(n);
            code_i.push_back(i);
        } else {
            prose_w.push_back(n);
            prose_i.push_back(i);
        }
    }
    completion = std::max<TokenCount>(completion, 0);
    const TokenCount code_total = std::accumulate(code_w.begin(), code_w.end(), TokenCount{0});
    std::vector<TokenCount> counts(pieces.size(), 0);
    if (code_total >= completion) {
        const auto share = apportion(completion, code_w);
        for (std::size_t k = 0; k < code_i.size(); ++k) counts[code_i[k]] = share[k];
    } else {
        for (std::size_t k = 0; k < code_i.size(); ++k) counts[code_i[k]] = code_w[k];
        const TokenCount rest = completion - code_total;
        if (prose_i.empty()) {
            pieces.insert(pieces.begin(), Piece{TurnRole::model_reasoning, {}});
            counts.insert(counts.begin(), rest);
        } else {
            const auto share = apportion(rest, prose_w);
            for (std::size_t k = 0; k < prose_i.size(); ++k) counts[prose_i[k]] = share[k];
        }
    }
    std::vector<Turn> turns;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (pieces[i].content.empty() && counts[i] == 0 && pieces[i].role != TurnRole::model_code) continue;
        turns.push_back(Turn{pieces[i].role, std::move(pieces[i].content), counts[i]});
    }
    return turns;
}

std::vector<Piece> pieces_of(std::string_view text, bool split_code) {
    std::vector<Piece> out;
    if (!split_code) {
        out.push_back(Piece{TurnRole::model_reasoning, std::string(text)});
        return out;
    }
    for (auto& seg : split_fenced(text)) {
        out.push_back(Piece{seg.code ? TurnRole::model_code : TurnRole::model_reasoning, std::move(seg.text)});
    }
    return out;
}

void append_turns(TraceRecord& trace, std::vector<Turn> turns) {
    for (auto& t : turns) trace.turns.push_back(std::move(t));
}

TokenCount generated_so_far(const TraceRecord& trace) {
    TokenCount n = 0;
    for (const auto& t : trace.turns) {
        if (is_generated(t.role)) n += t.token_count;
    }
    return n;
}

// Last `[[...]]` across the prose the model wrote.
std::optional<std::string> last_prose_answer(const TraceRecord& trace) {
    std::string prose;
    for (const auto& t : trace.turns) {
        if (t.role == TurnRole::model_reasoning || t.role == TurnRole::model_answer) {
            prose += t.content;
            prose += '\n';
        }
    }
    if (auto a = extract_answer(prose)) return a->raw;
    return std::nullopt;
}

ChatRequest base_request(const ParadigmConfig& cfg, std::vector<ChatMessage> messages, TokenCount max_tokens) {
    ChatRequest req;
    req.messages = std::move(messages);
    req.max_tokens = max_tokens;
    req.temperature = cfg.temperature;
    req.top_p = cfg.top_p;
    return req;
}

ChatResponse call(ChatClient& client, const ChatRequest& req, UsageTally* tally) {
    auto resp = client.chat(req);
    if (tally) tally->add(resp.usage);
    return resp;
}

std::vector<ChatMessage> opening_messages(const TaskSample& sample, const ParadigmConfig& cfg) {
    return {ChatMessage{"user", render_prompt(cfg.prompt_template, sample.instructions, sample.question), {}, {}}};
}

// Appends the forcing suffix after `prefill` and lets the model finish the
// answer within the allowance. Sets the final answer when one comes back.
void force_answer(TraceRecord& trace, std::vector<ChatMessage> messages, const std::string& prefill,
                  ChatClient& client, const ParadigmConfig& cfg, UsageTally* tally) {
    messages.push_back(ChatMessage{"assistant", prefill + cfg.forcing_suffix, {}, {}});
    const auto resp = call(client, base_request(cfg, std::move(messages), cfg.answer_allowance), tally);
    const auto used = std::clamp<TokenCount>(resp.usage.completion_tokens, 0, cfg.answer_allowance);
    trace.turns.push_back(Turn{TurnRole::forcing_suffix, cfg.forcing_suffix, 0});
    trace.turns.push_back(Turn{TurnRole::model_answer, resp.content, used});

    if (auto a = extract_answer(cfg.forcing_suffix + resp.content)) {
        trace.final_answer = a->raw;
        return;
    }
    // An unterminated forced answer: take its first line.
    std::string_view rest = resp.content;
    rest = rest.substr(0, rest.find('\n'));
    const auto b = rest.find_first_not_of(" \t");
    if (b == std::string_view::npos) return;
    const auto e = rest.find_last_not_of(" \t\r");
    trace.final_answer = std::string(rest.substr(b, e - b + 1));
}

bool wants_forcing(const TraceRecord& trace, const ParadigmConfig& cfg) {
    return cfg.force_answer && trace.terminated_by == Termination::budget && !trace.final_answer;
}

ToolResult bad_call(std::string message) {
    ToolResult r;
    r.status = ToolStatus::Error;
    r.message = std::move(message);
    r.run_result.return_code = -1;
    return r;
}

ToolResult as_recorded(ToolResult r, const ParadigmConfig& cfg) {
    if (!cfg.record_timing) r.run_result.execution_time = 0.0;
    return r;
}

std::string output_block(const ToolResult& r) {
    std::string body = r.status == ToolStatus::Success ? r.run_result.stdout_text : describe_failure(r);
    if (!body.empty() && body.back() != '\n') body += '\n';
    return "```output\n" + body + "```\n";
}

TraceRecord start_trace(const TaskSample& sample, Paradigm p) {
    TraceRecord t;
    t.sample_id = sample.id;
    t.paradigm = p;
    return t;
}

void require_paradigm(const ParadigmConfig& cfg, Paradigm p) {
    if (cfg.paradigm != p) {
        throw ArgumentError(fmt::format("config is for paradigm {}, not {}", to_string(cfg.paradigm), to_string(p)));
    }
}

}  // namespace

ParadigmConfig ParadigmConfig::for_paradigm(Paradigm p) {
    ParadigmConfig c;
    c.paradigm = p;
    c.prompt_template = default_template(p);
    return c;
}

void validate(const ParadigmConfig& cfg, const MetricConfig& metrics) {
    if (cfg.budget < 0) throw ValidationError("budget", "must be non-negative");
    if (cfg.budget > metrics.c_max) {
        throw ValidationError("budget", fmt::format("{} exceeds c_max {}", cfg.budget, metrics.c_max));
    }
    if (cfg.max_turns < 1) throw ValidationError("max_turns", "must be at least 1");
    if (cfg.max_tool_calls < 0) throw ValidationError("max_tool_calls", "must be non-negative");
    if (cfg.answer_allowance < 1) throw ValidationError("answer_allowance", "must be at least 1");
    if (cfg.forcing_suffix.empty()) throw ValidationError("forcing_suffix", "must not be empty");
}

TokenSource UsageTally::source() const {
    const auto e = endpoint.load();
    const auto f = fallback.load();
    if (e > 0 && f > 0) return TokenSource::mixed;
    return e > 0 ? TokenSource::endpoint : TokenSource::fallback;
}

std::vector<TextSegment> split_fenced(std::string_view text) {
    std::vector<TextSegment> out;
    auto emit = [&](bool code, bool closed, std::string_view part) {
        if (part.empty() && !code) return;
        if (!out.empty() && out.back().code == code && !code) {
            out.back().text.append(part);
            return;
        }
        out.push_back(TextSegment{code, closed, std::string(part)});
    };
    std::size_t pos = 0;
    std::size_t prose_start = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        const std::size_t next = eol == std::string_view::npos ? text.size() : eol + 1;
        const auto line = text.substr(pos, next - pos);
        if (!is_fence_line(line)) {
            pos = next;
            continue;
        }
        // Opening fence: prose runs through the fence line.
        const auto marker = fence_marker(line);
        emit(false, true, text.substr(prose_start, next - prose_start));
        std::size_t body_start = next;
        std::size_t scan = next;
        bool closed = false;
        while (scan < text.size()) {
            auto e2 = text.find('\n', scan);
            const std::size_t n2 = e2 == std::string_view::npos ? text.size() : e2 + 1;
            if (is_closing_fence(text.substr(scan, n2 - scan), marker)) {
                emit(true, true, text.substr(body_start, scan - body_start));
                prose_start = scan;
                pos = n2;
                closed = true;
                break;
            }
            scan = n2;
        }
        if (!closed) {
            emit(true, false, text.substr(body_start));
            return out;
        }
        // The closing fence line belongs to the following prose.
        emit(false, true, text.substr(prose_start, pos - prose_start));
        prose_start = pos;
    }
    emit(false, true, text.substr(prose_start));
    return out;
}

void finalize_trace(TraceRecord& trace, const TaskSample& sample) {
    recount_tokens(trace);
    trace.step_count = 0;
    for (const auto& t : trace.turns) {
        if (t.role == TurnRole::model_reasoning || t.role == TurnRole::model_answer) {
            trace.step_count += segment_steps(t.content);
        }
    }
    trace.correct = trace.final_answer && check_answer(std::string_view(*trace.final_answer), sample.gold_answer,
                                                       sample.answer_kind);
    trace.first_correct_token_index.reset();
    if (trace.correct) {
        if (auto pos = first_correct_index(trace, sample.gold_answer, sample.answer_kind)) {
            trace.first_correct_token_index = pos->token_index;
        }
    }
}

TraceRecord run_vanilla(const TaskSample& sample, ChatClient& client, const ParadigmConfig& cfg, UsageTally* tally) {
    require_paradigm(cfg, Paradigm::vanilla);
    auto trace = start_trace(sample, Paradigm::vanilla);
    const auto messages = opening_messages(sample, cfg);
    std::string content;
    if (cfg.budget <= 0) {
        trace.terminated_by = Termination::budget;
    } else {
        const auto resp = call(client, base_request(cfg, messages, cfg.budget), tally);
        content = resp.content;
        append_turns(trace, attribute_tokens(pieces_of(content, false), resp.usage.completion_tokens));
        trace.terminated_by = resp.finish_reason == FinishReason::length ? Termination::budget : Termination::answer;
        trace.final_answer = last_prose_answer(trace);
    }
    if (wants_forcing(trace, cfg)) force_answer(trace, messages, content, client, cfg, tally);
    finalize_trace(trace, sample);
    return trace;
}

TraceRecord run_pot(const TaskSample& sample, ChatClient& client, Executor& executor, const ParadigmConfig& cfg,
                    UsageTally* tally) {
    require_paradigm(cfg, Paradigm::pot);
    auto trace = start_trace(sample, Paradigm::pot);
    const auto messages = opening_messages(sample, cfg);
    std::string content;
    if (cfg.budget <= 0) {
        trace.terminated_by = Termination::budget;
    } else {
        const auto resp = call(client, base_request(cfg, messages, cfg.budget), tally);
        content = resp.content;
        const bool truncated = resp.finish_reason == FinishReason::length;
        const auto segments = split_fenced(content);
        std::optional<std::string> program;
        for (const auto& s : segments) {
            if (s.code && (s.closed || !truncated)) program = s.text;
        }
        append_turns(trace, attribute_tokens(pieces_of(content, true), resp.usage.completion_tokens));

        bool tool_failed = false;
        if (program) {
            const auto result = as_recorded(executor.execute_with_entrypoint(*program, cfg.limits), cfg);
            trace.tool_call_count = 1;
            trace.turns.push_back(Turn{TurnRole::tool_result, dump_line(to_json(result)), 0});
            tool_failed = result.status == ToolStatus::Error;
            if (!tool_failed) {
                if (auto a = extract_answer(result.run_result.stdout_text)) trace.final_answer = a->raw;
            }
        }
        if (!trace.final_answer && (!program || cfg.pot_verbal_fallback)) trace.final_answer = last_prose_answer(trace);

        if (truncated) {
            trace.terminated_by = Termination::budget;
        } else if (tool_failed && !trace.final_answer) {
            trace.terminated_by = Termination::tool_error;
        } else {
            trace.terminated_by = Termination::answer;
        }
    }
    if (wants_forcing(trace, cfg)) force_answer(trace, messages, content, client, cfg, tally);
    finalize_trace(trace, sample);
    return trace;
}

TraceRecord run_mt_tir(const TaskSample& sample, ChatClient& client, Executor& executor, const ParadigmConfig& cfg,
                       UsageTally* tally) {
    require_paradigm(cfg, Paradigm::mt_tir);
    auto trace = start_trace(sample, Paradigm::mt_tir);
    auto messages = opening_messages(sample, cfg);
    const std::vector<ToolDeclaration> tools{run_python_tool()};
    std::string partial;  // content of a response cut off by the budget
    int model_calls = 0;
    bool done = false;

    while (!done) {
        const TokenCount remaining = cfg.budget - generated_so_far(trace);
        if (remaining <= 0) {
            trace.terminated_by = Termination::budget;
            break;
        }
        if (model_calls >= cfg.max_turns) {
            trace.terminated_by = Termination::turn_limit;
            break;
        }
        auto req = base_request(cfg, messages, remaining);
        req.tools = tools;
        const auto resp = call(client, req, tally);
        ++model_calls;

        auto pieces = pieces_of(resp.content, true);
        std::vector<std::string> codes;
        for (const auto& c : resp.tool_calls) {
            auto code = code_argument(c);
            codes.push_back(code.value_or(std::string{}));
            pieces.push_back(Piece{TurnRole::model_code, c.arguments});
        }
        auto turns = attribute_tokens(std::move(pieces), resp.usage.completion_tokens);
        // Show the code itself, not its JSON wrapper, in code turns for calls.
        const std::size_t call_turn = turns.size() - resp.tool_calls.size();
        for (std::size_t i = 0; i < resp.tool_calls.size(); ++i) turns[call_turn + i].content = codes[i];

        const std::size_t text_turns = call_turn;
        for (std::size_t i = 0; i < text_turns; ++i) trace.turns.push_back(std::move(turns[i]));

        if (resp.finish_reason == FinishReason::length) {
            partial = resp.content;
            trace.terminated_by = Termination::budget;
            break;
        }
        if (resp.tool_calls.empty()) {
            trace.terminated_by = Termination::answer;
            break;
        }

        messages.push_back(ChatMessage{"assistant", resp.content, resp.tool_calls, {}});
        for (std::size_t i = 0; i < resp.tool_calls.size(); ++i) {
            // Calls past the cap are recorded, since they cost tokens, but not run.
            trace.turns.push_back(std::move(turns[call_turn + i]));
            if (trace.tool_call_count >= cfg.max_tool_calls) {
                trace.terminated_by = Termination::turn_limit;
                done = true;
                continue;
            }
            const auto& c = resp.tool_calls[i];
            ToolResult result;
            if (c.name != "run_python") {
                result = bad_call(fmt::format("unknown tool '{}'", c.name));
            } else if (!code_argument(c)) {
                result = bad_call("arguments must be a JSON object with a string field 'code'");
            } else {
                result = as_recorded(executor.execute(codes[i], cfg.limits), cfg);
            }
            ++trace.tool_call_count;
            const auto text = dump_line(to_json(result));
            trace.turns.push_back(Turn{TurnRole::tool_result, text, 0});
            messages.push_back(ChatMessage{"tool", text, {}, c.id});
        }
    }
    trace.final_answer = last_prose_answer(trace);
    if (wants_forcing(trace, cfg)) force_answer(trace, messages, partial, client, cfg, tally);
    finalize_trace(trace, sample);
    return trace;
}

TraceRecord run_tit(const TaskSample& sample, ChatClient& client, Executor& executor, const ParadigmConfig& cfg,
                    UsageTally* tally) {
    require_paradigm(cfg, Paradigm::tit);
    auto trace = start_trace(sample, Paradigm::tit);
    const auto opening = opening_messages(sample, cfg);
    std::string context;  // everything after the prompt, injected output included
    int model_calls = 0;

    auto messages_for = [&](const std::string& prefill) {
        auto m = opening;
        if (!prefill.empty()) m.push_back(ChatMessage{"assistant", prefill, {}, {}});
        return m;
    };

    while (true) {
        const TokenCount remaining = cfg.budget - generated_so_far(trace);
        if (remaining <= 0) {
            trace.terminated_by = Termination::budget;
            break;
        }
        if (model_calls >= cfg.max_turns) {
            trace.terminated_by = Termination::turn_limit;
            break;
        }
        auto req = base_request(cfg, messages_for(context), remaining);
        req.stop = {std::string(kTitStop)};
        const auto resp = call(client, req, tally);
        ++model_calls;
        context += resp.content;
        append_turns(trace, attribute_tokens(pieces_of(resp.content, true), resp.usage.completion_tokens));

        if (resp.finish_reason == FinishReason::length) {
            trace.terminated_by = Termination::budget;
            break;
        }
        const auto segments = split_fenced(resp.content);
        std::optional<std::string> program;
        if (!segments.empty() && segments.back().code && !segments.back().closed) {
            // Stopped on the closing fence, which the stop string swallowed.
            program = segments.back().text;
            context += kTitStop;
        } else {
            // The endpoint ignored the stop string: run the last block unless
            // the prose after it already answers.
            for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
                if (it->code) {
                    program = it->text;
                    break;
                }
                if (extract_answer(it->text)) break;
            }
            if (program && !context.ends_with('\n')) context += '\n';
        }
        if (!program) {
            trace.terminated_by = Termination::answer;
            break;
        }
        if (trace.tool_call_count >= cfg.max_tool_calls) {
            trace.terminated_by = Termination::turn_limit;
            break;
        }
        const auto result = as_recorded(executor.execute(*program, cfg.limits), cfg);
        ++trace.tool_call_count;
        const auto block = output_block(result);
        trace.turns.push_back(Turn{TurnRole::tool_result, block, 0});
        context += block;
    }
    trace.final_answer = last_prose_answer(trace);
    if (wants_forcing(trace, cfg)) force_answer(trace, opening, context, client, cfg, tally);
    finalize_trace(trace, sample);
    return trace;
}

TraceRecord run_sample(const TaskSample& sample, ChatClient& client, Executor* executor, const ParadigmConfig& cfg,
                       UsageTally* tally) {
    if (cfg.paradigm == Paradigm::vanilla) return run_vanilla(sample, client, cfg, tally);
    if (!executor) throw ArgumentError(fmt::format("paradigm {} needs a code executor", to_string(cfg.paradigm)));
    switch (cfg.paradigm) {
        case Paradigm::pot: return run_pot(sample, client, *executor, cfg, tally);
        case Paradigm::mt_tir: return run_mt_tir(sample, client, *executor, cfg, tally);
        case Paradigm::tit: return run_tit(sample, client, *executor, cfg, tally);
        case Paradigm::vanilla: break;
    }
    return run_vanilla(sample, client, cfg, tally);
}

std::vector<CostPerformancePoint> budget_forced_eval(std::span<const TaskSample> samples, ChatClient& client,
                                                     Executor* executor, const ParadigmConfig& cfg,
                                                     std::span<const TokenCount> budgets, std::size_t parallelism,
                                                     const std::function<void(const BudgetRun&)>& on_budget) {
    if (samples.empty()) throw ArgumentError("budget curve needs at least one sample");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i] < 0) throw ArgumentError("budgets must be non-negative");
        if (i > 0 && budgets[i] <= budgets[i - 1]) throw ArgumentError("budgets must be strictly ascending");
    }
    std::vector<CostPerformancePoint> points;
    for (const auto b : budgets) {
        auto run_cfg = cfg;
        run_cfg.budget = b;
        run_cfg.force_answer = true;
        BudgetRun run{b, std::vector<TraceRecord>(samples.size())};
        parallel_for(samples.size(), parallelism,
                     [&](std::size_t i) { run.traces[i] = run_sample(samples[i], client, executor, run_cfg); });
        const auto correct = std::count_if(run.traces.begin(), run.traces.end(),
                                           [](const TraceRecord& t) { return t.correct; });
        points.push_back(CostPerformancePoint{b, static_cast<double>(correct) / static_cast<double>(samples.size())});
        if (on_budget) on_budget(run);
    }
    return points;
}

std::filesystem::path failures_path_for(const std::filesystem::path& trace_path) {
    auto p = trace_path;
    p += ".failures.jsonl";
    return p;
}

DatasetRunSummary run_dataset(std::span<const TaskSample> samples, ChatClient& client, Executor* executor,
                              const ParadigmConfig& cfg, const DatasetRunOptions& options) {
    if (options.parallelism < 1) throw ArgumentError("parallelism must be at least 1");
    const auto& path = options.trace_path;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    std::unordered_map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!order.emplace(samples[i].id, i).second) {
            throw ValidationError("id", "duplicate sample id " + samples[i].id);
        }
    }

    RunManifest manifest = options.manifest;
    manifest.paradigm = cfg.paradigm;
    const auto manifest_path = manifest_path_for(path);
    std::optional<TokenSource> earlier_source;
    if (std::filesystem::exists(manifest_path)) {
        const auto old = load_manifest(manifest_path);
        if (!manifest.dataset_digest.empty() && old.dataset_digest != manifest.dataset_digest) {
            throw ValidationError("dataset_digest", "task file changed since this trace file was started");
        }
        if (old.paradigm != manifest.paradigm) {
            throw ValidationError("paradigm", fmt::format("trace file was started with paradigm {}",
                                                          to_string(old.paradigm)));
        }
        manifest.run_id = old.run_id;
        manifest.created_at = old.created_at;
        earlier_source = old.token_source;
    }

    std::set<std::string> done;
    if (std::filesystem::exists(path)) {
        for (const auto& r : recover_traces(path)) {
            if (!order.contains(r.sample_id)) {
                throw ValidationError("sample_id", "trace file holds unknown sample " + r.sample_id);
            }
            done.insert(r.sample_id);
        }
    }
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!done.contains(samples[i].id)) todo.push_back(i);
    }

    DatasetRunSummary summary;
    summary.total = samples.size();
    summary.skipped = samples.size() - todo.size();
    const auto failures_path = failures_path_for(path);
    std::filesystem::remove(failures_path);
    if (!earlier_source) save_manifest(manifest, manifest_path);

    UsageTally tally;
    std::mutex mu;
    parallel_for(todo.size(), options.parallelism, [&](std::size_t k) {
        const auto& sample = samples[todo[k]];
        try {
            auto trace = run_sample(sample, client, executor, cfg, &tally);
            std::lock_guard lock(mu);
            append_trace(trace, path);
            ++summary.completed;
            if (options.progress) options.progress(summary.skipped + summary.completed, summary.total);
        } catch (const std::exception& e) {
            std::lock_guard lock(mu);
            summary.failures.push_back(SampleFailure{sample.id, e.what()});
            std::ofstream out(failures_path, std::ios::app | std::ios::binary);
            out << dump_line(Json{{"sample_id", sample.id}, {"error", e.what()}}) << '\n';
        }
    });

    // Rewrite in sample order so the file does not depend on scheduling.
    auto records = std::filesystem::exists(path) ? recover_traces(path) : std::vector<TraceRecord>{};
    std::stable_sort(records.begin(), records.end(), [&](const TraceRecord& a, const TraceRecord& b) {
        return order.at(a.sample_id) < order.at(b.sample_id);
    });
    auto tmp = path;
    tmp += ".tmp";
    save_traces(records, tmp);
    std::filesystem::rename(tmp, path);

    std::sort(summary.failures.begin(), summary.failures.end(),
              [&](const SampleFailure& a, const SampleFailure& b) { return order.at(a.sample_id) < order.at(b.sample_id); });

    const bool fresh_usage = tally.endpoint.load() + tally.fallback.load() > 0;
    if (!fresh_usage && earlier_source) {
        manifest.token_source = *earlier_source;
    } else if (earlier_source && summary.skipped > 0 && *earlier_source != tally.source()) {
        manifest.token_source = TokenSource::mixed;
    } else {
        manifest.token_source = tally.source();
    }
    save_manifest(manifest, manifest_path);
    return summary;
}

}  // namespace tirbench
