#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tirbench/client.hpp"
#include "tirbench/metrics.hpp"
#include "tirbench/prompts.hpp"
#include "tirbench/records.hpp"
#include "tirbench/sandbox.hpp"

namespace tirbench {

struct ParadigmConfig {
    Paradigm paradigm = Paradigm::vanilla;
    /// Model calls per sample (MT-TIR and TIT).
    int max_turns = 32;
    int max_tool_calls = 10;
    /// Cap on generated tokens per sample.
    TokenCount budget = 32768;
    std::string forcing_suffix = "Final Answer: [[";
    /// Tokens granted after the forcing suffix; not charged to the budget.
    TokenCount answer_allowance = 64;
    /// Append the forcing suffix when the budget runs out without an answer.
    bool force_answer = false;
    TemplateId prompt_template = TemplateId::vanilla;
    /// PoT: use the verbal answer when the program yields none.
    bool pot_verbal_fallback = true;
    double temperature = 0.0;
    double top_p = 1.0;
    SandboxLimits limits;
    /// When false, tool results record an execution time of 0 so that
    /// offline runs are byte-reproducible.
    bool record_timing = true;

    /// Defaults for a paradigm, with its matching template.
    static ParadigmConfig for_paradigm(Paradigm p);
};

/// Throws ValidationError when the budget exceeds c_max or a count is negative.
void validate(const ParadigmConfig& cfg, const MetricConfig& metrics);

/// Counts responses by where their token usage came from.
struct UsageTally {
    std::atomic<std::int64_t> endpoint{0};
    std::atomic<std::int64_t> fallback{0};

    void add(const Usage& u) { (u.reported ? endpoint : fallback).fetch_add(1); }
    TokenSource source() const;
};

// One sample through one paradigm. Client errors propagate: a transport
// failure is not a model failure and never becomes a trace.
TraceRecord run_vanilla(const TaskSample& sample, ChatClient& client, const ParadigmConfig& cfg,
                        UsageTally* tally = nullptr);
TraceRecord run_pot(const TaskSample& sample, ChatClient& client, Executor& executor, const ParadigmConfig& cfg,
                    UsageTally* tally = nullptr);
TraceRecord run_mt_tir(const TaskSample& sample, ChatClient& client, Executor& executor, const ParadigmConfig& cfg,
                       UsageTally* tally = nullptr);
TraceRecord run_tit(const TaskSample& sample, ChatClient& client, Executor& executor, const ParadigmConfig& cfg,
                    UsageTally* tally = nullptr);

/// Dispatches on cfg.paradigm. `executor` may be null only for vanilla.
TraceRecord run_sample(const TaskSample& sample, ChatClient& client, Executor* executor, const ParadigmConfig& cfg,
                       UsageTally* tally = nullptr);

/// Fills tokens, correctness, first-correct index and step count from the turns
/// and final answer.
void finalize_trace(TraceRecord& trace, const TaskSample& sample);

/// Splits text into alternating prose and fenced-code bodies. Fence lines
/// (``` or ''') stay with the prose; an unclosed final block is still code.
struct TextSegment {
    bool code = false;
    bool closed = true;
    std::string text;
};
std::vector<TextSegment> split_fenced(std::string_view text);

struct BudgetRun {
    TokenCount budget = 0;
    std::vector<TraceRecord> traces;
};

/// Accuracy at each budget with budget forcing on. Budgets must be strictly
/// ascending. `on_budget`, when set, receives every budget's traces.
std::vector<CostPerformancePoint> budget_forced_eval(std::span<const TaskSample> samples, ChatClient& client,
                                                     Executor* executor, const ParadigmConfig& cfg,
                                                     std::span<const TokenCount> budgets, std::size_t parallelism = 1,
                                                     const std::function<void(const BudgetRun&)>& on_budget = {});

struct DatasetRunOptions {
    std::filesystem::path trace_path;
    std::size_t parallelism = 1;
    /// Manifest fields the harness cannot know itself.
    RunManifest manifest;
    /// Called after each finished sample with (done, total).
    std::function<void(std::size_t, std::size_t)> progress;
};

struct SampleFailure {
    std::string sample_id;
    std::string error;
};

struct DatasetRunSummary {
    std::size_t total = 0;
    std::size_t skipped = 0;
    std::size_t completed = 0;
    std::vector<SampleFailure> failures;
};

/// `<trace path>.failures.jsonl`
std::filesystem::path failures_path_for(const std::filesystem::path& trace_path);

/// Evaluates every sample not already in the trace file, at most `parallelism`
/// at a time. Finished records are appended as they complete; at the end the
/// file is rewritten in sample order and the manifest saved beside it. Failed
/// samples go to the failures file and are retried by the next run.
DatasetRunSummary run_dataset(std::span<const TaskSample> samples, ChatClient& client, Executor* executor,
                              const ParadigmConfig& cfg, const DatasetRunOptions& options);

}  // namespace tirbench
