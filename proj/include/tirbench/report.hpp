#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tirbench/attribution.hpp"
#include "tirbench/metrics.hpp"
#include "tirbench/records.hpp"

namespace tirbench {

struct BasisScore {
    double mean_tokens = 0.0;
    PacResult pac;
    double m_pac = 0.0;
};

struct CategoryScore {
    Category category = Category::number_calculation;
    std::size_t samples = 0;
    std::size_t correct = 0;
};

/// Scores of one trace file.
struct RunScore {
    std::string label;
    std::string trace_file;  // file name only
    std::string trace_digest;
    std::string model_id;
    std::string paradigm;
    std::size_t samples = 0;
    std::size_t correct = 0;
    std::vector<CategoryScore> categories;  // empty when categories are unknown
    BasisScore all_tokens;
    BasisScore non_tool_tokens;
    EfficiencyReport efficiency;
    double mean_tool_calls = 0.0;
};

struct ScoreBundle {
    MetricConfig metrics = MetricConfig::defaults();
    Pooling pooling = Pooling::pooled;
    std::vector<RunScore> runs;
};

/// `categories` maps sample ids to categories and may be empty, in which case
/// per-category results are left out (and per-category pooling is refused).
RunScore score_run(std::span<const TraceRecord> records, const std::map<std::string, Category>& categories,
                   const MetricConfig& metrics, Pooling pooling);

Json to_json(const ScoreBundle& b);
ScoreBundle score_bundle_from_json(const Json& j);

/// Budget curve produced by the `curve` command.
struct CurveBundle {
    std::string label;
    std::string model_id;
    std::string paradigm;
    std::string dataset_digest;
    std::string forcing_suffix;
    TokenCount answer_allowance = 0;
    MetricConfig metrics = MetricConfig::defaults();
    std::vector<CostPerformancePoint> points;
    double auc_pcc = 0.0;
};

Json to_json(const CurveBundle& c);
CurveBundle curve_bundle_from_json(const Json& j);

struct AttributionBundle {
    std::string base_file;
    std::string base_digest;
    std::string tir_file;
    std::string tir_digest;
    AttributionReport report;
};

Json to_json(const AttributionBundle& a);
AttributionBundle attribution_bundle_from_json(const Json& j);

template <typename T>
struct Input {
    std::string file;    // name shown in the report
    std::string digest;  // of the file's bytes
    T value;
};

struct ReportInputs {
    std::vector<Input<ScoreBundle>> scores;
    std::vector<Input<CurveBundle>> curves;
    std::optional<Input<AttributionBundle>> attribution;
};

/// Markdown with inline SVG plots. Runs after the first get signed deltas
/// against the first run. Output depends only on the inputs.
std::string render_report(const ReportInputs& inputs);

// Number formatting used by the report.
std::string percent(double fraction, int decimals);
std::string signed_delta(double value, int decimals);
std::string thousands(double value);

}  // namespace tirbench
