#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tirbench/records.hpp"

namespace tirbench {

/// One sample as seen by the cost-aware metrics: token cost and a performance
/// score in [0, 1] (0/1 for plain correctness).
struct ScoredSample {
    double cost = 0.0;
    double score = 0.0;
};

/// Accuracy measured under a fixed generation budget.
struct CostPerformancePoint {
    TokenCount budget = 0;
    double accuracy = 0.0;
    friend bool operator==(const CostPerformancePoint&, const CostPerformancePoint&) = default;
};

struct PacResult {
    /// Largest threshold with a positive PAC_tau; absent when none is feasible.
    std::optional<double> tau_star;
    double value = 0.0;
    /// PAC_tau for every configured threshold, in threshold order.
    std::vector<double> curve;
};

struct EfficiencyReport {
    double zeta_o = 0.0;
    // Means over correct records only.
    double reason_tokens = 0.0;
    double first_tokens = 0.0;
    double reflection_tokens = 0.0;
    double step_count = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
};

/// Best efficiency 1 - mean(cost)/c_max over all non-empty subsets whose mean
/// score reaches `tau`; 0 when no subset qualifies.
///
/// Exact: within a score level only the cheapest items are ever worth taking,
/// so the search runs over how many items of each level to take. Binary scores
/// give two levels and an O(K*M) scan over prefix sums.
///
/// Throws ArgumentError for tau outside (0, 1], a negative cost, a cost above
/// c_max, a score outside [0, 1], or more distinct score levels than the count
/// search can cover.
double pac_at_threshold(std::span<const ScoredSample> samples, double tau, double c_max);

/// Exhaustive subset enumeration with the same contract. Test oracle; refuses
/// more than 20 samples.
double brute_force_pac(std::span<const ScoredSample> samples, double tau, double c_max);

std::vector<double> pac_curve(std::span<const ScoredSample> samples, const MetricConfig& config);

/// Headline PAC: the value at the largest feasible threshold.
PacResult pac(std::span<const ScoredSample> samples, const MetricConfig& config);
PacResult pac_from_curve(std::span<const double> curve, const MetricConfig& config);

/// Mean trapezoid height of the PAC_tau curve, with PAC at tau_0 taken as 0.
double m_pac(std::span<const ScoredSample> samples, const MetricConfig& config);
double m_pac_from_curve(std::span<const double> curve);

/// Normalized trapezoid area under accuracy-vs-budget. A (0, 0) origin is
/// prepended when the first budget is positive.
double auc_pcc(std::span<const CostPerformancePoint> points, const MetricConfig& config);

/// Outcome efficiency and the Reason / First / Refl. decomposition. Incorrect
/// records count as fully wasted. Throws ValidationError for a correct record
/// without a first-correct position.
EfficiencyReport outcome_efficiency(std::span<const TraceRecord> records);

enum class CostBasis { all_tokens, non_tool_tokens };

std::vector<ScoredSample> scored_samples(std::span<const TraceRecord> records, CostBasis basis);

enum class Pooling { pooled, per_category_mean };

struct PacSummary {
    PacResult pac;
    double m_pac = 0.0;
};

/// `pooled` scores all samples together; `per_category_mean` averages each
/// curve point (and the headline) over per-group results.
PacSummary summarize_pac(const std::map<Category, std::vector<ScoredSample>>& groups,
                         const MetricConfig& config, Pooling pooling);

}  // namespace tirbench
