#include "tirbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tirbench/errors.hpp"

namespace tirbench {

namespace {

// Mean-score comparisons tolerate accumulated rounding in non-binary sums.
constexpr double kScoreSlack = 1e-12;

// Upper bound on count vectors explored for non-binary scores.
constexpr double kMaxCountVectors = 5e7;

void check_inputs(std::span<const ScoredSample> samples, double tau, double c_max) {
    if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("threshold must lie in (0, 1], got " + std::to_string(tau));
    if (!(c_max > 0.0)) throw ArgumentError("c_max must be positive");
    for (const auto& s : samples) {
        if (!(s.cost >= 0.0)) throw ArgumentError("sample cost must be non-negative");
        if (s.cost > c_max) {
            throw ArgumentError("sample cost " + std::to_string(s.cost) + " exceeds c_max " + std::to_string(c_max));
        }
        if (!(s.score >= 0.0 && s.score <= 1.0)) throw ArgumentError("sample score must lie in [0, 1]");
    }
}

struct ScoreLevel {
    double score = 0.0;
    std::vector<double> prefix;  // prefix[k] = cost of the k cheapest items
};

std::vector<ScoreLevel> levels_of(std::span<const ScoredSample> samples) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Descending score, then ascending cost; stable so ties keep sample order.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (samples[a].score != samples[b].score) return samples[a].score > samples[b].score;
        return samples[a].cost < samples[b].cost;
    });
    std::vector<ScoreLevel> levels;
    for (auto idx : order) {
        const auto& s = samples[idx];
        if (levels.empty() || levels.back().score != s.score) levels.push_back(ScoreLevel{s.score, {0.0}});
        auto& p = levels.back().prefix;
        p.push_back(p.back() + s.cost);
    }
    return levels;
}

double efficiency(double total_cost, double count, double c_max) {
    return 1.0 - total_cost / (count * c_max);
}

double pac_two_levels(const ScoreLevel& hi, const ScoreLevel* lo, double tau, double c_max) {
    const std::size_t k_max = hi.prefix.size() - 1;
    const std::size_t m_max = lo ? lo->prefix.size() - 1 : 0;
    double best = 0.0;
    for (std::size_t k = 0; k <= k_max; ++k) {
        for (std::size_t m = 0; m <= m_max; ++m) {
            const std::size_t n = k + m;
            if (n == 0) continue;
            const double score_sum = hi.score * static_cast<double>(k) + (lo ? lo->score * static_cast<double>(m) : 0.0);
            if (score_sum / static_cast<double>(n) < tau - kScoreSlack) break;  // adding more low items only lowers the mean
            const double cost = hi.prefix[k] + (lo ? lo->prefix[m] : 0.0);
            best = std::max(best, efficiency(cost, static_cast<double>(n), c_max));
        }
    }
    return best;
}

void search_levels(const std::vector<ScoreLevel>& levels, std::size_t level, std::size_t count, double score_sum,
                   double cost_sum, double tau, double c_max, double& best) {
    if (level == levels.size()) {
        if (count == 0) return;
        if (score_sum / static_cast<double>(count) < tau - kScoreSlack) return;
        best = std::max(best, efficiency(cost_sum, static_cast<double>(count), c_max));
        return;
    }
    const auto& lv = levels[level];
    for (std::size_t k = 0; k < lv.prefix.size(); ++k) {
        search_levels(levels, level + 1, count + k, score_sum + lv.score * static_cast<double>(k),
                      cost_sum + lv.prefix[k], tau, c_max, best);
    }
}

}  // namespace

double pac_at_threshold(std::span<const ScoredSample> samples, double tau, double c_max) {
    check_inputs(samples, tau, c_max);
    if (samples.empty()) return 0.0;
    const auto levels = levels_of(samples);
    if (levels.size() <= 2) {
        return pac_two_levels(levels[0], levels.size() == 2 ? &levels[1] : nullptr, tau, c_max);
    }
    double vectors = 1.0;
    for (const auto& lv : levels) vectors *= static_cast<double>(lv.prefix.size());
    if (vectors > kMaxCountVectors) {
        throw ArgumentError("too many distinct score levels (" + std::to_string(levels.size()) +
                            ") for exact PAC evaluation");
    }
    double best = 0.0;
    search_levels(levels, 0, 0, 0.0, 0.0, tau, c_max, best);
    return best;
}

double brute_force_pac(std::span<const ScoredSample> samples, double tau, double c_max) {
    if (samples.size() > 20) throw ArgumentError("brute_force_pac refuses more than 20 samples");
    check_inputs(samples, tau, c_max);
    const std::size_t n = samples.size();
    double best = 0.0;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        double cost = 0.0;
        double score = 0.0;
        int size = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                cost += samples[i].cost;
                score += samples[i].score;
                ++size;
            }
        }
        if (score / size < tau - kScoreSlack) continue;
        best = std::max(best, 1.0 - cost / size / c_max);
    }
    return best;
}

std::vector<double> pac_curve(std::span<const ScoredSample> samples, const MetricConfig& config) {
    std::vector<double> curve;
    curve.reserve(config.thresholds.size());
    for (double tau : config.thresholds) {
        curve.push_back(pac_at_threshold(samples, tau, static_cast<double>(config.c_max)));
    }
    return curve;
}

PacResult pac_from_curve(std::span<const double> curve, const MetricConfig& config) {
    if (curve.size() != config.thresholds.size()) throw ArgumentError("curve and thresholds differ in length");
    PacResult r;
    r.curve.assign(curve.begin(), curve.end());
    for (std::size_t j = curve.size(); j-- > 0;) {
        if (curve[j] > 0.0) {
            r.tau_star = config.thresholds[j];
            r.value = curve[j];
            break;
        }
    }
    return r;
}

PacResult pac(std::span<const ScoredSample> samples, const MetricConfig& config) {
    validate(config);
    const auto curve = pac_curve(samples, config);
    return pac_from_curve(curve, config);
}

double m_pac_from_curve(std::span<const double> curve) {
    if (curve.empty()) throw ArgumentError("m-PAC needs at least one threshold");
    double sum = 0.0;
    double prev = 0.0;
    for (double p : curve) {
        sum += (p + prev) / 2.0;
        prev = p;
    }
    return sum / static_cast<double>(curve.size());
}

double m_pac(std::span<const ScoredSample> samples, const MetricConfig& config) {
    validate(config);
    return m_pac_from_curve(pac_curve(samples, config));
}

double auc_pcc(std::span<const CostPerformancePoint> points, const MetricConfig& config) {
    // The prepended origin counts toward the two points a trapezoid needs.
    if (points.empty() || (points.size() < 2 && points.front().budget == 0)) {
        throw ArgumentError("AUC-PCC needs at least two cost/performance points");
    }
    if (!(config.p_max > 0.0)) throw ArgumentError("p_max must be positive");
    if (config.c_max <= 0) throw ArgumentError("c_max must be positive");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].budget < 0) throw ArgumentError("budgets must be non-negative");
        if (i > 0 && points[i].budget <= points[i - 1].budget) {
            throw ArgumentError("budgets must be strictly ascending");
        }
    }
    if (points.back().budget > config.c_max) throw ArgumentError("largest budget exceeds c_max");

    const double c_max = static_cast<double>(config.c_max);
    double prev_c = 0.0;
    double prev_p = 0.0;
    std::size_t start = 0;
    if (points.front().budget == 0) {
        prev_p = points.front().accuracy / config.p_max;
        start = 1;
    }
    double area = 0.0;
    for (std::size_t i = start; i < points.size(); ++i) {
        const double c = static_cast<double>(points[i].budget) / c_max;
        const double p = points[i].accuracy / config.p_max;
        area += (p + prev_p) / 2.0 * (c - prev_c);
        prev_c = c;
        prev_p = p;
    }
    return area;
}

EfficiencyReport outcome_efficiency(std::span<const TraceRecord> records) {
    EfficiencyReport rep;
    rep.total = records.size();
    if (records.empty()) return rep;
    double ratio_sum = 0.0;
    double reason = 0.0, first = 0.0, steps = 0.0;
    for (const auto& r : records) {
        if (!r.correct) continue;
        if (!r.first_correct_token_index) {
            throw ValidationError("first_correct_token_index", "missing on correct record " + r.sample_id);
        }
        const auto t_first = static_cast<double>(*r.first_correct_token_index);
        const auto t_all = static_cast<double>(r.tokens_all);
        ratio_sum += r.tokens_all > 0 ? t_first / t_all : 1.0;
        reason += t_all;
        first += t_first;
        steps += static_cast<double>(r.step_count);
        ++rep.correct;
    }
    rep.zeta_o = ratio_sum / static_cast<double>(records.size());
    if (rep.correct > 0) {
        const auto n = static_cast<double>(rep.correct);
        rep.reason_tokens = reason / n;
        rep.first_tokens = first / n;
        rep.reflection_tokens = (reason - first) / n;
        rep.step_count = steps / n;
    }
    return rep;
}

std::vector<ScoredSample> scored_samples(std::span<const TraceRecord> records, CostBasis basis) {
    std::vector<ScoredSample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const auto cost = basis == CostBasis::all_tokens ? r.tokens_all : r.tokens_non_tool;
        out.push_back(ScoredSample{static_cast<double>(cost), r.correct ? 1.0 : 0.0});
    }
    return out;
}

PacSummary summarize_pac(const std::map<Category, std::vector<ScoredSample>>& groups, const MetricConfig& config,
                         Pooling pooling) {
    validate(config);
    PacSummary out;
    if (pooling == Pooling::pooled) {
        std::vector<ScoredSample> all;
        for (const auto& [cat, samples] : groups) all.insert(all.end(), samples.begin(), samples.end());
        out.pac = pac(all, config);
        out.m_pac = m_pac_from_curve(out.pac.curve);
        return out;
    }
    std::vector<double> curve(config.thresholds.size(), 0.0);
    double value = 0.0;
    std::size_t n = 0;
    for (const auto& [cat, samples] : groups) {
        if (samples.empty()) continue;
        const auto r = pac(samples, config);
        for (std::size_t j = 0; j < curve.size(); ++j) curve[j] += r.curve[j];
        value += r.value;
        ++n;
    }
    if (n > 0) {
        for (auto& c : curve) c /= static_cast<double>(n);
        value /= static_cast<double>(n);
    }
    out.pac.curve = std::move(curve);
    out.pac.value = value;
    out.m_pac = m_pac_from_curve(out.pac.curve);
    return out;
}

}  // namespace tirbench
