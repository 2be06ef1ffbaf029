#include "tirbench/report.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tirbench/errors.hpp"
#include "tirbench/plot.hpp"

namespace tirbench {

namespace {

constexpr std::string_view kMissing = "–";

Json to_json(const BasisScore& b) {
    Json j;
    j["mean_tokens"] = b.mean_tokens;
    j["pac"] = b.pac.value;
    j["tau_star"] = b.pac.tau_star ? Json(*b.pac.tau_star) : Json(nullptr);
    j["m_pac"] = b.m_pac;
    j["curve"] = b.pac.curve;
    return j;
}

BasisScore basis_from_json(const Json& j) {
    BasisScore b;
    b.mean_tokens = j.at("mean_tokens").get<double>();
    b.pac.value = j.at("pac").get<double>();
    if (const auto& t = j.at("tau_star"); !t.is_null()) b.pac.tau_star = t.get<double>();
    b.m_pac = j.at("m_pac").get<double>();
    b.pac.curve = j.at("curve").get<std::vector<double>>();
    return b;
}

Json to_json(const EfficiencyReport& e) {
    return Json{{"zeta_o", e.zeta_o},
                {"reason_tokens", e.reason_tokens},
                {"first_tokens", e.first_tokens},
                {"reflection_tokens", e.reflection_tokens},
                {"step_count", e.step_count},
                {"correct", e.correct},
                {"total", e.total}};
}

EfficiencyReport efficiency_from_json(const Json& j) {
    EfficiencyReport e;
    e.zeta_o = j.at("zeta_o").get<double>();
    e.reason_tokens = j.at("reason_tokens").get<double>();
    e.first_tokens = j.at("first_tokens").get<double>();
    e.reflection_tokens = j.at("reflection_tokens").get<double>();
    e.step_count = j.at("step_count").get<double>();
    e.correct = j.at("correct").get<std::size_t>();
    e.total = j.at("total").get<std::size_t>();
    return e;
}

BasisScore score_basis(std::span<const TraceRecord> records, const std::map<std::string, Category>& categories,
                       const MetricConfig& metrics, Pooling pooling, CostBasis basis) {
    BasisScore b;
    const auto samples = scored_samples(records, basis);
    double total = 0.0;
    for (const auto& s : samples) total += s.cost;
    b.mean_tokens = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
    std::map<Category, std::vector<ScoredSample>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto it = categories.find(records[i].sample_id);
        groups[it == categories.end() ? Category::number_calculation : it->second].push_back(samples[i]);
    }
    const auto summary = summarize_pac(groups, metrics, pooling);
    b.pac = summary.pac;
    b.m_pac = summary.m_pac;
    return b;
}

std::string fixed(double v, int decimals) {
    const double r = std::round(v * std::pow(10.0, decimals)) / std::pow(10.0, decimals);
    return fmt::format("{:.{}f}", r == 0.0 ? 0.0 : r, decimals);
}

std::string cell(std::optional<double> fraction, std::optional<double> base, int decimals) {
    if (!fraction) return std::string(kMissing);
    auto s = percent(*fraction, decimals);
    if (base) s += fmt::format(" ({})", signed_delta((*fraction - *base) * 100.0, decimals));
    return s;
}

std::string table_row(const std::vector<std::string>& cells) {
    std::string s = "|";
    for (const auto& c : cells) s += " " + c + " |";
    return s + "\n";
}

std::string rule(std::size_t text_cols, std::size_t num_cols) {
    std::string s = "|";
    for (std::size_t i = 0; i < text_cols; ++i) s += "---|";
    for (std::size_t i = 0; i < num_cols; ++i) s += "---:|";
    return s + "\n";
}

struct RunRef {
    const RunScore* run;
    const MetricConfig* metrics;
};

std::optional<double> category_accuracy(const RunScore& r, Category c) {
    for (const auto& cs : r.categories) {
        if (cs.category == c && cs.samples > 0) {
            return static_cast<double>(cs.correct) / static_cast<double>(cs.samples);
        }
    }
    return std::nullopt;
}

double overall_accuracy(const RunScore& r) {
    return r.samples ? static_cast<double>(r.correct) / static_cast<double>(r.samples) : 0.0;
}

}  // namespace

std::string percent(double fraction, int decimals) { return fixed(fraction * 100.0, decimals); }

std::string signed_delta(double value, int decimals) {
    const auto s = fixed(value, decimals);
    return s.starts_with('-') ? s : "+" + s;
}

std::string thousands(double value) {
    const auto n = std::llround(value);
    auto digits = std::to_string(n < 0 ? -n : n);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return n < 0 ? "-" + out : out;
}

RunScore score_run(std::span<const TraceRecord> records, const std::map<std::string, Category>& categories,
                   const MetricConfig& metrics, Pooling pooling) {
    if (pooling == Pooling::per_category_mean && categories.empty()) {
        throw ArgumentError("per-category pooling needs the task file for sample categories");
    }
    RunScore r;
    r.samples = records.size();
    std::map<Category, CategoryScore> per_cat;
    double tool_calls = 0.0;
    for (const auto& t : records) {
        r.correct += t.correct ? 1 : 0;
        tool_calls += static_cast<double>(t.tool_call_count);
        if (!categories.empty()) {
            const auto it = categories.find(t.sample_id);
            if (it == categories.end()) throw ValidationError("sample_id", "no task for traced sample " + t.sample_id);
            auto& cs = per_cat[it->second];
            cs.category = it->second;
            ++cs.samples;
            cs.correct += t.correct ? 1 : 0;
        }
    }
    for (const auto& [_, cs] : per_cat) r.categories.push_back(cs);
    r.all_tokens = score_basis(records, categories, metrics, pooling, CostBasis::all_tokens);
    r.non_tool_tokens = score_basis(records, categories, metrics, pooling, CostBasis::non_tool_tokens);
    r.efficiency = outcome_efficiency(records);
    r.mean_tool_calls = records.empty() ? 0.0 : tool_calls / static_cast<double>(records.size());
    if (!records.empty()) r.paradigm = std::string(to_string(records.front().paradigm));
    return r;
}

Json to_json(const ScoreBundle& b) {
    Json runs = Json::array();
    for (const auto& r : b.runs) {
        Json cats = Json::array();
        for (const auto& c : r.categories) {
            cats.push_back(Json{{"category", to_string(c.category)}, {"samples", c.samples}, {"correct", c.correct}});
        }
        Json j;
        j["label"] = r.label;
        j["trace_file"] = r.trace_file;
        j["trace_digest"] = r.trace_digest;
        j["model_id"] = r.model_id;
        j["paradigm"] = r.paradigm;
        j["samples"] = r.samples;
        j["correct"] = r.correct;
        j["categories"] = std::move(cats);
        j["all_tokens"] = to_json(r.all_tokens);
        j["non_tool_tokens"] = to_json(r.non_tool_tokens);
        j["efficiency"] = to_json(r.efficiency);
        j["mean_tool_calls"] = r.mean_tool_calls;
        runs.push_back(std::move(j));
    }
    return Json{{"metrics", to_json(b.metrics)},
                {"pooling", b.pooling == Pooling::pooled ? "pooled" : "per_category_mean"},
                {"runs", std::move(runs)}};
}

ScoreBundle score_bundle_from_json(const Json& j) {
    ScoreBundle b;
    try {
        b.metrics = metric_config_from_json(j.at("metrics"));
        const auto pooling = j.value("pooling", std::string("pooled"));
        if (pooling != "pooled" && pooling != "per_category_mean") throw ValidationError("pooling", "unknown mode");
        b.pooling = pooling == "pooled" ? Pooling::pooled : Pooling::per_category_mean;
        for (const auto& rj : j.at("runs")) {
            RunScore r;
            r.label = rj.at("label").get<std::string>();
            r.trace_file = rj.value("trace_file", std::string{});
            r.trace_digest = rj.value("trace_digest", std::string{});
            r.model_id = rj.value("model_id", std::string{});
            r.paradigm = rj.value("paradigm", std::string{});
            r.samples = rj.at("samples").get<std::size_t>();
            r.correct = rj.at("correct").get<std::size_t>();
            for (const auto& cj : rj.value("categories", Json::array())) {
                r.categories.push_back(CategoryScore{parse_category(cj.at("category").get<std::string>()),
                                                     cj.at("samples").get<std::size_t>(),
                                                     cj.at("correct").get<std::size_t>()});
            }
            r.all_tokens = basis_from_json(rj.at("all_tokens"));
            r.non_tool_tokens = basis_from_json(rj.at("non_tool_tokens"));
            r.efficiency = efficiency_from_json(rj.at("efficiency"));
            r.mean_tool_calls = rj.value("mean_tool_calls", 0.0);
            b.runs.push_back(std::move(r));
        }
    } catch (const Json::exception& e) {
        throw ValidationError("score", e.what());
    } catch (const ArgumentError& e) {
        throw ValidationError("score", e.what());
    }
    return b;
}

Json to_json(const CurveBundle& c) {
    Json pts = Json::array();
    for (const auto& p : c.points) pts.push_back(Json{{"budget", p.budget}, {"accuracy", p.accuracy}});
    return Json{{"label", c.label},
                {"model_id", c.model_id},
                {"paradigm", c.paradigm},
                {"dataset_digest", c.dataset_digest},
                {"forcing_suffix", c.forcing_suffix},
                {"answer_allowance", c.answer_allowance},
                {"metrics", to_json(c.metrics)},
                {"points", std::move(pts)},
                {"auc_pcc", c.auc_pcc}};
}

CurveBundle curve_bundle_from_json(const Json& j) {
    CurveBundle c;
    try {
        c.label = j.at("label").get<std::string>();
        c.model_id = j.value("model_id", std::string{});
        c.paradigm = j.value("paradigm", std::string{});
        c.dataset_digest = j.value("dataset_digest", std::string{});
        c.forcing_suffix = j.value("forcing_suffix", std::string{});
        c.answer_allowance = j.value("answer_allowance", TokenCount{0});
        if (j.contains("metrics")) c.metrics = metric_config_from_json(j.at("metrics"));
        for (const auto& p : j.at("points")) {
            c.points.push_back(CostPerformancePoint{p.at("budget").get<TokenCount>(), p.at("accuracy").get<double>()});
        }
        c.auc_pcc = j.at("auc_pcc").get<double>();
    } catch (const Json::exception& e) {
        throw ValidationError("curve", e.what());
    }
    return c;
}

Json to_json(const AttributionBundle& a) {
    return Json{{"base_file", a.base_file},
                {"base_digest", a.base_digest},
                {"tir_file", a.tir_file},
                {"tir_digest", a.tir_digest},
                {"report", to_json(a.report)}};
}

AttributionBundle attribution_bundle_from_json(const Json& j) {
    AttributionBundle a;
    try {
        a.base_file = j.value("base_file", std::string{});
        a.base_digest = j.value("base_digest", std::string{});
        a.tir_file = j.value("tir_file", std::string{});
        a.tir_digest = j.value("tir_digest", std::string{});
        a.report = attribution_from_json(j.at("report"));
    } catch (const Json::exception& e) {
        throw ValidationError("attribution", e.what());
    }
    return a;
}

std::string render_report(const ReportInputs& inputs) {
    std::vector<RunRef> runs;
    for (const auto& s : inputs.scores) {
        for (const auto& r : s.value.runs) runs.push_back(RunRef{&r, &s.value.metrics});
    }

    std::string md = "# Evaluation report\n\n";

    md += "## Inputs\n\n";
    md += table_row({"File", "Digest"}) + rule(2, 0);
    for (const auto& s : inputs.scores) {
        md += table_row({s.file, s.digest});
        for (const auto& r : s.value.runs) {
            if (!r.trace_file.empty()) md += table_row({fmt::format("{} (traces of {})", r.trace_file, s.file), r.trace_digest});
        }
    }
    for (const auto& c : inputs.curves) md += table_row({c.file, c.digest});
    if (inputs.attribution) {
        const auto& a = *inputs.attribution;
        md += table_row({a.file, a.digest});
        if (!a.value.base_file.empty()) md += table_row({a.value.base_file + " (base traces)", a.value.base_digest});
        if (!a.value.tir_file.empty()) md += table_row({a.value.tir_file + " (tool traces)", a.value.tir_digest});
    }
    md += "\n";

    if (!runs.empty()) {
        const RunScore& first = *runs.front().run;
        std::vector<std::string> header{"Category"};
        for (const auto& r : runs) header.push_back(r.run->label);

        md += "## Accuracy (%)\n\n";
        md += table_row(header) + rule(1, runs.size());
        std::vector<Category> cats;
        for (const auto& r : runs) {
            for (const auto& c : r.run->categories) {
                if (std::find(cats.begin(), cats.end(), c.category) == cats.end()) cats.push_back(c.category);
            }
        }
        std::sort(cats.begin(), cats.end());
        for (const auto c : cats) {
            std::vector<std::string> row{std::string(to_string(c))};
            const auto base = category_accuracy(first, c);
            for (std::size_t i = 0; i < runs.size(); ++i) {
                row.push_back(cell(category_accuracy(*runs[i].run, c), i ? base : std::nullopt, 1));
            }
            md += table_row(row);
        }
        std::vector<std::string> overall{"Overall"};
        for (std::size_t i = 0; i < runs.size(); ++i) {
            overall.push_back(cell(overall_accuracy(*runs[i].run),
                                   i ? std::optional<double>(overall_accuracy(first)) : std::nullopt, 1));
        }
        md += table_row(overall) + "\n";

        const auto& m = *runs.front().metrics;
        md += "## Cost efficiency\n\n";
        md += fmt::format("Maximum cost {} tokens, {} performance thresholds from {} to {}. PAC and m-PAC in %.\n\n",
                          thousands(static_cast<double>(m.c_max)), m.thresholds.size(),
                          m.thresholds.empty() ? 0.0 : m.thresholds.front(),
                          m.thresholds.empty() ? 0.0 : m.thresholds.back());
        md += table_row({"Run", "Paradigm", "All Tokens: # Tokens", "All Tokens: PAC", "All Tokens: m-PAC",
                         "Non-Tool Tokens: # Tokens", "Non-Tool Tokens: PAC", "Non-Tool Tokens: m-PAC"});
        md += rule(2, 6);
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& r = *runs[i].run;
            auto pac_cell = [&](const BasisScore& b, const BasisScore& fb) {
                return cell(b.pac.value, i ? std::optional<double>(fb.pac.value) : std::nullopt, 1);
            };
            auto mpac_cell = [&](const BasisScore& b, const BasisScore& fb) {
                return cell(b.m_pac, i ? std::optional<double>(fb.m_pac) : std::nullopt, 1);
            };
            md += table_row({r.label, r.paradigm.empty() ? std::string(kMissing) : r.paradigm,
                             thousands(r.all_tokens.mean_tokens), pac_cell(r.all_tokens, first.all_tokens),
                             mpac_cell(r.all_tokens, first.all_tokens), thousands(r.non_tool_tokens.mean_tokens),
                             pac_cell(r.non_tool_tokens, first.non_tool_tokens),
                             mpac_cell(r.non_tool_tokens, first.non_tool_tokens)});
        }
        md += "\n";

        md += "### PAC by threshold, all tokens (%)\n\n";
        std::vector<std::string> th{"Threshold"};
        for (const auto& r : runs) th.push_back(r.run->label);
        md += table_row(th) + rule(1, runs.size());
        for (std::size_t k = 0; k < m.thresholds.size(); ++k) {
            std::vector<std::string> row{fmt::format("{:.2f}", m.thresholds[k])};
            for (const auto& r : runs) {
                const auto& curve = r.run->all_tokens.pac.curve;
                row.push_back(k < curve.size() ? percent(curve[k], 1) : std::string(kMissing));
            }
            md += table_row(row);
        }
        md += "\n";
        std::vector<PlotSeries> pac_series;
        for (const auto& r : runs) {
            PlotSeries s{r.run->label, {}};
            const auto& curve = r.run->all_tokens.pac.curve;
            for (std::size_t k = 0; k < curve.size() && k < m.thresholds.size(); ++k) {
                s.points.emplace_back(m.thresholds[k], curve[k] * 100.0);
            }
            pac_series.push_back(std::move(s));
        }
        md += line_chart(PlotSpec{"PAC by performance threshold", "threshold", "PAC (%)"}, pac_series) + "\n";

        md += "## Outcome efficiency\n\n";
        md += "Averages over correct responses.\n\n";
        md += table_row({"Run", "Reason", "First", "Refl.", "ζ_o", "Steps"}) + rule(1, 5);
        for (const auto& ref : runs) {
            const auto& e = ref.run->efficiency;
            if (e.correct == 0 && e.total == 0) {
                md += table_row({ref.run->label, std::string(kMissing), std::string(kMissing), std::string(kMissing),
                                 std::string(kMissing), std::string(kMissing)});
                continue;
            }
            md += table_row({ref.run->label, thousands(e.reason_tokens), thousands(e.first_tokens),
                             thousands(e.reflection_tokens), fixed(e.zeta_o, 3), thousands(e.step_count)});
        }
        md += "\n";
    }

    if (!inputs.curves.empty()) {
        md += "## Performance under cost budgets\n\n";
        md += table_row({"Run", "Budgets", "AUC-PCC (%)"}) + rule(2, 1);
        const double base_auc = inputs.curves.front().value.auc_pcc;
        for (std::size_t i = 0; i < inputs.curves.size(); ++i) {
            const auto& c = inputs.curves[i].value;
            std::string budgets;
            for (const auto& p : c.points) budgets += (budgets.empty() ? "" : ", ") + thousands(static_cast<double>(p.budget));
            md += table_row({c.label, budgets, cell(c.auc_pcc, i ? std::optional<double>(base_auc) : std::nullopt, 2)});
        }
        md += "\n";
        std::vector<TokenCount> all_budgets;
        for (const auto& c : inputs.curves) {
            for (const auto& p : c.value.points) all_budgets.push_back(p.budget);
        }
        std::sort(all_budgets.begin(), all_budgets.end());
        all_budgets.erase(std::unique(all_budgets.begin(), all_budgets.end()), all_budgets.end());
        std::vector<std::string> header{"Budget"};
        for (const auto& c : inputs.curves) header.push_back(c.value.label);
        md += table_row(header) + rule(1, inputs.curves.size());
        for (const auto b : all_budgets) {
            std::vector<std::string> row{thousands(static_cast<double>(b))};
            for (const auto& c : inputs.curves) {
                const auto it = std::find_if(c.value.points.begin(), c.value.points.end(),
                                             [&](const CostPerformancePoint& p) { return p.budget == b; });
                row.push_back(it == c.value.points.end() ? std::string(kMissing) : percent(it->accuracy, 1));
            }
            md += table_row(row);
        }
        md += "\n";
        std::vector<PlotSeries> series;
        for (const auto& c : inputs.curves) {
            PlotSeries s{c.value.label, {}};
            for (const auto& p : c.value.points) s.points.emplace_back(static_cast<double>(p.budget), p.accuracy * 100.0);
            series.push_back(std::move(s));
        }
        PlotSpec spec{"Performance w.r.t. cost budget", "token budget", "accuracy (%)"};
        spec.log2_x = true;
        md += line_chart(spec, series) + "\n";
    }

    if (inputs.attribution) {
        const auto& a = inputs.attribution->value.report;
        md += "## Attribution of accuracy changes\n\n";
        md += fmt::format("Shares of the {} judged samples whose correctness differs between the runs.\n\n",
                          a.tool_related + a.other + a.lost);
        md += table_row({"Judge", "Tool-Related Acc.+Δ (%)", "Acc.+Δ (%)", "Acc.−Δ (%)", "Gained", "Lost", "Unjudged"});
        md += rule(1, 6);
        md += table_row({a.judge_model.empty() ? std::string(kMissing) : a.judge_model, percent(a.tool_related_gain, 2),
                         percent(a.other_gain, 2), percent(a.loss, 2), std::to_string(a.gained),
                         std::to_string(a.lost), std::to_string(a.unjudged_ids.size())});
        md += "\n";
    }
    return md;
}

}  // namespace tirbench
