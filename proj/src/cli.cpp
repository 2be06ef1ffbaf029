#include "tirbench/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tirbench/attribution.hpp"
#include "tirbench/config.hpp"
#include "tirbench/digest.hpp"
#include "tirbench/errors.hpp"
#include "tirbench/harness.hpp"
#include "tirbench/plot.hpp"
#include "tirbench/report.hpp"
#include "tirbench/taskgen.hpp"

namespace tirbench {

namespace {

namespace fs = std::filesystem;

/// Bad invocation or missing input; exits with kExitUsage.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("input not found: " + path.string());
    try {
        return Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

std::unique_ptr<Executor> make_executor(const AppConfig& c) {
    if (c.harness.paradigm == Paradigm::vanilla) return nullptr;
    return std::make_unique<Sandbox>(c.sandbox);
}

RunManifest manifest_for(const AppConfig& c, const ChatClient& client) {
    RunManifest m;
    m.run_id = c.run_id;
    m.model_id = client.model_id();
    m.paradigm = c.harness.paradigm;
    m.sampling = c.sampling;
    m.dataset_digest = file_digest(c.tasks);
    m.dataset_path = c.tasks.string();
    m.created_at = c.created_at.empty() ? utc_timestamp() : c.created_at;
    m.config = c.metrics;
    return m;
}

std::map<std::string, Category> categories_from(const fs::path& tasks) {
    std::map<std::string, Category> out;
    for (const auto& t : load_tasks(tasks)) out.emplace(t.id, t.category);
    return out;
}

// ---- gen -----------------------------------------------------------------

struct GenArgs {
    std::string category = "all";
    std::uint64_t seed = 0;
    int count = 25;
    int difficulty = 1;
    std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
    std::vector<Category> cats;
    if (a.category == "all") {
        cats = generated_categories();
    } else {
        cats.push_back(parse_category(a.category));
    }
    std::vector<TaskSample> tasks;
    for (auto c : cats) {
        auto part = generate(GeneratorSpec{c, a.seed, a.count, a.difficulty});
        tasks.insert(tasks.end(), part.begin(), part.end());
    }
    save_tasks(tasks, a.out);
    out << fmt::format("wrote {} tasks to {}\n", tasks.size(), a.out);
    return kExitOk;
}

// ---- run -----------------------------------------------------------------

struct RunArgs {
    std::string config;
    std::string mock;
    std::string traces;
    std::size_t parallelism = 0;
};

ConfigOverrides overrides_of(const RunArgs& a) {
    ConfigOverrides o;
    if (!a.mock.empty()) o.mock_script = a.mock;
    if (!a.traces.empty()) o.traces = a.traces;
    if (a.parallelism > 0) o.parallelism = a.parallelism;
    return o;
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
    const auto c = load_config(a.config, overrides_of(a));
    const auto tasks = load_tasks(c.tasks);
    auto client = make_client(c.client);
    auto executor = make_executor(c);

    DatasetRunOptions opts;
    opts.trace_path = c.traces;
    opts.parallelism = c.parallelism;
    opts.manifest = manifest_for(c, *client);
    const std::size_t step = std::max<std::size_t>(1, tasks.size() / 20);
    opts.progress = [&](std::size_t done, std::size_t total) {
        if (done % step == 0 || done == total) err << fmt::format("run: {}/{}\n", done, total) << std::flush;
    };
    const auto summary = run_dataset(tasks, *client, executor.get(), c.harness, opts);
    out << fmt::format("{}: {} completed, {} already present, {} failed\n", c.traces.string(), summary.completed,
                       summary.skipped, summary.failures.size());
    for (const auto& f : summary.failures) err << fmt::format("failed {}: {}\n", f.sample_id, f.error);
    if (!summary.failures.empty()) {
        err << fmt::format("failures written to {}\n", failures_path_for(c.traces).string());
        return kExitFailure;
    }
    return kExitOk;
}

// ---- score ---------------------------------------------------------------

struct ScoreArgs {
    std::vector<std::string> traces;
    std::string tasks;
    std::string config;
    std::string out;
    bool per_category = false;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
    ScoreBundle bundle;
    bundle.metrics = a.config.empty() ? MetricConfig::defaults() : load_metrics_section(a.config);
    bundle.pooling = a.per_category ? Pooling::per_category_mean : Pooling::pooled;
    for (const auto& t : a.traces) {
        const fs::path path(t);
        if (!fs::exists(path)) throw UsageError("input not found: " + t);
        const auto records = load_traces(path);
        if (records.empty()) throw IoError("trace file is empty: " + t);

        std::optional<RunManifest> manifest;
        if (fs::exists(manifest_path_for(path))) manifest = load_manifest(manifest_path_for(path));
        fs::path task_file = a.tasks;
        if (task_file.empty() && manifest && fs::exists(manifest->dataset_path)) task_file = manifest->dataset_path;
        const auto cats = task_file.empty() ? std::map<std::string, Category>{} : categories_from(task_file);

        auto run = score_run(records, cats, bundle.metrics, bundle.pooling);
        run.label = manifest && !manifest->run_id.empty() ? manifest->run_id : path.stem().string();
        run.model_id = manifest ? manifest->model_id : std::string{};
        run.trace_file = path.filename().string();
        run.trace_digest = file_digest(path);
        bundle.runs.push_back(std::move(run));
    }
    const auto j = to_json(bundle);
    if (a.out.empty()) {
        out << j.dump(2) << "\n";
    } else {
        write_json(a.out, j);
        out << fmt::format("wrote scores for {} run(s) to {}\n", bundle.runs.size(), a.out);
    }
    return kExitOk;
}

// ---- curve ---------------------------------------------------------------

struct CurveArgs {
    RunArgs run;
    std::vector<TokenCount> budgets;
    std::string out;
};

fs::path with_extension(fs::path p, const char* ext) {
    p.replace_extension(ext);
    return p;
}

int cmd_curve(const CurveArgs& a, std::ostream& out, std::ostream& err) {
    const auto c = load_config(a.run.config, overrides_of(a.run));
    const auto budgets = a.budgets.empty() ? c.metrics.budgets : a.budgets;
    if (budgets.size() < 2) throw UsageError("a budget curve needs at least two budgets");
    for (std::size_t i = 1; i < budgets.size(); ++i) {
        if (budgets[i] <= budgets[i - 1]) throw UsageError("budgets must be strictly ascending");
    }
    if (budgets.back() > c.metrics.c_max) {
        throw UsageError(fmt::format("budget {} exceeds c_max {}", budgets.back(), c.metrics.c_max));
    }
    const auto tasks = load_tasks(c.tasks);
    auto client = make_client(c.client);
    auto executor = make_executor(c);

    const auto points = budget_forced_eval(tasks, *client, executor.get(), c.harness, budgets, c.parallelism,
                                           [&](const BudgetRun& r) {
                                               err << fmt::format("curve: budget {} done\n", r.budget) << std::flush;
                                           });
    CurveBundle bundle;
    bundle.label = c.run_id;
    bundle.model_id = client->model_id();
    bundle.paradigm = std::string(to_string(c.harness.paradigm));
    bundle.dataset_digest = file_digest(c.tasks);
    bundle.forcing_suffix = c.harness.forcing_suffix;
    bundle.answer_allowance = c.harness.answer_allowance;
    bundle.metrics = c.metrics;
    bundle.points = points;
    bundle.auc_pcc = auc_pcc(points, c.metrics);

    const fs::path json_path = a.out.empty() ? fs::path(c.traces).replace_extension(".curve.json") : fs::path(a.out);
    write_json(json_path, to_json(bundle));
    PlotSpec spec{"Performance w.r.t. cost budget", "token budget", "accuracy (%)"};
    spec.log2_x = true;
    PlotSeries series{bundle.label, {}};
    for (const auto& p : points) series.points.emplace_back(static_cast<double>(p.budget), p.accuracy * 100.0);
    const auto svg_path = with_extension(json_path, ".svg");
    write_file(svg_path, line_chart(spec, {series}));

    out << fmt::format("{:>10}  {:>9}\n", "budget", "accuracy");
    for (const auto& p : points) out << fmt::format("{:>10}  {:>8}%\n", p.budget, percent(p.accuracy, 2));
    out << fmt::format("AUC-PCC {}%\nwrote {} and {}\n", percent(bundle.auc_pcc, 2), json_path.string(),
                       svg_path.string());
    return kExitOk;
}

// ---- attribute -------------------------------------------------------------

struct AttributeArgs {
    std::vector<std::string> traces;
    std::string config;
    std::string judge_mock;
    std::string tasks;
    std::string out;
    std::size_t parallelism = 1;
};

std::string bar(double share) {
    const auto n = static_cast<std::size_t>(std::llround(std::clamp(share, 0.0, 1.0) * 40.0));
    return std::string(n, '#');
}

int cmd_attribute(const AttributeArgs& a, std::ostream& out) {
    if (a.traces.size() != 2) throw UsageError("attribute takes exactly two --traces: base, then tool run");
    for (const auto& t : a.traces) {
        if (!fs::exists(t)) throw UsageError("input not found: " + t);
    }
    std::optional<ClientSettings> judge;
    if (!a.judge_mock.empty()) {
        judge = ClientSettings{ClientKind::mock, {}, a.judge_mock};
    } else if (!a.config.empty()) {
        judge = load_judge_section(a.config);
    }
    if (!judge) throw UsageError("no judge configured: pass --judge-mock or a --config with a [judge] section");

    const auto base = load_traces(a.traces[0]);
    const auto tir = load_traces(a.traces[1]);
    const auto flips = diff_runs(base, tir);
    std::map<std::string, std::string> questions;
    if (!a.tasks.empty()) {
        for (const auto& t : load_tasks(a.tasks)) questions.emplace(t.id, t.question);
    }
    auto client = make_client(*judge);

    AttributionBundle bundle;
    bundle.base_file = fs::path(a.traces[0]).filename().string();
    bundle.base_digest = file_digest(a.traces[0]);
    bundle.tir_file = fs::path(a.traces[1]).filename().string();
    bundle.tir_digest = file_digest(a.traces[1]);
    bundle.report = classify_flips(flips, tir, *client, questions, a.parallelism);
    const auto& r = bundle.report;

    out << fmt::format("{} samples differ ({} gained, {} lost); judge {}\n", flips.inconsistent(), r.gained, r.lost,
                       r.judge_model);
    out << fmt::format("{:<22}{:>7}%  {}\n", "Tool-Related Acc.+Δ", percent(r.tool_related_gain, 2),
                       bar(r.tool_related_gain));
    out << fmt::format("{:<22}{:>7}%  {}\n", "Acc.+Δ", percent(r.other_gain, 2), bar(r.other_gain));
    out << fmt::format("{:<22}{:>7}%  {}\n", "Acc.−Δ", percent(r.loss, 2), bar(r.loss));
    if (!r.unjudged_ids.empty()) out << fmt::format("{} gained sample(s) left unjudged\n", r.unjudged_ids.size());
    if (!a.out.empty()) write_json(a.out, to_json(bundle));
    return kExitOk;
}

// ---- report --------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> scores;
    std::vector<std::string> curves;
    std::string attribution;
    std::string out;
};

template <typename T, typename F>
Input<T> load_input(const std::string& file, F&& parse) {
    const auto j = read_json(file);
    return Input<T>{fs::path(file).filename().string(), file_digest(file), parse(j)};
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
    if (a.scores.empty() && a.curves.empty() && a.attribution.empty()) {
        throw UsageError("report needs at least one --score, --curve or --attribution input");
    }
    ReportInputs inputs;
    for (const auto& s : a.scores) inputs.scores.push_back(load_input<ScoreBundle>(s, score_bundle_from_json));
    for (const auto& c : a.curves) inputs.curves.push_back(load_input<CurveBundle>(c, curve_bundle_from_json));
    if (!a.attribution.empty()) {
        inputs.attribution = load_input<AttributionBundle>(a.attribution, attribution_bundle_from_json);
    }
    const auto md = render_report(inputs);
    if (a.out.empty()) {
        out << md;
    } else {
        write_file(a.out, md);
        out << fmt::format("wrote {}\n", a.out);
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Evaluation harness for tool-integrated reasoning", "tirbench"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate procedural task files");
    g->add_option("--category", gen.category, "category name, or all")->capture_default_str();
    g->add_option("--seed", gen.seed)->capture_default_str();
    g->add_option("--count", gen.count, "items per category")->capture_default_str()->check(CLI::NonNegativeNumber);
    g->add_option("--difficulty", gen.difficulty)->capture_default_str()->check(CLI::Range(1, 5));
    g->add_option("--out", gen.out, "task file to write")->required();

    RunArgs run;
    auto* r = app.add_subcommand("run", "evaluate a task file");
    r->add_option("--config", run.config)->required();
    r->add_option("--mock", run.mock, "replay a mock script instead of the configured client");
    r->add_option("--traces", run.traces, "trace file, overriding the config");
    r->add_option("--parallelism", run.parallelism)->check(CLI::PositiveNumber);

    ScoreArgs score;
    auto* s = app.add_subcommand("score", "compute accuracy, PAC family and efficiency from traces");
    s->add_option("--traces", score.traces)->required();
    s->add_option("--tasks", score.tasks, "task file for per-category results");
    s->add_option("--config", score.config, "config whose [metrics] section to use");
    s->add_option("--out", score.out);
    s->add_flag("--per-category", score.per_category, "average PAC over categories instead of pooling");

    CurveArgs curve;
    auto* c = app.add_subcommand("curve", "accuracy under token budgets, with budget forcing");
    c->add_option("--config", curve.run.config)->required();
    c->add_option("--mock", curve.run.mock);
    c->add_option("--parallelism", curve.run.parallelism)->check(CLI::PositiveNumber);
    c->add_option("--budgets", curve.budgets)->delimiter(',');
    c->add_option("--out", curve.out, "curve file; the plot goes beside it as .svg");

    AttributeArgs attr;
    auto* at = app.add_subcommand("attribute", "split accuracy changes between a base and a tool run");
    at->add_option("--traces", attr.traces, "base traces, then tool traces")->required()->expected(2);
    at->add_option("--config", attr.config, "config with a [judge] section");
    at->add_option("--judge-mock", attr.judge_mock, "mock script answering as the judge");
    at->add_option("--tasks", attr.tasks, "task file supplying question text");
    at->add_option("--parallelism", attr.parallelism)->check(CLI::PositiveNumber);
    at->add_option("--out", attr.out);

    ReportArgs rep;
    auto* rp = app.add_subcommand("report", "render scores, curves and attribution as markdown");
    rp->add_option("--score", rep.scores);
    rp->add_option("--curve", rep.curves);
    rp->add_option("--attribution", rep.attribution);
    rp->add_option("--out", rep.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_gen(gen, out);
        if (r->parsed()) return cmd_run(run, out, err);
        if (s->parsed()) return cmd_score(score, out);
        if (c->parsed()) return cmd_curve(curve, out, err);
        if (at->parsed()) return cmd_attribute(attr, out);
        if (rp->parsed()) return cmd_report(rep, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace tirbench
