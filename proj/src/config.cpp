#include "tirbench/config.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "tirbench/errors.hpp"
#include "tirbench/prompts.hpp"

namespace tirbench {

namespace {

namespace pt = boost::property_tree;

class Reader {
public:
    Reader(const pt::ptree& tree, std::filesystem::path base) : tree_(tree), base_(std::move(base)) {}

    bool has(const std::string& key) const { return static_cast<bool>(tree_.get_optional<std::string>(key)); }

    std::optional<std::string> text(const std::string& key) const {
        auto v = tree_.get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    }

    std::string require(const std::string& key) const {
        auto v = text(key);
        if (!v || v->empty()) throw ConfigError(key, "missing required field");
        return *v;
    }

    template <typename T>
    std::optional<T> get(const std::string& key) const {
        auto v = text(key);
        if (!v) return std::nullopt;
        std::istringstream in(*v);
        T out{};
        if constexpr (std::is_same_v<T, bool>) {
            if (*v == "true" || *v == "yes" || *v == "1") return true;
            if (*v == "false" || *v == "no" || *v == "0") return false;
            throw ConfigError(key, "expected true or false, got '" + *v + "'");
        } else {
            in >> out;
            if (in.fail() || !(in >> std::ws).eof()) throw ConfigError(key, "cannot parse '" + *v + "'");
            return out;
        }
    }

    template <typename T>
    void set(const std::string& key, T& target) const {
        if (auto v = get<T>(key)) target = *v;
    }

    std::optional<std::filesystem::path> path(const std::string& key) const {
        auto v = text(key);
        if (!v || v->empty()) return std::nullopt;
        return resolve(*v);
    }

    std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : base_ / p; }

    template <typename T>
    std::optional<std::vector<T>> list(const std::string& key) const {
        auto v = text(key);
        if (!v) return std::nullopt;
        std::vector<T> out;
        std::string item;
        std::istringstream in(*v);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            std::istringstream one(item);
            T x{};
            one >> x;
            if (one.fail() || !(one >> std::ws).eof()) throw ConfigError(key, "cannot parse list item '" + item + "'");
            out.push_back(x);
        }
        return out;
    }

    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r\"");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\"");
        return s.substr(b, e - b + 1);
    }

private:
    const pt::ptree& tree_;
    std::filesystem::path base_;
};

template <typename F>
auto field(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
    }
}

ClientSettings read_client(const Reader& r, const std::string& section, const char* key_env,
                           const std::optional<std::filesystem::path>& mock_override) {
    ClientSettings c;
    const auto kind = mock_override ? std::string("mock") : r.require(section + ".kind");
    if (kind == "mock") {
        c.kind = ClientKind::mock;
        if (mock_override) {
            c.mock_script = *mock_override;
        } else {
            c.mock_script = r.path(section + ".mock_script").value_or("");
            if (c.mock_script.empty()) throw ConfigError(section + ".mock_script", "missing required field");
        }
        return c;
    }
    if (kind != "openai") throw ConfigError(section + ".kind", "expected openai or mock, got '" + kind + "'");
    c.kind = ClientKind::openai;
    c.openai.base_url = r.require(section + ".base_url");
    c.openai.model = r.require(section + ".model");
    r.set(section + ".api_key", c.openai.api_key);
    if (const char* env = std::getenv(key_env); env && *env) c.openai.api_key = env;
    r.set(section + ".timeout_s", c.openai.timeout_s);
    r.set(section + ".max_retries", c.openai.retry.max_retries);
    r.set(section + ".retry_base_s", c.openai.retry.base_delay_s);
    r.set(section + ".rate_limit_rps", c.openai.rate_limit_rps);
    if (auto extra = r.text(section + ".extra_body")) {
        c.openai.extra_body = field(section + ".extra_body", [&] { return Json::parse(*extra); });
        if (!c.openai.extra_body.is_object()) throw ConfigError(section + ".extra_body", "expected a JSON object");
    }
    return c;
}

void read_metrics(const Reader& r, MetricConfig& m) {
    r.set("metrics.c_max", m.c_max);
    r.set("metrics.p_max", m.p_max);
    if (auto t = r.list<double>("metrics.thresholds")) m.thresholds = *t;
    if (auto b = r.list<TokenCount>("metrics.budgets")) m.budgets = *b;
    try {
        validate(m);
    } catch (const ValidationError& e) {
        throw ConfigError("metrics." + e.field(), e.what());
    }
}

pt::ptree read_tree(const std::filesystem::path& path) {
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("file", e.what());
    }
    return tree;
}

}  // namespace

MetricConfig load_metrics_section(const std::filesystem::path& path) {
    const auto tree = read_tree(path);
    MetricConfig m = MetricConfig::defaults();
    read_metrics(Reader(tree, path.parent_path()), m);
    return m;
}

std::optional<ClientSettings> load_judge_section(const std::filesystem::path& path) {
    const auto tree = read_tree(path);
    const Reader r(tree, path.parent_path());
    if (!r.has("judge.kind")) return std::nullopt;
    return read_client(r, "judge", "TIRBENCH_JUDGE_API_KEY", std::nullopt);
}

AppConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    const auto tree = read_tree(path);
    const Reader r(tree, path.parent_path());
    AppConfig c;

    const auto paradigm = field("run.paradigm", [&] { return parse_paradigm(r.require("run.paradigm")); });
    c.harness = ParadigmConfig::for_paradigm(paradigm);
    c.tasks = r.resolve(r.require("run.tasks"));
    c.traces = overrides.traces ? *overrides.traces : r.resolve(r.require("run.traces"));
    c.run_id = r.text("run.run_id").value_or(c.traces.stem().string());
    r.set("run.created_at", c.created_at);
    r.set("run.parallelism", c.parallelism);
    if (overrides.parallelism) c.parallelism = *overrides.parallelism;
    if (c.parallelism < 1) throw ConfigError("run.parallelism", "must be at least 1");

    c.client = read_client(r, "client", "TIRBENCH_API_KEY", overrides.mock_script);
    if (r.has("judge.kind")) c.judge = read_client(r, "judge", "TIRBENCH_JUDGE_API_KEY", std::nullopt);

    r.set("sampling.temperature", c.sampling.temperature);
    r.set("sampling.top_p", c.sampling.top_p);
    c.harness.temperature = c.sampling.temperature;
    c.harness.top_p = c.sampling.top_p;

    r.set("harness.budget", c.harness.budget);
    r.set("harness.max_turns", c.harness.max_turns);
    r.set("harness.max_tool_calls", c.harness.max_tool_calls);
    r.set("harness.answer_allowance", c.harness.answer_allowance);
    if (auto s = r.text("harness.forcing_suffix")) c.harness.forcing_suffix = *s;
    if (auto t = r.text("harness.template")) {
        c.harness.prompt_template = field("harness.template", [&] { return parse_template_id(*t); });
    }
    r.set("harness.pot_verbal_fallback", c.harness.pot_verbal_fallback);
    r.set("harness.record_timing", c.harness.record_timing);
    c.sampling.max_tokens = c.harness.budget;

    r.set("sandbox.timeout_s", c.harness.limits.timeout_s);
    if (auto mb = r.get<std::size_t>("sandbox.memory_mb")) c.harness.limits.memory_bytes = *mb * 1024 * 1024;
    r.set("sandbox.output_cap", c.harness.limits.output_cap);
    r.set("sandbox.grace_s", c.sandbox.grace_s);
    r.set("sandbox.max_concurrent", c.sandbox.max_concurrent);
    r.set("sandbox.isolate_network", c.sandbox.isolate_network);
    if (auto root = r.path("sandbox.scratch_root")) c.sandbox.scratch_root = *root;
    if (auto guest = r.text("sandbox.guest")) {
        std::istringstream in(*guest);
        for (std::string part; in >> part;) {
            // The program itself may be given relative to the config file.
            if (c.sandbox.guest_command.empty() && part.find('/') != std::string::npos) part = r.resolve(part).string();
            c.sandbox.guest_command.push_back(part);
        }
    }
    if (paradigm != Paradigm::vanilla && c.sandbox.guest_command.empty()) {
        throw ConfigError("sandbox.guest", "missing required field for a tool-using paradigm");
    }

    read_metrics(r, c.metrics);
    try {
        validate(c.harness, c.metrics);
    } catch (const ValidationError& e) {
        throw ConfigError("harness." + e.field(), e.what());
    }
    return c;
}

std::unique_ptr<ChatClient> make_client(const ClientSettings& settings) {
    if (settings.kind == ClientKind::mock) {
        auto mock = load_mock(settings.mock_script);
        return std::make_unique<MockClient>(std::move(mock));
    }
    return std::make_unique<OpenAiClient>(settings.openai);
}

std::string utc_timestamp() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

}  // namespace tirbench
