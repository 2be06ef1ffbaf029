#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "tirbench/client.hpp"
#include "tirbench/harness.hpp"
#include "tirbench/records.hpp"
#include "tirbench/sandbox.hpp"

namespace tirbench {

enum class ClientKind { openai, mock };

struct ClientSettings {
    ClientKind kind = ClientKind::openai;
    OpenAiConfig openai;
    std::filesystem::path mock_script;
};

/// Everything a run needs, read from an INI file with sections [run],
/// [client], [sampling], [harness], [sandbox], [metrics] and [judge].
/// Relative paths are resolved against the config file's directory.
struct AppConfig {
    std::filesystem::path tasks;
    std::filesystem::path traces;
    std::string run_id;
    std::string created_at;  // empty: stamped at run time
    std::size_t parallelism = 1;

    ClientSettings client;
    std::optional<ClientSettings> judge;
    ParadigmConfig harness;
    SamplingSettings sampling;
    SandboxConfig sandbox;
    MetricConfig metrics = MetricConfig::defaults();
};

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
    std::optional<std::filesystem::path> mock_script;
    std::optional<std::filesystem::path> traces;
    std::optional<std::size_t> parallelism;
};

/// Throws ConfigError naming the offending `section.key`. API keys may come
/// from TIRBENCH_API_KEY and TIRBENCH_JUDGE_API_KEY, which win over the file.
AppConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Just the [metrics] section, defaults for anything unset.
MetricConfig load_metrics_section(const std::filesystem::path& path);

/// Just the [judge] section; nullopt when the file has none.
std::optional<ClientSettings> load_judge_section(const std::filesystem::path& path);

std::unique_ptr<ChatClient> make_client(const ClientSettings& settings);

/// Current UTC time as 2024-01-31T12:00:00Z.
std::string utc_timestamp();

}  // namespace tirbench
