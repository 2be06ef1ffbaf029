#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tirbench/records.hpp"

namespace tirbench {

struct ToolCall {
    std::string id;
    std::string name;
    /// Arguments exactly as the model produced them (JSON text).
    std::string arguments;
    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;
    std::vector<ToolCall> tool_calls;  // assistant only
    std::string tool_call_id;          // tool only
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ToolDeclaration {
    std::string name;
    std::string description;
    Json parameters;  // JSON schema
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::vector<ToolDeclaration> tools;
    TokenCount max_tokens = 1024;
    double temperature = 0.0;
    double top_p = 1.0;
    std::vector<std::string> stop;
};

enum class FinishReason { stop, length, tool_call };
std::string_view to_string(FinishReason v);

struct Usage {
    TokenCount prompt_tokens = 0;
    TokenCount completion_tokens = 0;
    /// False when the endpoint gave no usage and the counts come from the fallback tokenizer.
    bool reported = false;
};

struct ChatResponse {
    std::string content;
    std::vector<ToolCall> tool_calls;
    Usage usage;
    FinishReason finish_reason = FinishReason::stop;
};

/// The `run_python` declaration offered to function-calling models.
ToolDeclaration run_python_tool();

/// Pulls the `code` string out of a run_python call. Empty when the arguments
/// are not a JSON object with a string `code`.
std::optional<std::string> code_argument(const ToolCall& call);

/// Model endpoint. Implementations must be safe to call from several threads.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResponse chat(const ChatRequest& request) = 0;
    virtual std::string model_id() const = 0;
};

// Chat-completions wire dialect.
Json to_wire(const ChatRequest& request, std::string_view model);

/// Throws ProtocolError when the body lacks choices or breaks "tool_call
/// finish implies tool calls".
ChatResponse from_wire(const Json& body);

struct RetryPolicy {
    int max_retries = 5;
    double base_delay_s = 1.0;
    double factor = 2.0;
    /// Each delay is stretched by a random fraction in [0, jitter].
    double jitter = 0.25;
};

/// Delay before retry number `attempt` (0-based), without jitter.
double backoff_delay(const RetryPolicy& policy, int attempt);

/// Requests-per-second token bucket; rate <= 0 disables it.
class RateLimiter {
public:
    explicit RateLimiter(double rate_per_s);
    void acquire();

private:
    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
};

struct OpenAiConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key;
    std::string model;
    double timeout_s = 600.0;
    RetryPolicy retry;
    double rate_limit_rps = 0.0;
    /// Merged into every request body (server-specific switches).
    Json extra_body = Json::object();
};

/// OpenAI-compatible chat-completions endpoint over HTTP(S).
class OpenAiClient final : public ChatClient {
public:
    explicit OpenAiClient(OpenAiConfig config);

    ChatResponse chat(const ChatRequest& request) override;
    std::string model_id() const override { return config_.model; }

    /// Replaces the sleep between retries; tests use it to skip waiting.
    void set_sleeper(std::function<void(double)> sleeper) { sleeper_ = std::move(sleeper); }

private:
    OpenAiConfig config_;
    std::string host_;
    std::string path_prefix_;
    RateLimiter limiter_;
    std::function<void(double)> sleeper_;
};

struct MockMatcher {
    std::optional<std::string> contains;       // any message content
    std::optional<std::string> last_contains;  // final message content
    std::optional<std::string> last_role;
    std::optional<int> turn;                   // number of assistant + tool messages
    std::optional<bool> tools;                 // tool declarations present
    std::optional<TokenCount> min_max_tokens;
    std::optional<TokenCount> max_max_tokens;

    bool matches(const ChatRequest& request) const;
};

struct MockEntry {
    MockMatcher match;
    ChatResponse response;
    bool scripted_usage = false;
    std::optional<FinishReason> scripted_finish;
};

/// Replays canned responses. Stateless: the first entry whose matcher accepts
/// the request answers it, so replies do not depend on call order.
class MockClient final : public ChatClient {
public:
    explicit MockClient(std::vector<MockEntry> entries, std::string model = "mock");

    ChatResponse chat(const ChatRequest& request) override;
    std::string model_id() const override { return model_; }

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::vector<MockEntry> entries_;
    std::string model_;
};

MockEntry mock_entry_from_json(const Json& j);
Json to_json(const MockEntry& e);

/// Line-delimited script: one {"match": {...}, "response": {...}} object per
/// line; blank lines are skipped.
MockClient load_mock(const std::filesystem::path& script);

}  // namespace tirbench
