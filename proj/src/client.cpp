#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "tirbench/client.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "tirbench/digest.hpp"
#include "tirbench/errors.hpp"
#include "tirbench/tokenizer.hpp"

namespace tirbench {

namespace {

bool transient_status(int status) {
    return status == 408 || status == 409 || status == 429 || status >= 500;
}

FinishReason parse_finish(std::string_view s) {
    if (s == "length") return FinishReason::length;
    if (s == "tool_calls" || s == "function_call" || s == "tool_call") return FinishReason::tool_call;
    return FinishReason::stop;
}

std::string arguments_text(const Json& args) {
    return args.is_string() ? args.get<std::string>() : args.dump();
}

TokenCount generated_tokens(const ChatResponse& r) {
    TokenCount n = Tokenizer::count(r.content);
    for (const auto& c : r.tool_calls) n += Tokenizer::count(c.arguments);
    return n;
}

TokenCount prompt_tokens(const ChatRequest& req) {
    TokenCount n = 0;
    for (const auto& m : req.messages) {
        n += Tokenizer::count(m.content);
        for (const auto& c : m.tool_calls) n += Tokenizer::count(c.arguments);
    }
    return n;
}

std::string summarize(const ChatRequest& req) {
    std::string last;
    if (!req.messages.empty()) {
        last = req.messages.back().content.substr(0, 120);
        std::replace(last.begin(), last.end(), '\n', ' ');
    }
    return fmt::format("{} messages, last role '{}', last content '{}'", req.messages.size(),
                       req.messages.empty() ? "" : req.messages.back().role, last);
}

template <typename T>
std::optional<T> opt_field(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

}  // namespace

std::string_view to_string(FinishReason v) {
    switch (v) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::tool_call: return "tool_call";
    }
    return "?";
}

ToolDeclaration run_python_tool() {
    ToolDeclaration d;
    d.name = "run_python";
    d.description = "Execute Python code and see the results immediately.";
    d.parameters = Json::parse(R"({
        "type": "object",
        "properties": {
            "code": {"type": "string", "description": "Self-contained Python source to execute."}
        },
        "required": ["code"]
    })");
    return d;
}

std::optional<std::string> code_argument(const ToolCall& call) {
    const auto args = Json::parse(call.arguments, nullptr, false);
    if (!args.is_object()) return std::nullopt;
    auto it = args.find("code");
    if (it == args.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
}

Json to_wire(const ChatRequest& request, std::string_view model) {
    Json body;
    body["model"] = model;
    Json messages = Json::array();
    for (const auto& m : request.messages) {
        Json msg;
        msg["role"] = m.role;
        msg["content"] = m.content;
        if (!m.tool_calls.empty()) {
            Json calls = Json::array();
            for (const auto& c : m.tool_calls) {
                calls.push_back(Json{{"id", c.id},
                                     {"type", "function"},
                                     {"function", Json{{"name", c.name}, {"arguments", c.arguments}}}});
            }
            msg["tool_calls"] = std::move(calls);
        }
        if (m.role == "tool") msg["tool_call_id"] = m.tool_call_id;
        messages.push_back(std::move(msg));
    }
    body["messages"] = std::move(messages);
    if (!request.tools.empty()) {
        Json tools = Json::array();
        for (const auto& t : request.tools) {
            tools.push_back(Json{{"type", "function"},
                                 {"function", Json{{"name", t.name},
                                                   {"description", t.description},
                                                   {"parameters", t.parameters}}}});
        }
        body["tools"] = std::move(tools);
    }
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    body["top_p"] = request.top_p;
    if (!request.stop.empty()) body["stop"] = request.stop;
    // A trailing assistant message is a prefill the server should continue.
    if (!request.messages.empty() && request.messages.back().role == "assistant") {
        body["continue_final_message"] = true;
        body["add_generation_prompt"] = false;
    }
    return body;
}

ChatResponse from_wire(const Json& body) {
    if (!body.is_object()) throw ProtocolError("reply is not a JSON object");
    auto choices = body.find("choices");
    if (choices == body.end() || !choices->is_array() || choices->empty()) {
        throw ProtocolError("reply has no choices");
    }
    const auto& choice = (*choices)[0];
    auto message = choice.find("message");
    if (message == choice.end() || !message->is_object()) throw ProtocolError("choice has no message");

    ChatResponse r;
    try {
        r.content = opt_field<std::string>(*message, "content").value_or("");
        if (auto calls = message->find("tool_calls"); calls != message->end() && calls->is_array()) {
            for (std::size_t i = 0; i < calls->size(); ++i) {
                const auto& c = (*calls)[i];
                const auto& fn = c.at("function");
                r.tool_calls.push_back(ToolCall{opt_field<std::string>(c, "id").value_or(fmt::format("call_{}", i)),
                                                fn.at("name").get<std::string>(),
                                                arguments_text(fn.value("arguments", Json("{}")))});
            }
        }
        r.finish_reason = parse_finish(opt_field<std::string>(choice, "finish_reason").value_or("stop"));
        if (auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
            r.usage.prompt_tokens = usage->value("prompt_tokens", TokenCount{0});
            r.usage.completion_tokens = usage->value("completion_tokens", TokenCount{0});
            r.usage.reported = usage->contains("completion_tokens");
        }
    } catch (const Json::exception& e) {
        throw ProtocolError(std::string("malformed reply: ") + e.what());
    }
    if (r.finish_reason == FinishReason::tool_call && r.tool_calls.empty()) {
        throw ProtocolError("finish_reason tool_calls without any tool call");
    }
    if (!r.tool_calls.empty() && r.finish_reason == FinishReason::stop) r.finish_reason = FinishReason::tool_call;
    if (!r.usage.reported) r.usage.completion_tokens = generated_tokens(r);
    return r;
}

double backoff_delay(const RetryPolicy& policy, int attempt) {
    return policy.base_delay_s * std::pow(policy.factor, attempt);
}

RateLimiter::RateLimiter(double rate_per_s)
    : rate_(rate_per_s), capacity_(std::max(1.0, rate_per_s)), tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    while (true) {
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

OpenAiClient::OpenAiClient(OpenAiConfig config)
    : config_(std::move(config)), limiter_(config_.rate_limit_rps),
      sleeper_([](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }) {
    const auto scheme_end = config_.base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = config_.base_url.find('/', host_start);
    host_ = config_.base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

ChatResponse OpenAiClient::chat(const ChatRequest& request) {
    Json body = to_wire(request, config_.model);
    for (const auto& [k, v] : config_.extra_body.items()) body[k] = v;
    const std::string payload = body.dump(-1, ' ', false, Json::error_handler_t::replace);

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> jitter(0.0, config_.retry.jitter);

    int last_status = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
        if (attempt > 0) sleeper_(backoff_delay(config_.retry, attempt - 1) * (1.0 + jitter(rng)));
        limiter_.acquire();

        httplib::Client http(host_);
        const auto secs = static_cast<time_t>(config_.timeout_s);
        http.set_connection_timeout(std::min<time_t>(secs, 30), 0);
        http.set_read_timeout(secs, 0);
        http.set_write_timeout(secs, 0);
        auto res = http.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_status = 0;
            last_error = httplib::to_string(res.error());
            continue;
        }
        last_status = res->status;
        if (res->status == 200) {
            const auto reply = Json::parse(res->body, nullptr, false);
            if (reply.is_discarded()) throw ProtocolError("reply body is not JSON");
            return from_wire(reply);
        }
        last_error = res->body.substr(0, 300);
        if (!transient_status(res->status)) break;
    }
    throw TransportError(last_status, fmt::format("chat request to {} failed (status {}): {}", host_, last_status,
                                                  last_error));
}

bool MockMatcher::matches(const ChatRequest& request) const {
    const ChatMessage* last = request.messages.empty() ? nullptr : &request.messages.back();
    if (contains) {
        const bool hit = std::any_of(request.messages.begin(), request.messages.end(), [&](const ChatMessage& m) {
            return m.content.find(*contains) != std::string::npos;
        });
        if (!hit) return false;
    }
    if (last_contains && (!last || last->content.find(*last_contains) == std::string::npos)) return false;
    if (last_role && (!last || last->role != *last_role)) return false;
    if (turn) {
        const auto n = std::count_if(request.messages.begin(), request.messages.end(), [](const ChatMessage& m) {
            return m.role == "assistant" || m.role == "tool";
        });
        if (n != *turn) return false;
    }
    if (tools && (*tools != !request.tools.empty())) return false;
    if (min_max_tokens && request.max_tokens < *min_max_tokens) return false;
    if (max_max_tokens && request.max_tokens > *max_max_tokens) return false;
    return true;
}

MockClient::MockClient(std::vector<MockEntry> entries, std::string model)
    : entries_(std::move(entries)), model_(std::move(model)) {}

ChatResponse MockClient::chat(const ChatRequest& request) {
    const auto it = std::find_if(entries_.begin(), entries_.end(),
                                 [&](const MockEntry& e) { return e.match.matches(request); });
    if (it == entries_.end()) throw ScriptedMissError("no mock entry matches request: " + summarize(request));

    ChatResponse r = it->response;
    for (std::size_t i = 0; i < r.tool_calls.size(); ++i) {
        if (r.tool_calls[i].id.empty()) r.tool_calls[i].id = fmt::format("call_{}", i);
    }
    r.finish_reason = it->scripted_finish.value_or(r.tool_calls.empty() ? FinishReason::stop : FinishReason::tool_call);

    // Stop sequences cut the content at their first occurrence, excluded.
    std::size_t cut = std::string::npos;
    for (const auto& s : request.stop) {
        if (!s.empty()) cut = std::min(cut, r.content.find(s));
    }
    if (cut != std::string::npos) {
        r.content.resize(cut);
        r.tool_calls.clear();
        r.finish_reason = FinishReason::stop;
    }

    if (!it->scripted_usage) {
        r.usage.completion_tokens = generated_tokens(r);
        r.usage.prompt_tokens = prompt_tokens(request);
        r.usage.reported = false;
    }
    if (r.usage.completion_tokens > request.max_tokens) {
        const auto limit = std::max<TokenCount>(request.max_tokens, 0);
        r.content = std::string(Tokenizer::truncate(r.content, limit));
        r.tool_calls.clear();
        r.finish_reason = FinishReason::length;
        r.usage.completion_tokens = it->scripted_usage ? limit : Tokenizer::count(r.content);
    }
    return r;
}

MockEntry mock_entry_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("entry", "expected an object");
    MockEntry e;
    const Json match = j.value("match", Json::object());
    if (!match.is_object()) throw ValidationError("match", "expected an object");
    try {
        e.match.contains = opt_field<std::string>(match, "contains");
        e.match.last_contains = opt_field<std::string>(match, "last_contains");
        e.match.last_role = opt_field<std::string>(match, "last_role");
        e.match.turn = opt_field<int>(match, "turn");
        e.match.tools = opt_field<bool>(match, "tools");
        e.match.min_max_tokens = opt_field<TokenCount>(match, "min_max_tokens");
        e.match.max_max_tokens = opt_field<TokenCount>(match, "max_max_tokens");
    } catch (const Json::exception& ex) {
        throw ValidationError("match", ex.what());
    }
    auto resp = j.find("response");
    if (resp == j.end() || !resp->is_object()) throw ValidationError("response", "missing");
    try {
        e.response.content = opt_field<std::string>(*resp, "content").value_or("");
        if (auto calls = resp->find("tool_calls"); calls != resp->end()) {
            for (const auto& c : *calls) {
                e.response.tool_calls.push_back(ToolCall{c.value("id", std::string{}), c.at("name").get<std::string>(),
                                                         arguments_text(c.value("arguments", Json::object()))});
            }
        }
        if (auto fr = opt_field<std::string>(*resp, "finish_reason")) e.scripted_finish = parse_finish(*fr);
        if (auto usage = resp->find("usage"); usage != resp->end() && usage->is_object()) {
            e.scripted_usage = true;
            e.response.usage.prompt_tokens = usage->value("prompt_tokens", TokenCount{0});
            e.response.usage.completion_tokens = usage->at("completion_tokens").get<TokenCount>();
            e.response.usage.reported = true;
        }
    } catch (const Json::exception& ex) {
        throw ValidationError("response", ex.what());
    }
    return e;
}

Json to_json(const MockEntry& e) {
    Json match = Json::object();
    if (e.match.contains) match["contains"] = *e.match.contains;
    if (e.match.last_contains) match["last_contains"] = *e.match.last_contains;
    if (e.match.last_role) match["last_role"] = *e.match.last_role;
    if (e.match.turn) match["turn"] = *e.match.turn;
    if (e.match.tools) match["tools"] = *e.match.tools;
    if (e.match.min_max_tokens) match["min_max_tokens"] = *e.match.min_max_tokens;
    if (e.match.max_max_tokens) match["max_max_tokens"] = *e.match.max_max_tokens;
    Json resp;
    resp["content"] = e.response.content;
    if (!e.response.tool_calls.empty()) {
        Json calls = Json::array();
        for (const auto& c : e.response.tool_calls) {
            Json call{{"name", c.name}, {"arguments", c.arguments}};
            if (!c.id.empty()) call["id"] = c.id;
            calls.push_back(std::move(call));
        }
        resp["tool_calls"] = std::move(calls);
    }
    if (e.scripted_finish) resp["finish_reason"] = to_string(*e.scripted_finish);
    if (e.scripted_usage) {
        resp["usage"] = Json{{"prompt_tokens", e.response.usage.prompt_tokens},
                             {"completion_tokens", e.response.usage.completion_tokens}};
    }
    return Json{{"match", std::move(match)}, {"response", std::move(resp)}};
}

MockClient load_mock(const std::filesystem::path& script) {
    const auto bytes = read_file(script);
    std::vector<MockEntry> entries;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < bytes.size()) {
        auto nl = bytes.find('\n', start);
        if (nl == std::string::npos) nl = bytes.size();
        const auto line = std::string_view(bytes).substr(start, nl - start);
        start = nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(script.string(), line_no, "not valid JSON");
        try {
            entries.push_back(mock_entry_from_json(j));
        } catch (const ValidationError& e) {
            throw ParseError(script.string(), line_no, e.what());
        }
    }
    return MockClient(std::move(entries));
}

}  // namespace tirbench
