#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <thread>

#include "fixtures.hpp"
#include "tirbench/client.hpp"
#include "tirbench/errors.hpp"
#include "tirbench/tokenizer.hpp"

using namespace tirbench;
using testing::entry;

namespace {

ChatRequest ask(std::string text, TokenCount max_tokens = 1024) {
    ChatRequest r;
    r.messages = {ChatMessage{"user", std::move(text), {}, {}}};
    r.max_tokens = max_tokens;
    return r;
}

/// Chat-completions endpoint on a loopback port, answering from `handler`.
class FakeEndpoint {
public:
    explicit FakeEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }

    OpenAiConfig config() const {
        OpenAiConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        c.model = "served-model";
        c.api_key = "secret";
        c.timeout_s = 5;
        c.retry.max_retries = 3;
        return c;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string reply_body(std::string content) {
    return Json{{"choices", Json::array({Json{{"message", Json{{"role", "assistant"}, {"content", content}}},
                                              {"finish_reason", "stop"}}})},
                {"usage", Json{{"prompt_tokens", 12}, {"completion_tokens", 3}}}}
        .dump();
}

}  // namespace

TEST_SUITE("client") {

TEST_CASE("scripted ping answers pong") {
    MockClient mock({entry({{"contains", "ping"}}, {{"content", "pong"}})});
    const auto r = mock.chat(ask("ping"));
    CHECK(r.content == "pong");
    CHECK(r.finish_reason == FinishReason::stop);
    CHECK_FALSE(r.usage.reported);
    CHECK(r.usage.completion_tokens == Tokenizer::count("pong"));
}

TEST_CASE("empty script misses") {
    MockClient mock({});
    CHECK_THROWS_AS(mock.chat(ask("anything")), ScriptedMissError);
}

TEST_CASE("scripted tool call") {
    MockClient mock({entry({{"tools", true}},
                           {{"tool_calls", Json::array({Json{{"name", "run_python"},
                                                             {"arguments", Json{{"code", "print(1)"}}}}})}})});
    auto req = ask("compute");
    req.tools = {run_python_tool()};
    const auto r = mock.chat(req);
    CHECK(r.finish_reason == FinishReason::tool_call);
    REQUIRE(r.tool_calls.size() == 1);
    CHECK(r.tool_calls[0].name == "run_python");
    CHECK(code_argument(r.tool_calls[0]) == "print(1)");
    CHECK_FALSE(r.tool_calls[0].id.empty());
    CHECK_THROWS_AS(mock.chat(ask("compute")), ScriptedMissError);
}

TEST_CASE("long replies are cut at max_tokens") {
    MockClient mock({entry(Json::object(), {{"content", std::string(400, 'a') + " [[1]]"}})});
    const auto r = mock.chat(ask("go", 8));
    CHECK(r.finish_reason == FinishReason::length);
    CHECK(r.usage.completion_tokens <= 8);
    CHECK(Tokenizer::count(r.content) == r.usage.completion_tokens);
}

TEST_CASE("stop strings cut the reply before the stop") {
    MockClient mock({entry(Json::object(), {{"content", "code:\n```python\nprint(1)\n```\nmore"}})});
    auto req = ask("go");
    req.stop = {"```\n"};
    const auto r = mock.chat(req);
    CHECK(r.content == "code:\n```python\nprint(1)\n");
    CHECK(r.finish_reason == FinishReason::stop);
}

TEST_CASE("matchers") {
    MockClient mock({entry({{"turn", 2}, {"last_role", "tool"}}, {{"content", "after tool"}}),
                     entry({{"last_contains", "Final"}}, {{"content", "forced"}}),
                     entry({{"min_max_tokens", 100}}, {{"content", "roomy"}}),
                     entry({{"max_max_tokens", 99}}, {{"content", "tight"}})});
    CHECK(mock.chat(ask("q", 100)).content == "roomy");
    CHECK(mock.chat(ask("q", 50)).content == "tight");
    CHECK(mock.chat(ask("Final Answer:", 50)).content == "forced");

    auto req = ask("q");
    req.messages.push_back(ChatMessage{"assistant", "", {ToolCall{"c", "run_python", "{}"}}, {}});
    req.messages.push_back(ChatMessage{"tool", "out", {}, "c"});
    CHECK(mock.chat(req).content == "after tool");
}

TEST_CASE("scripted usage is reported as such") {
    MockClient mock({entry(Json::object(), {{"content", "hello"}, {"usage", {{"completion_tokens", 7}}}})});
    const auto r = mock.chat(ask("x"));
    CHECK(r.usage.reported);
    CHECK(r.usage.completion_tokens == 7);
}

TEST_CASE("replays are deterministic") {
    testing::TempDir dir;
    testing::write_text(dir / "m.jsonl", R"({"match": {"contains": "a"}, "response": {"content": "A"}}

{"match": {}, "response": {"content": "other"}}
)");
    auto m1 = load_mock(dir / "m.jsonl");
    auto m2 = load_mock(dir / "m.jsonl");
    CHECK(m1.size() == 2);
    for (const auto* q : {"a", "b", "a"}) {
        const auto r1 = m1.chat(ask(q));
        const auto r2 = m2.chat(ask(q));
        CHECK(r1.content == r2.content);
        CHECK(r1.usage.completion_tokens == r2.usage.completion_tokens);
    }
    CHECK(m1.chat(ask("a")).content == "A");
    CHECK(m1.chat(ask("b")).content == "other");
}

TEST_CASE("malformed scripts report the line") {
    testing::TempDir dir;
    testing::write_text(dir / "m.jsonl", "{\"match\": {}, \"response\": {\"content\": \"A\"}}\n{\"match\": {}}\n");
    try {
        load_mock(dir / "m.jsonl");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("wire format") {
    ChatRequest req = ask("hi", 64);
    req.tools = {run_python_tool()};
    req.stop = {"```\n"};
    req.messages.push_back(ChatMessage{"assistant", "", {ToolCall{"c1", "run_python", R"j({"code":"print(1)"})j"}}, {}});
    req.messages.push_back(ChatMessage{"tool", "1", {}, "c1"});
    const auto body = to_wire(req, "m");
    CHECK(body["model"] == "m");
    CHECK(body["max_tokens"] == 64);
    CHECK(body["tools"][0]["function"]["name"] == "run_python");
    CHECK(body["messages"][1]["tool_calls"][0]["function"]["arguments"] == R"j({"code":"print(1)"})j");
    CHECK(body["messages"][2]["tool_call_id"] == "c1");
    CHECK(body["stop"][0] == "```\n");
    CHECK_FALSE(body.contains("continue_final_message"));

    req.messages.push_back(ChatMessage{"assistant", "prefill", {}, {}});
    CHECK(to_wire(req, "m")["continue_final_message"] == true);
}

TEST_CASE("replies are checked against the contract") {
    CHECK_THROWS_AS(from_wire(Json{{"choices", Json::array()}}), ProtocolError);
    CHECK_THROWS_AS(from_wire(Json::parse(
                        R"({"choices":[{"message":{"content":""},"finish_reason":"tool_calls"}]})")),
                    ProtocolError);
    const auto r = from_wire(Json::parse(
        R"({"choices":[{"message":{"content":null,"tool_calls":[{"id":"x","function":{"name":"run_python","arguments":"{\"code\":\"1\"}"}}]},"finish_reason":"tool_calls"}]})"));
    CHECK(r.finish_reason == FinishReason::tool_call);
    CHECK(r.tool_calls[0].arguments == R"({"code":"1"})");
    CHECK_FALSE(r.usage.reported);
    CHECK(r.usage.completion_tokens == Tokenizer::count(R"({"code":"1"})"));
}

TEST_CASE("backoff doubles from the base delay") {
    RetryPolicy p;
    CHECK(backoff_delay(p, 0) == 1.0);
    CHECK(backoff_delay(p, 1) == 2.0);
    CHECK(backoff_delay(p, 4) == 16.0);
    CHECK(p.max_retries == 5);
}

TEST_CASE("endpoint client retries transient failures") {
    std::atomic<int> hits{0};
    std::string seen_auth;
    Json seen_body;
    FakeEndpoint server([&](const httplib::Request& req, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 503;
            res.set_content("busy", "text/plain");
            return;
        }
        seen_auth = req.get_header_value("Authorization");
        seen_body = Json::parse(req.body);
        res.set_content(reply_body("pong"), "application/json");
    });
    auto config = server.config();
    config.extra_body = Json{{"chat_template_kwargs", {{"enable_thinking", false}}}};
    OpenAiClient client(config);
    std::vector<double> sleeps;
    client.set_sleeper([&](double s) { sleeps.push_back(s); });
    const auto r = client.chat(ask("ping"));
    CHECK(r.content == "pong");
    CHECK(r.usage.reported);
    CHECK(r.usage.completion_tokens == 3);
    CHECK(hits == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0] >= 1.0);
    CHECK(sleeps[0] <= 1.25);
    CHECK(sleeps[1] >= 2.0);
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_body["model"] == "served-model");
    CHECK(seen_body["chat_template_kwargs"]["enable_thinking"] == false);
}

TEST_CASE("endpoint client gives up with the last status") {
    std::atomic<int> hits{0};
    FakeEndpoint server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    OpenAiClient client(server.config());
    client.set_sleeper([](double) {});
    try {
        client.chat(ask("x"));
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.status() == 500);
    }
    CHECK(hits == 4);
}

TEST_CASE("client errors are not retried") {
    std::atomic<int> hits{0};
    FakeEndpoint server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    OpenAiClient client(server.config());
    client.set_sleeper([](double) {});
    CHECK_THROWS_AS(client.chat(ask("x")), TransportError);
    CHECK(hits == 1);
}

TEST_CASE("garbage replies are protocol errors") {
    FakeEndpoint server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content("{not json", "application/json");
    });
    OpenAiClient client(server.config());
    client.set_sleeper([](double) {});
    CHECK_THROWS_AS(client.chat(ask("x")), ProtocolError);
}

TEST_CASE("unreachable endpoints are transport errors") {
    OpenAiConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.retry.max_retries = 1;
    c.timeout_s = 2;
    OpenAiClient client(c);
    client.set_sleeper([](double) {});
    try {
        client.chat(ask("x"));
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.status() == 0);
    }
}

}
