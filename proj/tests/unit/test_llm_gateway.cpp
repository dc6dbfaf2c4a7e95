#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "agro/llm_gateway.hpp"
#include "expect_error.hpp"
#include "mock_server.hpp"

using namespace agro;
using namespace agro::llm;
using agro::testing::code_of;
using nlohmann::json;

namespace {

const RetryPolicy kFast{0.001, 2, 0};

ModelEndpoint ep(ModelRole role, const std::string& base, int retries = 0, double timeout = 2) {
    return {role, base, "model-" + std::string(role_name(role)), "secret", timeout, retries, 2};
}

void reply_with(httplib::Response& res, const json& content) {
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                    "application/json");
}

}  // namespace

TEST_CASE("role names round trip") {
    for (auto role : kAllRoles) CHECK(parse_role(role_name(role)) == role);
    CHECK(!parse_role("oracle"));
    CHECK(default_params(ModelRole::Triage).temperature == 0);
    CHECK(default_params(ModelRole::Judge).temperature == 0);
    CHECK(default_params(ModelRole::Final).temperature == 0.2);
}

TEST_CASE("messages serialize to the OpenAI wire form") {
    auto plain = to_json(ChatMessage::system("be brief"));
    CHECK(plain == json{{"role", "system"}, {"content", "be brief"}});

    ChatMessage img{ChatMessage::Role::User,
                    {{ContentPart::Kind::Text, "look"}, {ContentPart::Kind::ImageUrl, "data:image/png;base64,AA=="}}};
    auto j = to_json(img);
    CHECK(j["content"].size() == 2);
    CHECK(j["content"][0] == json{{"type", "text"}, {"text", "look"}});
    CHECK(j["content"][1]["image_url"]["url"] == "data:image/png;base64,AA==");
    CHECK(img.text() == "look");
    CHECK(to_json(std::vector<ChatMessage>{ChatMessage::user("a"), ChatMessage::assistant("b")}).size() == 2);
}

TEST_CASE("chat completion sends model, params and auth") {
    agro::testing::MockServer server;
    std::string auth;
    server.post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        reply_with(res, "hello");
    });
    server.start();
    Gateway gw({ep(ModelRole::Final, server.url("/v1"))}, kFast);

    CHECK(gw.chat_complete(ModelRole::Final, {ChatMessage::user("hi")}) == "hello");
    auto sent = json::parse(server.requests().at(0).body);
    CHECK(sent["model"] == "model-final");
    CHECK(sent["temperature"] == 0.2);
    CHECK(sent["messages"][0]["content"] == "hi");
    CHECK(auth == "Bearer secret");

    CHECK(gw.chat_complete(ModelRole::Final, {ChatMessage::user("hi")}, ChatParams{0.0, 10}) == "hello");
    CHECK(json::parse(server.requests().at(1).body)["max_tokens"] == 10);
}

TEST_CASE("array content and malformed completions") {
    agro::testing::MockServer server;
    std::string body;
    server.post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(body, "application/json");
    });
    server.start();
    Gateway gw({ep(ModelRole::Triage, server.url("/v1"))}, kFast);
    auto ask = [&] { return gw.chat_complete(ModelRole::Triage, {ChatMessage::user("q")}); };

    body = json{{"choices", {{{"message", {{"content", {{{"type", "text"}, {"text", "a"}}, {{"type", "text"}, {"text", "b"}}}}}}}}}}.dump();
    CHECK(ask() == "ab");
    body = "not json";
    CHECK(code_of(ask) == Errc::MalformedCompletion);
    body = R"({"choices": []})";
    CHECK(code_of(ask) == Errc::MalformedCompletion);
    body = R"({"choices": [{"message": {"content": 7}}]})";
    CHECK(code_of(ask) == Errc::MalformedCompletion);
}

TEST_CASE("5xx and transport failures are retried, 4xx are not") {
    agro::testing::MockServer server;
    std::atomic<int> calls{0};
    int fail_first = 2, status = 503;
    server.post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls <= fail_first) {
            res.status = status;
            return;
        }
        reply_with(res, "ok");
    });
    server.start();
    Gateway gw({ep(ModelRole::Final, server.url("/v1"), 2)}, kFast);

    CHECK(gw.chat_complete(ModelRole::Final, {ChatMessage::user("q")}) == "ok");
    CHECK(calls == 3);

    calls = 0;
    fail_first = 5;
    CHECK(code_of([&] { gw.chat_complete(ModelRole::Final, {ChatMessage::user("q")}); }) == Errc::GatewayHttpError);
    CHECK(calls == 3);

    calls = 0;
    status = 400;
    CHECK(code_of([&] { gw.chat_complete(ModelRole::Final, {ChatMessage::user("q")}); }) == Errc::GatewayHttpError);
    CHECK(calls == 1);

    Gateway dead({ep(ModelRole::Final, "http://127.0.0.1:" + std::to_string(agro::testing::closed_port()) + "/v1", 1)},
                 kFast);
    CHECK(code_of([&] { dead.chat_complete(ModelRole::Final, {ChatMessage::user("q")}); }) == Errc::GatewayTimeout);
    CHECK(dead.attempts() == 2);
}

TEST_CASE("slow endpoints time out") {
    agro::testing::MockServer server;
    server.post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1500));
        reply_with(res, "late");
    });
    server.start();
    Gateway gw({ep(ModelRole::Final, server.url("/v1"), 0, 0.3)}, kFast);
    CHECK(code_of([&] { gw.chat_complete(ModelRole::Final, {ChatMessage::user("q")}); }) == Errc::GatewayTimeout);
}

TEST_CASE("embeddings are aligned with their inputs") {
    agro::testing::MockServer server;
    json data;
    server.post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    server.start();
    Gateway gw({ep(ModelRole::Embedding, server.url("/v1"))}, kFast);

    data = json::array({{{"index", 1}, {"embedding", {0.0, 1.0}}}, {{"index", 0}, {"embedding", {1.0, 0.0}}}});
    auto out = gw.embed_texts({"first", "second"});
    REQUIRE(out.size() == 2);
    CHECK(out[0].values == std::vector<double>{1.0, 0.0});
    CHECK(out[1].values == std::vector<double>{0.0, 1.0});
    CHECK(json::parse(server.requests().at(0).body)["input"] == json::array({"first", "second"}));

    data = json::array({{{"embedding", {1.0}}}});
    CHECK(code_of([&] { gw.embed_texts({"a", "b"}); }) == Errc::LengthMismatch);
    data = json::array({{{"embedding", {1.0}}}, {{"embedding", {1.0, 2.0}}}});
    CHECK(code_of([&] { gw.embed_texts({"a", "b"}); }) == Errc::DimInconsistency);
    CHECK(code_of([&] { gw.embed_texts({}); }) == Errc::InvalidArgument);
}

TEST_CASE("rerank scores are aligned by index") {
    agro::testing::MockServer server;
    json results;
    server.post("/v1/rerank", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"results", results}}.dump(), "application/json");
    });
    server.start();
    Gateway gw({ep(ModelRole::Reranker, server.url("/v1"))}, kFast);

    results = json::array({{{"index", 1}, {"relevance_score", 0.9}}, {{"index", 0}, {"relevance_score", 0.1}}});
    CHECK(gw.rerank_pairs("q", {"a", "b"}) == std::vector<double>{0.1, 0.9});
    CHECK(gw.rerank_pairs("q", {}).empty());
    results = json::array({{{"index", 0}, {"relevance_score", 0.1}}});
    CHECK(code_of([&] { gw.rerank_pairs("q", {"a", "b"}); }) == Errc::LengthMismatch);
}

TEST_CASE("unconfigured roles and invalid endpoints") {
    Gateway gw({}, kFast);
    CHECK(!gw.has(ModelRole::Judge));
    CHECK(code_of([&] { gw.endpoint(ModelRole::Judge); }) == Errc::UnknownModelRole);
    CHECK(code_of([&] { gw.chat_complete(ModelRole::Judge, {ChatMessage::user("q")}); }) == Errc::UnknownModelRole);
    CHECK(!gw.probe(ModelRole::Judge));

    auto bad = ep(ModelRole::Final, "http://x");
    bad.timeout_s = 0;
    CHECK(code_of([&] { Gateway g({bad}); }) == Errc::ConfigError);

    Gateway chat({ep(ModelRole::Embedding, "http://127.0.0.1:1/v1")}, kFast);
    CHECK(code_of([&] { chat.chat_complete(ModelRole::Embedding, {ChatMessage::user("q")}); }) ==
          Errc::InvalidArgument);
}

TEST_CASE("probe reports reachability") {
    agro::testing::MockServer server;
    server.get("/v1/models", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    server.start();
    Gateway gw({ep(ModelRole::Final, server.url("/v1")),
                ep(ModelRole::Judge, "http://127.0.0.1:" + std::to_string(agro::testing::closed_port()) + "/v1")},
               kFast);
    CHECK(gw.probe(ModelRole::Final, 1));
    CHECK(!gw.probe(ModelRole::Judge, 1));
}
