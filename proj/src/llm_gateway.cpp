#include "agro/llm_gateway.hpp"

#include <cmath>
#include <random>
#include <semaphore>
#include <thread>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/http.hpp"

namespace agro::llm {

using nlohmann::json;

std::string_view role_name(ModelRole role) noexcept {
    switch (role) {
        case ModelRole::Final: return "final";
        case ModelRole::Multimodal: return "multimodal";
        case ModelRole::Embedding: return "embedding";
        case ModelRole::Reranker: return "reranker";
        case ModelRole::Triage: return "triage";
        case ModelRole::Judge: return "judge";
    }
    return "?";
}

std::optional<ModelRole> parse_role(std::string_view name) {
    for (auto role : kAllRoles)
        if (role_name(role) == name) return role;
    return std::nullopt;
}

std::string ChatMessage::text() const {
    std::string out;
    for (const auto& p : parts)
        if (p.kind == ContentPart::Kind::Text) out += p.value;
    return out;
}

bool ChatMessage::has_image() const {
    for (const auto& p : parts)
        if (p.kind == ContentPart::Kind::ImageUrl) return true;
    return false;
}

std::string_view message_role_name(ChatMessage::Role role) noexcept {
    switch (role) {
        case ChatMessage::Role::System: return "system";
        case ChatMessage::Role::User: return "user";
        case ChatMessage::Role::Assistant: return "assistant";
    }
    return "user";
}

json to_json(const ChatMessage& msg) {
    json out{{"role", message_role_name(msg.role)}};
    if (!msg.has_image()) {
        out["content"] = msg.text();
        return out;
    }
    json parts = json::array();
    for (const auto& p : msg.parts) {
        if (p.kind == ContentPart::Kind::Text)
            parts.push_back({{"type", "text"}, {"text", p.value}});
        else
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", p.value}}}});
    }
    out["content"] = std::move(parts);
    return out;
}

json to_json(const std::vector<ChatMessage>& msgs) {
    json arr = json::array();
    for (const auto& m : msgs) arr.push_back(to_json(m));
    return arr;
}

ChatParams default_params(ModelRole role) {
    switch (role) {
        case ModelRole::Triage:
        case ModelRole::Judge: return {0.0, 512};
        case ModelRole::Multimodal: return {0.2, 1024};
        default: return {0.2, 2048};
    }
}

struct Gateway::Slot {
    ModelEndpoint endpoint;
    std::counting_semaphore<1024> in_flight;

    explicit Slot(ModelEndpoint ep)
        : endpoint(std::move(ep)), in_flight(std::clamp(endpoint.max_in_flight, 1, 1024)) {}
};

Gateway::Gateway(std::vector<ModelEndpoint> endpoints, RetryPolicy retry) : retry_(retry) {
    for (auto& ep : endpoints) {
        if (!(ep.timeout_s > 0)) throw Error(Errc::ConfigError, std::string(role_name(ep.role)) + ": timeout_s must be positive");
        if (ep.max_retries < 0) throw Error(Errc::ConfigError, std::string(role_name(ep.role)) + ": max_retries must be >= 0");
        auto role = ep.role;
        slots_[role] = std::make_unique<Slot>(std::move(ep));
    }
}

Gateway::~Gateway() = default;

bool Gateway::has(ModelRole role) const noexcept { return slots_.count(role) != 0; }

const ModelEndpoint& Gateway::endpoint(ModelRole role) const {
    auto it = slots_.find(role);
    if (it == slots_.end())
        throw Error(Errc::UnknownModelRole, "no model endpoint configured for role " + std::string(role_name(role)));
    return it->second->endpoint;
}

std::vector<ModelEndpoint> Gateway::endpoints() const {
    std::vector<ModelEndpoint> out;
    for (const auto& [_, slot] : slots_) out.push_back(slot->endpoint);
    return out;
}

namespace {

double jittered(double base, double jitter) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> dist(1.0 - jitter, 1.0 + jitter);
    return base * dist(rng);
}

}  // namespace

std::string Gateway::post_json(ModelRole role, const std::string& path, const json& body) const {
    endpoint(role);
    Slot& slot = *slots_.at(role);
    const auto& ep = slot.endpoint;
    auto url = http::parse_url(ep.base_url);
    if (!url) throw Error(Errc::ConfigError, "invalid base_url for " + std::string(role_name(role)) + ": " + ep.base_url);
    const std::string target = url->origin() + url->join(path);
    http::Headers headers{{"Accept", "application/json"}};
    if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
    const std::string payload = body.dump();

    slot.in_flight.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{slot.in_flight};

    http::Response last;
    for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
        if (attempt > 0) {
            double delay = jittered(retry_.backoff_base_s * std::pow(retry_.multiplier, attempt - 1), retry_.jitter);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        ++attempts_;
        last = http::post(target, payload, "application/json", headers, ep.timeout_s);
        if (last.ok()) return last.body;
        bool retryable = last.transport != http::Transport::Ok || last.status >= 500;
        spdlog::warn("gateway[{}]: attempt {} failed ({})", role_name(role), attempt + 1,
                     last.transport == http::Transport::Ok ? "HTTP " + std::to_string(last.status) : last.transport_error);
        if (!retryable) break;
    }
    if (last.transport != http::Transport::Ok)
        throw Error(Errc::GatewayTimeout, std::string(role_name(role)) + " endpoint unavailable: " + last.transport_error);
    throw Error(Errc::GatewayHttpError,
                std::string(role_name(role)) + " endpoint returned HTTP " + std::to_string(last.status));
}

std::string Gateway::chat_complete(ModelRole role, const std::vector<ChatMessage>& messages,
                                   std::optional<ChatParams> params) const {
    if (role == ModelRole::Embedding || role == ModelRole::Reranker)
        throw Error(Errc::InvalidArgument, "chat completion is not available for role " + std::string(role_name(role)));
    if (messages.empty()) throw Error(Errc::InvalidArgument, "chat completion needs at least one message");
    const auto p = params.value_or(default_params(role));
    json body{{"model", endpoint(role).model_name},
              {"messages", to_json(messages)},
              {"temperature", p.temperature},
              {"max_tokens", p.max_tokens},
              {"stream", false}};
    auto text = post_json(role, "/chat/completions", body);

    auto malformed = [&](const std::string& why) {
        return Error(Errc::MalformedCompletion, std::string(role_name(role)) + " completion malformed: " + why);
    };
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error&) {
        throw malformed("body is not JSON");
    }
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
        throw malformed("missing choices");
    const auto& choice = doc["choices"][0];
    if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object())
        throw malformed("choice without message");
    const auto& content = choice["message"].value("content", json());
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string out;
        for (const auto& part : content)
            if (part.is_object() && part.value("type", "") == "text") out += part.value("text", "");
        return out;
    }
    throw malformed("message content is not text");
}

std::vector<EmbeddingVector> Gateway::embed_texts(const std::vector<std::string>& texts) const {
    if (texts.empty()) throw Error(Errc::InvalidArgument, "embed_texts needs at least one input");
    json body{{"model", endpoint(ModelRole::Embedding).model_name}, {"input", texts}};
    auto text = post_json(ModelRole::Embedding, "/embeddings", body);

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error&) {
        throw Error(Errc::MalformedCompletion, "embedding response is not JSON");
    }
    if (!doc.contains("data") || !doc["data"].is_array())
        throw Error(Errc::MalformedCompletion, "embedding response lacks data array");
    const auto& data = doc["data"];
    if (data.size() != texts.size())
        throw Error(Errc::LengthMismatch, "embedding response has " + std::to_string(data.size()) + " vectors for " +
                                              std::to_string(texts.size()) + " inputs");

    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& item = data[i];
        std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : i;
        if (slot >= out.size() || seen[slot]) throw Error(Errc::LengthMismatch, "embedding indices are inconsistent");
        seen[slot] = true;
        if (!item.contains("embedding") || !item["embedding"].is_array())
            throw Error(Errc::MalformedCompletion, "embedding item lacks a vector");
        for (const auto& v : item["embedding"]) {
            if (!v.is_number()) throw Error(Errc::MalformedCompletion, "embedding contains a non-number");
            double x = v.get<double>();
            if (!std::isfinite(x)) throw Error(Errc::MalformedCompletion, "embedding contains a non-finite value");
            out[slot].values.push_back(x);
        }
    }
    for (const auto& v : out)
        if (v.dim() != out.front().dim() || v.dim() == 0)
            throw Error(Errc::DimInconsistency, "embedding vectors have inconsistent dimensions");
    return out;
}

std::vector<double> Gateway::rerank_pairs(const std::string& query, const std::vector<std::string>& passages) const {
    if (passages.empty()) return {};
    json body{{"model", endpoint(ModelRole::Reranker).model_name},
              {"query", query},
              {"documents", passages},
              {"top_n", passages.size()}};
    auto text = post_json(ModelRole::Reranker, "/rerank", body);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error&) {
        throw Error(Errc::MalformedCompletion, "rerank response is not JSON");
    }
    if (!doc.contains("results") || !doc["results"].is_array())
        throw Error(Errc::MalformedCompletion, "rerank response lacks results array");
    const auto& results = doc["results"];
    if (results.size() != passages.size())
        throw Error(Errc::LengthMismatch, "reranker scored " + std::to_string(results.size()) + " of " +
                                              std::to_string(passages.size()) + " passages");
    std::vector<double> scores(passages.size(), 0.0);
    std::vector<bool> seen(passages.size(), false);
    for (const auto& r : results) {
        if (!r.contains("index") || !r.contains("relevance_score"))
            throw Error(Errc::MalformedCompletion, "rerank result lacks index or relevance_score");
        auto idx = r["index"].get<std::size_t>();
        if (idx >= scores.size() || seen[idx]) throw Error(Errc::LengthMismatch, "rerank indices are inconsistent");
        seen[idx] = true;
        scores[idx] = r["relevance_score"].get<double>();
    }
    return scores;
}

bool Gateway::probe(ModelRole role, double timeout_s) const {
    if (!has(role)) return false;
    auto url = http::parse_url(endpoint(role).base_url);
    if (!url) return false;
    auto resp = http::get(url->origin() + url->join("/models"), {}, timeout_s);
    return resp.transport == http::Transport::Ok;
}

}  // namespace agro::llm
