#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace agro::llm {

enum class ModelRole { Final, Multimodal, Embedding, Reranker, Triage, Judge };

std::string_view role_name(ModelRole role) noexcept;
std::optional<ModelRole> parse_role(std::string_view name);
inline constexpr ModelRole kAllRoles[] = {ModelRole::Final,    ModelRole::Multimodal, ModelRole::Embedding,
                                          ModelRole::Reranker, ModelRole::Triage,     ModelRole::Judge};

struct ModelEndpoint {
    ModelRole role = ModelRole::Final;
    std::string base_url;  // e.g. http://localhost:4000/v1
    std::string model_name;
    std::string api_key;
    double timeout_s = 120;
    int max_retries = 2;
    int max_in_flight = 8;
};

struct ContentPart {
    enum class Kind { Text, ImageUrl } kind = Kind::Text;
    std::string value;  // text, or a data URI / URL for images
};

struct ChatMessage {
    enum class Role { System, User, Assistant } role = Role::User;
    std::vector<ContentPart> parts;

    static ChatMessage system(std::string text) { return {Role::System, {{ContentPart::Kind::Text, std::move(text)}}}; }
    static ChatMessage user(std::string text) { return {Role::User, {{ContentPart::Kind::Text, std::move(text)}}}; }
    static ChatMessage assistant(std::string text) {
        return {Role::Assistant, {{ContentPart::Kind::Text, std::move(text)}}};
    }

    /// Concatenated text parts.
    std::string text() const;
    bool has_image() const;
};

std::string_view message_role_name(ChatMessage::Role role) noexcept;
/// OpenAI wire form: plain string content for text-only messages, a parts
/// array once an image is attached.
nlohmann::json to_json(const ChatMessage& msg);
nlohmann::json to_json(const std::vector<ChatMessage>& msgs);

struct ChatParams {
    double temperature = 0.2;
    int max_tokens = 2048;
};

/// 0.2 for the final answer, 0 for triage and judging.
ChatParams default_params(ModelRole role);

struct EmbeddingVector {
    std::vector<double> values;
    std::size_t dim() const noexcept { return values.size(); }
    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct RetryPolicy {
    double backoff_base_s = 0.5;
    double multiplier = 2.0;
    double jitter = 0.25;  // each delay is scaled by a uniform factor in [1 - jitter, 1 + jitter]
};

/// Client over OpenAI-compatible endpoints, one per model role. Shareable
/// across threads; each role has its own in-flight cap.
class Gateway {
public:
    explicit Gateway(std::vector<ModelEndpoint> endpoints, RetryPolicy retry = {});
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    bool has(ModelRole role) const noexcept;
    /// Throws Error(UnknownModelRole).
    const ModelEndpoint& endpoint(ModelRole role) const;
    std::vector<ModelEndpoint> endpoints() const;

    /// POST {base}/chat/completions; returns the first choice's content.
    std::string chat_complete(ModelRole role, const std::vector<ChatMessage>& messages,
                              std::optional<ChatParams> params = std::nullopt) const;

    /// POST {base}/embeddings with the embedding role; output aligned with input.
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) const;

    /// POST {base}/rerank with {query, documents}; one score per passage, aligned.
    std::vector<double> rerank_pairs(const std::string& query, const std::vector<std::string>& passages) const;

    /// True when the endpoint answers any HTTP status at all.
    bool probe(ModelRole role, double timeout_s = 2.0) const;

    std::size_t attempts() const noexcept { return attempts_.load(); }

private:
    struct Slot;
    std::string post_json(ModelRole role, const std::string& path, const nlohmann::json& body) const;

    std::map<ModelRole, std::unique_ptr<Slot>> slots_;
    RetryPolicy retry_;
    mutable std::atomic<std::size_t> attempts_{0};
};

}  // namespace agro::llm
