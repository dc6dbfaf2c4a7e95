#pragma once

#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "agro/config.hpp"
#include "agro/conversation_store.hpp"
#include "agro/judge.hpp"
#include "agro/llm_gateway.hpp"
#include "agro/pipeline.hpp"
#include "agro/plot_registry.hpp"
#include "agro/rag_store.hpp"

namespace httplib {
class Server;
}

namespace agro {

struct Reply {
    int status = 200;
    nlohmann::json body;
};

/// HTTP status and {"error", "message", "stage"?} payload for an exception.
Reply error_reply(const std::exception& e);
int status_for(Errc code) noexcept;

/// Owns the registry, gateway, document index and conversation store, and
/// serves them over HTTP. Handlers are callable directly as well.
class Service {
public:
    explicit Service(AppConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    Reply chat(const nlohmann::json& body);
    Reply session(const std::string& session_id);
    Reply plot(const std::string& plot_id);
    Reply indices(const std::string& plot_id, const std::optional<std::string>& window);
    Reply ingest(const nlohmann::json& body);
    Reply evaluate(const nlohmann::json& body);
    Reply health();

    /// Binds config.server.host:port (port 0 picks a free one) and serves on
    /// a background thread. Returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void serve();
    void stop();

    const AppConfig& config() const noexcept { return config_; }
    const llm::Gateway& gateway() const noexcept { return *gateway_; }
    rag::RagStore& store() noexcept { return *store_; }
    const PlotRegistry& registry() const noexcept { return *registry_; }
    ConversationStore& conversations() noexcept { return *conversations_; }

private:
    void install_routes();
    void persist_index();

    AppConfig config_;
    std::unique_ptr<PlotRegistry> registry_;
    std::unique_ptr<llm::Gateway> gateway_;
    std::unique_ptr<rag::RagStore> store_;
    std::unique_ptr<ConversationStore> conversations_;
    std::unique_ptr<ChatPipeline> pipeline_;
    std::unique_ptr<IndexService> indices_;
    std::unique_ptr<httplib::Server> server_;
    std::thread listener_;
    std::mutex ingest_mu_;
};

}  // namespace agro
