#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/aggregator.hpp"
#include "agro/triage.hpp"

namespace agro {

struct TurnRecord {
    std::string query;
    aggregate::AssistantResponse response;
    triage::QueryMode mode;
    std::string started_at;   // RFC 3339, UTC
    std::string finished_at;
};

nlohmann::json to_json(const triage::QueryMode& mode);
triage::QueryMode query_mode_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TurnRecord& turn);
TurnRecord turn_from_json(const nlohmann::json& j);

/// 1-64 characters of [A-Za-z0-9_-].
bool valid_session_id(std::string_view id);

/// Append-only JSONL file per session: {dir}/{session_id}.jsonl.
class ConversationStore {
public:
    explicit ConversationStore(std::filesystem::path dir);

    std::string create_session();
    bool exists(const std::string& session_id) const;
    void append(const std::string& session_id, const TurnRecord& turn);
    /// Throws Error(InvalidArgument) for a bad ID; an unknown session yields no turns.
    std::vector<TurnRecord> load(const std::string& session_id) const;

    /// Held for the whole turn so each session has at most one turn in flight.
    std::shared_ptr<std::mutex> session_lock(const std::string& session_id);

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path path_for(const std::string& session_id) const;

    std::filesystem::path dir_;
    std::mutex locks_mu_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
    mutable std::mutex file_mu_;
};

}  // namespace agro
