#include "agro/conversation_store.hpp"

#include <algorithm>
#include <fstream>

#include "agro/errors.hpp"
#include "agro/util.hpp"

namespace agro {

using nlohmann::json;

json to_json(const triage::QueryMode& mode) {
    json ids = json::array();
    for (const auto& id : mode.detected_plot_ids) ids.push_back(id.str());
    return {{"mode", triage::mode_name(mode.mode)}, {"detected_plot_ids", ids}, {"model_fallback", mode.model_fallback}};
}

triage::QueryMode query_mode_from_json(const json& j) {
    triage::QueryMode m;
    auto mode = triage::parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error(Errc::InvalidArgument, "unknown mode in stored turn");
    m.mode = *mode;
    for (const auto& id : j.at("detected_plot_ids")) m.detected_plot_ids.push_back(parse_plot_id(id.get<std::string>()));
    m.model_fallback = j.value("model_fallback", false);
    return m;
}

json to_json(const TurnRecord& t) {
    return {{"query", t.query},
            {"response", aggregate::to_json(t.response)},
            {"mode", to_json(t.mode)},
            {"started_at", t.started_at},
            {"finished_at", t.finished_at}};
}

TurnRecord turn_from_json(const json& j) {
    TurnRecord t;
    t.query = j.at("query").get<std::string>();
    t.response = aggregate::response_from_json(j.at("response"));
    t.mode = query_mode_from_json(j.at("mode"));
    t.started_at = j.at("started_at").get<std::string>();
    t.finished_at = j.at("finished_at").get<std::string>();
    return t;
}

bool valid_session_id(std::string_view id) {
    if (id.empty() || id.size() > 64) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

ConversationStore::ConversationStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ConversationStore::path_for(const std::string& session_id) const {
    if (!valid_session_id(session_id)) throw Error(Errc::InvalidArgument, "invalid session_id '" + session_id + "'");
    return dir_ / (session_id + ".jsonl");
}

std::string ConversationStore::create_session() {
    std::lock_guard lock(file_mu_);
    while (true) {
        auto id = random_hex(16);
        auto path = path_for(id);
        if (std::filesystem::exists(path)) continue;
        std::ofstream touch(path, std::ios::app);
        if (!touch) throw Error(Errc::IoError, "cannot create " + path.string());
        return id;
    }
}

bool ConversationStore::exists(const std::string& session_id) const {
    return valid_session_id(session_id) && std::filesystem::exists(path_for(session_id));
}

void ConversationStore::append(const std::string& session_id, const TurnRecord& turn) {
    auto path = path_for(session_id);
    std::lock_guard lock(file_mu_);
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot open " + path.string());
    out << to_json(turn).dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::IoError, "write to " + path.string() + " failed");
}

std::vector<TurnRecord> ConversationStore::load(const std::string& session_id) const {
    auto path = path_for(session_id);
    std::vector<TurnRecord> turns;
    std::lock_guard lock(file_mu_);
    std::ifstream in(path, std::ios::binary);
    if (!in) return turns;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        // A torn final line from a crash is skipped; earlier turns stay readable.
        if (j.is_discarded()) continue;
        turns.push_back(turn_from_json(j));
    }
    return turns;
}

std::shared_ptr<std::mutex> ConversationStore::session_lock(const std::string& session_id) {
    std::lock_guard lock(locks_mu_);
    auto& slot = locks_[session_id];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

}  // namespace agro
