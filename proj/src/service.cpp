#include "agro/service.hpp"

#include <future>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/util.hpp"

namespace agro {

using nlohmann::json;

int status_for(Errc code) noexcept {
    if (is_upstream_failure(code)) return 502;
    switch (code) {
        case Errc::InvalidArgument:
        case Errc::EmptyInput:
        case Errc::InvalidGeometry:
            return 400;
        case Errc::PlotNotFound:
        case Errc::NoValidPixels:
            return 404;
        case Errc::DuplicateDocId:
            return 409;
        case Errc::MalformedPlotId:
            return 422;
        case Errc::AllCasesFailed:
            return 502;
        default:
            return 500;
    }
}

Reply error_reply(const std::exception& e) {
    if (auto* stage = dynamic_cast<const StageError*>(&e)) {
        return {status_for(stage->code()),
                {{"error", errc_name(stage->code())}, {"message", stage->what()}, {"stage", stage->stage()}}};
    }
    if (auto* err = dynamic_cast<const Error*>(&e))
        return {status_for(err->code()), {{"error", errc_name(err->code())}, {"message", err->what()}}};
    if (dynamic_cast<const json::exception*>(&e))
        return {400, {{"error", "InvalidArgument"}, {"message", std::string("bad request body: ") + e.what()}}};
    return {500, {{"error", "Internal"}, {"message", e.what()}}};
}

namespace {

template <typename Fn>
Reply guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        auto reply = error_reply(e);
        if (reply.status >= 500) spdlog::error("{}: {}", what, e.what());
        else spdlog::info("{}: {} ({})", what, e.what(), reply.status);
        return reply;
    }
}

std::string now_rfc3339() {
    return format_timestamp(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()));
}

const json& require_object(const json& body) {
    if (!body.is_object()) throw Error(Errc::InvalidArgument, "request body must be a JSON object");
    return body;
}

}  // namespace

Service::Service(AppConfig config) : config_(std::move(config)) {
    registry_ = make_registry(config_.registry);
    gateway_ = std::make_unique<llm::Gateway>(config_.endpoints, config_.retry);
    store_ = std::make_unique<rag::RagStore>(config_.rag.chunking);
    const auto index_dir = config_.data_dir / "rag";
    if (std::filesystem::exists(index_dir / "vectors.bin")) {
        store_->load(index_dir);
        spdlog::info("loaded {} document chunks from {}", store_->chunk_count(), index_dir.string());
    }
    conversations_ = std::make_unique<ConversationStore>(config_.data_dir / "sessions");
    pipeline_ = std::make_unique<ChatPipeline>(config_, *registry_, *gateway_, *store_);
    indices_ = std::make_unique<IndexService>(config_.stac);
}

Service::~Service() { stop(); }

Reply Service::chat(const json& body) {
    return guarded("POST /chat", [&]() -> Reply {
        require_object(body);
        ChatRequest req;
        if (!body.contains("query") || !body["query"].is_string())
            throw Error(Errc::InvalidArgument, "'query' must be a string");
        req.query = body["query"].get<std::string>();
        if (trim(req.query).empty()) throw Error(Errc::InvalidArgument, "query must not be empty");
        if (body.contains("plot_id") && !body["plot_id"].is_null()) req.plot_id = body["plot_id"].get<std::string>();
        if (body.contains("mode") && !body["mode"].is_null()) {
            auto mode = triage::parse_mode(body["mode"].get<std::string>());
            if (!mode) throw Error(Errc::InvalidArgument, "mode must be multimodal, rag, both or none");
            req.forced_mode = mode;
        }

        std::string session_id;
        if (body.contains("session_id") && !body["session_id"].is_null()) {
            session_id = body["session_id"].get<std::string>();
            if (!valid_session_id(session_id)) throw Error(Errc::InvalidArgument, "invalid session_id");
            if (!conversations_->exists(session_id))
                return {404, {{"error", "SessionNotFound"}, {"message", "unknown session " + session_id}}};
        } else {
            session_id = conversations_->create_session();
        }

        auto lock_ptr = conversations_->session_lock(session_id);
        std::lock_guard turn_lock(*lock_ptr);
        for (const auto& turn : conversations_->load(session_id))
            req.history.push_back({turn.query, turn.response.markdown});

        TurnRecord record;
        record.query = req.query;
        record.started_at = now_rfc3339();
        auto result = pipeline_->run(req);
        record.finished_at = now_rfc3339();
        record.response = result.response;
        record.mode = result.mode;
        conversations_->append(session_id, record);

        json out = aggregate::to_json(result.response);
        out["session_id"] = session_id;
        out["mode"] = to_json(result.mode);
        out["context_truncated"] = result.context_truncated;
        out["notes"] = result.notes;
        return {200, std::move(out)};
    });
}

Reply Service::session(const std::string& session_id) {
    return guarded("GET /sessions", [&]() -> Reply {
        if (!valid_session_id(session_id)) throw Error(Errc::InvalidArgument, "invalid session_id");
        if (!conversations_->exists(session_id))
            return {404, {{"error", "SessionNotFound"}, {"message", "unknown session " + session_id}}};
        json turns = json::array();
        for (const auto& t : conversations_->load(session_id)) turns.push_back(to_json(t));
        return {200, {{"session_id", session_id}, {"turns", std::move(turns)}}};
    });
}

Reply Service::plot(const std::string& plot_id) {
    return guarded("GET /plots", [&]() -> Reply {
        auto id = parse_plot_id(plot_id);
        try {
            return {200, to_json(registry_->fetch(id))};
        } catch (const Error& e) {
            if (is_upstream_failure(e.code())) throw StageError("registry", e);
            throw;
        }
    });
}

Reply Service::indices(const std::string& plot_id, const std::optional<std::string>& window) {
    return guarded("GET /plots/indices", [&]() -> Reply {
        auto id = parse_plot_id(plot_id);
        DateRange range = default_window(config_.stac);
        if (window) {
            auto parsed = parse_date_range(*window);
            if (!parsed) throw Error(Errc::InvalidArgument, "window must be YYYY-MM-DD/YYYY-MM-DD");
            range = *parsed;
        }
        auto record = [&] {
            try {
                return registry_->fetch(id);
            } catch (const Error& e) {
                if (is_upstream_failure(e.code())) throw StageError("registry", e);
                throw;
            }
        }();
        std::vector<raster::IndexStats> stats;
        try {
            stats = indices_->compute(record, range);
        } catch (const Error& e) {
            if (is_upstream_failure(e.code())) throw StageError("indices", e);
            throw;
        }
        json out = json::array();
        for (const auto& s : stats) out.push_back(raster::to_json(s));
        return {200, std::move(out)};
    });
}

void Service::persist_index() {
    if (config_.data_dir.empty()) return;
    store_->save(config_.data_dir / "rag");
}

Reply Service::ingest(const json& body) {
    return guarded("POST /documents", [&]() -> Reply {
        require_object(body);
        auto doc = rag::document_from_json(body);
        const bool replace = body.value("replace", false);
        std::lock_guard lock(ingest_mu_);
        std::size_t chunks = 0;
        try {
            chunks = store_->ingest_document(doc, *gateway_, replace);
        } catch (const Error& e) {
            if (is_upstream_failure(e.code())) throw StageError("embedding", e);
            throw;
        }
        persist_index();
        return {200, {{"doc_id", doc.doc_id}, {"chunks", chunks}}};
    });
}

Reply Service::evaluate(const json& body) {
    return guarded("POST /evaluate", [&]() -> Reply {
        require_object(body);
        std::vector<judge::ExperimentCase> cases;
        if (body.contains("cases")) {
            if (!body["cases"].is_array()) throw Error(Errc::InvalidArgument, "'cases' must be an array");
            for (const auto& c : body["cases"]) cases.push_back(judge::case_from_json(c));
        } else if (body.contains("corpus_path") && body["corpus_path"].is_string()) {
            std::string text;
            try {
                text = read_file(body["corpus_path"].get<std::string>());
            } catch (const Error& e) {
                throw Error(Errc::InvalidArgument, e.what());
            }
            cases = judge::load_corpus_jsonl(text);
        } else {
            throw Error(Errc::InvalidArgument, "provide 'cases' or 'corpus_path'");
        }
        judge::ExperimentReport report;
        try {
            report = judge::run_experiments(cases, *gateway_);
        } catch (const Error& e) {
            if (is_upstream_failure(e.code()) || e.code() == Errc::AllCasesFailed) throw StageError("judge", e);
            throw;
        }
        if (body.contains("output_dir") && body["output_dir"].is_string())
            judge::write_report(body["output_dir"].get<std::string>(), report);
        json out = judge::report_to_json(report);
        out["summary_csv"] = judge::summary_csv(report);
        return {200, std::move(out)};
    });
}

Reply Service::health() {
    return guarded("GET /health", [&]() -> Reply {
        std::vector<std::pair<llm::ModelRole, std::future<bool>>> probes;
        for (const auto& ep : gateway_->endpoints())
            probes.emplace_back(ep.role, std::async(std::launch::async, [this, role = ep.role] {
                                    return gateway_->probe(role);
                                }));
        json endpoints = json::object();
        json unreachable = json::array();
        for (auto& [role, fut] : probes) {
            const bool ok = fut.get();
            endpoints[std::string(llm::role_name(role))] = ok ? "reachable" : "unreachable";
            if (!ok) unreachable.push_back(llm::role_name(role));
        }
        return {200,
                {{"status", unreachable.empty() ? "ok" : "degraded"},
                 {"endpoints", std::move(endpoints)},
                 {"unreachable", std::move(unreachable)},
                 {"document_chunks", store_->chunk_count()}}};
    });
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send(httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw Error(Errc::InvalidArgument, "request body is not valid JSON");
    return body;
}

template <typename Fn>
httplib::Server::Handler with_body(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = parse_body(req);
        } catch (const std::exception& e) {
            return send(res, error_reply(e));
        }
        send(res, fn(body));
    };
}

}  // namespace

void Service::install_routes() {
    server_ = std::make_unique<httplib::Server>();
    auto& s = *server_;
    const std::string origin = config_.server.cors_origin;

    s.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        if (!origin.empty()) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        }
    });
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Post("/chat", with_body([this](const json& b) { return chat(b); }));
    s.Post("/documents", with_body([this](const json& b) { return ingest(b); }));
    s.Post("/evaluate", with_body([this](const json& b) { return evaluate(b); }));
    s.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    s.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, session(req.matches[1]));
    });
    s.Get(R"(/plots/([^/]+)/indices)", [this](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> window;
        if (req.has_param("window")) window = req.get_param_value("window");
        send(res, indices(req.matches[1], window));
    });
    s.Get(R"(/plots/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, plot(req.matches[1]));
    });
    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty())
            res.set_content(json{{"error", "NotFound"}, {"message", "no such route"}}.dump(), "application/json");
    });
}

int Service::start() {
    install_routes();
    int port = config_.server.port;
    if (port == 0) {
        port = server_->bind_to_any_port(config_.server.host);
    } else if (!server_->bind_to_port(config_.server.host, port)) {
        port = -1;
    }
    if (port < 0)
        throw Error(Errc::IoError,
                    "cannot bind " + config_.server.host + ":" + std::to_string(config_.server.port));
    listener_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    spdlog::info("listening on {}:{}", config_.server.host, port);
    return port;
}

void Service::serve() {
    install_routes();
    spdlog::info("listening on {}:{}", config_.server.host, config_.server.port);
    if (!server_->listen(config_.server.host, config_.server.port))
        throw Error(Errc::IoError,
                    "cannot listen on " + config_.server.host + ":" + std::to_string(config_.server.port));
}

void Service::stop() {
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
}

}  // namespace agro
