// agrochat: operator entry points for the plot assistant.
//
//   agrochat --config cfg.json serve
//   agrochat --config cfg.json ask "Is plot 0:0:107:55:1 suitable for apple trees?"
//   agrochat --config cfg.json plot 0:0:107:55:1
//   agrochat --config cfg.json indices 0:0:107:55:1 --window 2024-06-01/2024-06-30
//   agrochat --config cfg.json ingest manual.json notes.txt
//   agrochat --config cfg.json evaluate corpus.jsonl --out results/
//
// Exit codes: 0 success, 1 domain or upstream error, 2 usage or config error.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "agro/aggregator.hpp"
#include "agro/config.hpp"
#include "agro/errors.hpp"
#include "agro/judge.hpp"
#include "agro/rag_store.hpp"
#include "agro/service.hpp"
#include "agro/util.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

agro::Service* g_serving = nullptr;

void on_signal(int) {
    if (g_serving) g_serving->stop();
}

int emit(const agro::Reply& reply, bool as_text, const std::function<void(const nlohmann::json&)>& text_printer) {
    if (reply.status != 200) {
        std::cerr << "error (" << reply.status << "): " << reply.body.value("message", reply.body.dump());
        if (reply.body.contains("stage")) std::cerr << " [stage " << reply.body["stage"].get<std::string>() << "]";
        std::cerr << "\n";
        if (!as_text) std::cout << reply.body.dump(2) << "\n";
        return kDomainError;
    }
    if (as_text && text_printer) text_printer(reply.body);
    else std::cout << reply.body.dump(2) << "\n";
    return kOk;
}

void print_answer(const nlohmann::json& body) {
    std::cout << body["markdown"].get<std::string>() << "\n";
    if (!body["citations"].empty()) {
        std::cout << "\nSources:\n";
        for (const auto& c : body["citations"]) {
            std::cout << "[" << c["number"].get<int>() << "] " << c["source_label"].get<std::string>();
            if (c["relevance"].is_string()) std::cout << ", relevance " << c["relevance"].get<std::string>();
            std::cout << "\n";
        }
    }
    if (!body["followups"].empty()) {
        std::cout << "\nFollow up:\n";
        for (const auto& f : body["followups"]) std::cout << "- " << f.get<std::string>() << "\n";
    }
    if (body["image_data_uri"].is_string()) std::cout << "\n(orthophoto attached as a data URI)\n";
}

nlohmann::json document_for(const std::filesystem::path& path) {
    auto text = agro::read_file(path);
    if (path.extension() == ".json") {
        auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) throw agro::Error(agro::Errc::InvalidArgument, path.string() + " is not valid JSON");
        return j;
    }
    auto doc = agro::rag::document_from_text(path.stem().string(), path.filename().string(), std::move(text));
    nlohmann::json pages = nlohmann::json::array();
    for (const auto& p : doc.pages) pages.push_back({{"page_number", p.page_number}, {"text", p.text}});
    return {{"doc_id", doc.doc_id}, {"filename", doc.filename}, {"pages", pages}};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("agrochat"));

    CLI::App app{"Agricultural plot assistant"};
    app.require_subcommand(1);
    std::string config_path = agro::process_env("AGRO_CONFIG").value_or("agrochat.json");
    std::string data_dir;
    std::string log_level = "info";
    std::string format = "json";
    app.add_option("--config", config_path, "JSON configuration file")->capture_default_str();
    app.add_option("--data-dir", data_dir, "Directory for the document index, sessions and reports");
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "text"}))->capture_default_str();

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    int port = -1;
    serve->add_option("--port", port, "Override the configured port");

    auto* ask = app.add_subcommand("ask", "Answer one query and print the response");
    std::string query, mode, session_id;
    ask->add_option("query", query, "Question in natural language")->required();
    ask->add_option("--mode", mode, "Force the retrieval mode")
        ->check(CLI::IsMember({"multimodal", "rag", "both", "none"}));
    ask->add_option("--session", session_id, "Continue an existing session");

    auto* plot = app.add_subcommand("plot", "Print a plot record");
    std::string plot_id;
    plot->add_option("plot_id", plot_id, "Plot ID, e.g. 0:0:107:55:1")->required();

    auto* indices = app.add_subcommand("indices", "Print spectral index statistics for a plot");
    std::string window;
    indices->add_option("plot_id", plot_id, "Plot ID")->required();
    indices->add_option("--window", window, "Date range YYYY-MM-DD/YYYY-MM-DD");

    auto* ingest = app.add_subcommand("ingest", "Add documents (.json page records or plain text) to the index");
    std::vector<std::string> files;
    bool replace = false;
    ingest->add_option("files", files, "Document files")->required()->check(CLI::ExistingFile);
    ingest->add_flag("--replace", replace, "Replace documents with the same doc_id");

    auto* evaluate = app.add_subcommand("evaluate", "Judge an experiment corpus and write report files");
    std::string corpus, out_dir;
    evaluate->add_option("corpus", corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--out", out_dir, "Report directory (default: <data-dir>/evaluation)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e, std::cerr, std::cerr), kUsageError);
    }
    spdlog::set_level(spdlog::level::from_str(log_level));
    const bool as_text = format == "text";

    agro::AppConfig config;
    try {
        config = agro::load_config(config_path);
    } catch (const agro::Error& e) {
        std::cerr << e.what() << "\n";
        return kUsageError;
    }
    if (!data_dir.empty()) config.data_dir = data_dir;
    if (port >= 0) config.server.port = port;

    try {
        agro::Service service(std::move(config));

        if (*serve) {
            g_serving = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.serve();
            g_serving = nullptr;
            return kOk;
        }
        if (*ask) {
            nlohmann::json body{{"query", query}};
            if (!mode.empty()) body["mode"] = mode;
            if (!session_id.empty()) body["session_id"] = session_id;
            return emit(service.chat(body), as_text, print_answer);
        }
        if (*plot) {
            return emit(service.plot(plot_id), as_text, [](const nlohmann::json& r) {
                const auto& a = r["attributes"];
                agro::PlotAttributes attrs{a["area_ha"].get<double>(), a["perimeter_m"].get<double>(), a["slope_pct"].get<double>(),
                                           a["altitude_m"].get<double>(), a["land_use"].get<std::string>()};
                std::cout << r["plot_id"].get<std::string>() << ": " << agro::aggregate::attrs_to_text(attrs) << "\n";
            });
        }
        if (*indices) {
            std::optional<std::string> w;
            if (!window.empty()) w = window;
            return emit(service.indices(plot_id, w), as_text, [](const nlohmann::json& r) {
                for (const auto& s : r) std::cout << agro::aggregate::stats_to_text(agro::raster::index_stats_from_json(s)) << "\n";
            });
        }
        if (*ingest) {
            int rc = kOk;
            for (const auto& f : files) {
                auto doc = document_for(f);
                doc["replace"] = replace;
                rc = std::max(rc, emit(service.ingest(doc), as_text, [&](const nlohmann::json& r) {
                    std::cout << f << ": " << r["chunks"].get<std::size_t>() << " chunks\n";
                }));
            }
            return rc;
        }
        if (*evaluate) {
            if (out_dir.empty()) out_dir = (service.config().data_dir / "evaluation").string();
            auto reply = service.evaluate({{"corpus_path", corpus}, {"output_dir", out_dir}});
            return emit(reply, as_text, [](const nlohmann::json& r) { std::cout << r["summary_csv"].get<std::string>(); });
        }
    } catch (const agro::Error& e) {
        std::cerr << agro::errc_name(e.code()) << ": " << e.what() << "\n";
        return e.code() == agro::Errc::ConfigError ? kUsageError : kDomainError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    }
    return kOk;
}
