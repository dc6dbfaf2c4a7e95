#pragma once

// Offline stand-ins for every upstream service: an OpenAI-compatible LLM
// server (chat, embeddings, rerank), a WMS, a STAC catalog whose assets are
// ASCII grids on disk, plus the plot registry fixture. Faults are injected by
// name: "triage", "terrain", "final", "judge", "embedding", "wms", "stac".

#include <cctype>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "agro/config.hpp"
#include "agro/raster.hpp"
#include "agro/util.hpp"
#include "mock_server.hpp"

#ifndef AGRO_FIXTURE_DIR
#error "AGRO_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace agro::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(AGRO_FIXTURE_DIR) / name; }

struct TempDir {
    std::filesystem::path path;
    TempDir() : path(std::filesystem::temp_directory_path() / ("agro-test-" + random_hex(8))) {
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string w;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!w.empty()) {
            out.push_back(std::move(w));
            w.clear();
        }
    }
    if (!w.empty()) out.push_back(std::move(w));
    return out;
}

/// Hashed bag of words; never the zero vector.
inline std::vector<double> fake_embedding(std::string_view text, std::size_t dim = 32) {
    std::vector<double> v(dim, 0.0);
    v[dim - 1] = 0.01;
    for (const auto& w : words(text)) {
        std::uint32_t h = 2166136261u;
        for (char c : w) h = (h ^ static_cast<unsigned char>(c)) * 16777619u;
        v[h % (dim - 1)] += 1.0;
    }
    return v;
}

inline std::string braceless_verdict(int c, int r, int cl, int co) {
    return "\"correctness\": " + std::to_string(c) + ",\n\"relevance\": " + std::to_string(r) + ",\n\"clarity\": " +
           std::to_string(cl) + ",\n\"completeness\": " + std::to_string(co) +
           ",\n\"justification\": \"Scores follow the scripted fixture.\"";
}

struct SceneFixture {
    std::string id;
    std::string date;  // YYYY-MM-DD
    std::map<std::string, raster::BandGrid> bands;
};

class FakeWorld {
public:
    static constexpr const char* kWindow = "2024-06-01/2024-06-30";
    static constexpr char kJpeg[] = "\xFF\xD8\xFF\xE0\x00\x10JFIF\x00 fake orthophoto";

    /// Scripted replies; defaults mimic a well-behaved model.
    std::function<std::string(const std::string& query, bool has_ids)> triage_reply;
    std::function<std::string(const std::string& user_text)> judge_reply;
    std::string final_extra;  // appended to the final answer body

    FakeWorld() {
        write_scenes();
        install_llm();
        install_wms();
        install_stac();
        llm.start();
        wms.start();
        stac.start();
    }
    ~FakeWorld() {
        llm.stop();
        wms.stop();
        stac.stop();
    }

    void fail(const std::string& what, bool on = true) {
        std::lock_guard lock(mu_);
        if (on) failing_.insert(what);
        else failing_.erase(what);
    }
    bool failing(const std::string& what) const {
        std::lock_guard lock(mu_);
        return failing_.count(what) != 0;
    }

    nlohmann::json config_json() const {
        nlohmann::json ep{{"base_url", llm.url("/v1")}, {"timeout_s", 5}, {"max_retries", 0}, {"max_in_flight", 4}};
        nlohmann::json endpoints = nlohmann::json::object();
        for (const char* role : {"final", "multimodal", "embedding", "reranker", "triage", "judge"}) {
            endpoints[role] = ep;
            endpoints[role]["model"] = std::string("mock-") + role;
        }
        return {{"endpoints", endpoints},
                {"retry", {{"backoff_base_s", 0.001}, {"jitter", 0.0}}},
                {"registry", {{"mode", "fixture"}, {"fixture_path", fixture("plots.geojson").string()}}},
                {"wms", {{"endpoint", wms.url("/wms")}, {"timeout_s", 5}}},
                {"stac",
                 {{"endpoint", stac.url("/search")},
                  {"window", kWindow},
                  {"indices", {"NDVI", "EVI", "NDWI"}},
                  {"timeout_s", 5}}},
                {"rag", {{"chunk_size", 1000}, {"overlap", 200}, {"top_k", 3}, {"use_reranker", false}}},
                {"data_dir", (dir.path / "data").string()},
                {"server", {{"host", "127.0.0.1"}, {"port", 0}}}};
    }

    AppConfig config() const { return config_from_json(config_json()); }

    std::filesystem::path write_config(const std::string& name = "config.json") const {
        auto path = dir.path / name;
        write_file(path, config_json().dump(2));
        return path;
    }

    TempDir dir;
    MockServer llm, wms, stac;
    std::vector<SceneFixture> scenes;

private:
    void write_scenes() {
        std::mt19937 rng(20240601);
        std::uniform_real_distribution<double> red(0.02, 0.09), nir(0.25, 0.55), green(0.03, 0.10), blue(0.01, 0.06);
        std::uniform_int_distribution<int> cls(0, 19);
        const char* dates[] = {"2024-06-05", "2024-06-15", "2024-06-25"};
        for (int s = 0; s < 3; ++s) {
            SceneFixture scene{"S2_fixture_" + std::to_string(s), dates[s], {}};
            raster::BandGrid base;
            base.ncols = 14;
            base.nrows = 9;
            base.origin_x = -5.9010;
            base.origin_y = 43.3995;
            base.cellsize = 0.0002;
            base.nodata = -9999;
            base.values.assign(static_cast<std::size_t>(base.ncols * base.nrows), 0.0);
            auto fill = [&](auto&& gen) {
                auto g = base;
                for (auto& v : g.values) v = gen();
                return g;
            };
            scene.bands["red"] = fill([&] { return red(rng); });
            scene.bands["nir"] = fill([&] { return nir(rng); });
            scene.bands["green"] = fill([&] { return green(rng); });
            scene.bands["blue"] = fill([&] { return blue(rng); });
            scene.bands["scl"] = fill([&] {
                int c = cls(rng);
                return c == 0 ? 9.0 : c == 1 ? 3.0 : 4.0;
            });
            for (const auto& [band, grid] : scene.bands)
                write_file(dir.path / "scenes" / (scene.id + "_" + band + ".asc"), raster::write_ascii_grid(grid));
            scenes.push_back(std::move(scene));
        }
    }

    void install_llm() {
        using nlohmann::json;
        llm.get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"data": []})", "application/json");
        });
        llm.post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body);
            std::string system, user, first_user;
            bool has_image = false;
            for (const auto& m : body["messages"]) {
                std::string text;
                if (m["content"].is_string()) {
                    text = m["content"].get<std::string>();
                } else {
                    for (const auto& part : m["content"]) {
                        if (part["type"] == "text") text += part["text"].get<std::string>();
                        if (part["type"] == "image_url") has_image = true;
                    }
                }
                if (m["role"] == "system") system += text;
                else if (m["role"] == "user") {
                    if (first_user.empty()) first_user = text;
                    user = text;  // the latest user turn
                }
            }
            std::string stage, reply;
            if (user.find("You route questions") != std::string::npos) {
                stage = "triage";
                auto ids_pos = user.find("Plot IDs detected in the question: ");
                bool has_ids = user.compare(ids_pos + 35, 4, "none") != 0;
                auto q = user.substr(user.rfind("Question: ") + 10);
                reply = triage_reply ? triage_reply(q, has_ids) : (has_ids ? "BOTH" : "RAG");
            } else if (has_image) {
                stage = "terrain";
                reply =
                    "1. Field cover: continuous grass sward, consistent with the pasture land use.\n"
                    "2. Paths: a farm track runs along the northern edge.\n"
                    "3. Vegetation: a row of trees on the western boundary.\n"
                    "4. Topography: the ground falls noticeably towards the south.\n"
                    "5. Water: no water bodies are visible.\n"
                    "6. Boundaries: fences follow the parcel outline.\n"
                    "Overall, a sloping grassland parcel with wooded margins.";
            } else if (system.find("impartial evaluator") != std::string::npos) {
                stage = "judge";
                reply = judge_reply ? judge_reply(first_user) : "{\"correctness\": 5, \"relevance\": 4, \"clarity\": 4, "
                                                          "\"completeness\": 4, \"justification\": \"Grounded answer.\"}";
            } else {
                stage = "final";
                reply = "## Assessment\n\nThe question was answered from the supplied context.";
                if (user.find("### Plot attributes") != std::string::npos)
                    reply += " The parcel is registered as pasture on sloping ground.";
                if (user.find("[1] Source:") != std::string::npos)
                    reply += " Site requirements for apple orchards are described in the manual [1].";
                reply += final_extra;
                reply += "\n\n```json\n{\"followups\": [\"What rootstock suits this slope?\", "
                         "\"How should I prepare the soil?\", \"Which cultivars pollinate each other?\"]}\n```\n";
            }
            if (failing(stage)) {
                res.status = 500;
                res.set_content(R"({"error": "scripted failure"})", "application/json");
                return;
            }
            json out{{"id", "cmpl-fake"},
                     {"model", body.value("model", "mock")},
                     {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply}}}}}}};
            res.set_content(out.dump(), "application/json");
        });
        llm.post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            if (failing("embedding")) {
                res.status = 503;
                return;
            }
            auto body = json::parse(req.body);
            json data = json::array();
            int i = 0;
            for (const auto& text : body["input"])
                data.push_back({{"index", i++}, {"embedding", fake_embedding(text.get<std::string>())}});
            res.set_content(json{{"data", data}, {"model", body.value("model", "")}}.dump(), "application/json");
        });
        llm.post("/v1/rerank", [](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body);
            auto q = words(body["query"].get<std::string>());
            json results = json::array();
            int i = 0;
            for (const auto& d : body["documents"]) {
                auto w = words(d.get<std::string>());
                double hits = 0;
                for (const auto& t : q) hits += std::find(w.begin(), w.end(), t) != w.end();
                results.push_back({{"index", i++}, {"relevance_score", q.empty() ? 0.0 : hits / q.size()}});
            }
            res.set_content(json{{"results", results}}.dump(), "application/json");
        });
    }

    void install_wms() {
        wms.get("/wms", [this](const httplib::Request&, httplib::Response& res) {
            if (failing("wms")) {
                res.status = 503;
                return;
            }
            res.set_content(std::string(kJpeg, sizeof(kJpeg) - 1), "image/jpeg");
        });
    }

    void install_stac() {
        stac.post("/search", [this](const httplib::Request&, httplib::Response& res) {
            if (failing("stac")) {
                res.status = 500;
                return;
            }
            nlohmann::json features = nlohmann::json::array();
            for (const auto& s : scenes) {
                nlohmann::json assets = nlohmann::json::object();
                for (const auto& [band, grid] : s.bands) {
                    const std::string key = band == "scl" ? "scl" : band;
                    assets[key] = {{"href", "file://" + (dir.path / "scenes" / (s.id + "_" + band + ".asc")).string()}};
                }
                features.push_back({{"type", "Feature"},
                                    {"id", s.id},
                                    {"properties", {{"datetime", s.date + "T11:02:41Z"}, {"eo:cloud_cover", 12.5}}},
                                    {"assets", assets}});
            }
            res.set_content(nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(),
                            "application/geo+json");
        });
    }

    mutable std::mutex mu_;
    std::set<std::string> failing_;
};

}  // namespace agro::testing
