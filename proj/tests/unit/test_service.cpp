#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "agro/errors.hpp"
#include "agro/service.hpp"
#include "fake_world.hpp"
#include "oracles.hpp"

using namespace agro;
using nlohmann::json;

namespace {

struct Running {
    agro::testing::FakeWorld world;
    std::unique_ptr<Service> service;
    std::unique_ptr<httplib::Client> http;

    explicit Running(const std::function<void(json&)>& tweak = {}) {
        auto j = world.config_json();
        if (tweak) tweak(j);
        service = std::make_unique<Service>(config_from_json(j));
        int port = service->start();
        http = std::make_unique<httplib::Client>("127.0.0.1", port);
        http->set_read_timeout(30, 0);
    }

    std::pair<int, json> post(const std::string& path, const json& body) {
        auto res = http->Post(path, body.dump(), "application/json");
        REQUIRE(res);
        return {res->status, json::parse(res->body)};
    }
    std::pair<int, json> get(const std::string& path) {
        auto res = http->Get(path);
        REQUIRE(res);
        return {res->status, json::parse(res->body)};
    }
    void ingest_apple() {
        auto [status, body] = post("/documents", json::parse(read_file(agro::testing::fixture("apple_cultivation.json"))));
        REQUIRE(status == 200);
    }
};

/// Brute-force index statistics: per-pixel median of unclouded scenes, then
/// plain statistics over pixel centers inside the plot.
std::optional<agro::testing::OracleStats> oracle_plot_stats(const agro::testing::FakeWorld& world,
                                                            raster::IndexKind kind, const PlotGeometry& geom) {
    const auto& ref = world.scenes.front().bands.at("red");
    raster::BandGrid composite = ref;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        std::vector<long double> vals;
        for (const auto& s : world.scenes) {
            int scl = static_cast<int>(s.bands.at("scl").values[i]);
            if (scl == 3 || scl == 8 || scl == 9 || scl == 10) continue;
            auto v = agro::testing::oracle_index(kind, s.bands.at("red").values[i], s.bands.at("nir").values[i],
                                                 s.bands.at("blue").values[i], s.bands.at("green").values[i]);
            if (v) vals.push_back(*v);
        }
        std::sort(vals.begin(), vals.end());
        if (vals.empty()) {
            composite.values[i] = composite.nodata;
        } else {
            auto n = vals.size();
            composite.values[i] = static_cast<double>(n % 2 ? vals[n / 2] : (vals[n / 2 - 1] + vals[n / 2]) / 2);
        }
    }
    return agro::testing::oracle_zonal(composite, geom);
}

}  // namespace

TEST_CASE("status codes follow the error taxonomy") {
    CHECK(status_for(Errc::InvalidArgument) == 400);
    CHECK(status_for(Errc::PlotNotFound) == 404);
    CHECK(status_for(Errc::DuplicateDocId) == 409);
    CHECK(status_for(Errc::MalformedPlotId) == 422);
    CHECK(status_for(Errc::GatewayHttpError) == 502);
    CHECK(status_for(Errc::AllCasesFailed) == 502);
    CHECK(status_for(Errc::IoError) == 500);
}

TEST_CASE("plot lookups") {
    Running r;
    auto [ok, plot] = r.get("/plots/0:0:107:55:1");
    CHECK(ok == 200);
    CHECK(plot["attributes"]["land_use"] == "PASTIZAL");
    CHECK(plot["attributes"]["area_ha"] == 0.763);

    auto [missing, err] = r.get("/plots/9:9:9:9:9");
    CHECK(missing == 404);
    CHECK(err["error"] == "PlotNotFound");
    CHECK(err["message"].get<std::string>().find("9:9:9:9:9") != std::string::npos);

    auto [bad, err2] = r.get("/plots/x");
    CHECK(bad == 422);
    CHECK(err2["error"] == "MalformedPlotId");

    auto [route, _] = r.get("/nowhere");
    CHECK(route == 404);
}

TEST_CASE("index statistics match the brute-force oracle") {
    Running r;
    auto [status, body] = r.get("/plots/0:0:107:55:1/indices");
    REQUIRE(status == 200);
    REQUIRE(body.size() == 3);
    auto geom = r.service->registry().fetch(parse_plot_id("0:0:107:55:1")).geometry;
    for (const auto& s : body) {
        auto kind = *raster::parse_index_kind(s["index"].get<std::string>());
        auto want = oracle_plot_stats(r.world, kind, geom);
        REQUIRE(want);
        const std::string k(raster::index_name(kind));
        CHECK(agro::testing::close_rel(s[k + "_mean"].get<double>(), want->mean, 1e-9));
        CHECK(agro::testing::close_rel(s[k + "_max"].get<double>(), want->max, 1e-9));
        CHECK(agro::testing::close_rel(s[k + "_min"].get<double>(), want->min, 1e-9));
        CHECK(agro::testing::close_rel(s[k + "_stdDev"].get<double>(), want->std_dev, 1e-9));
        CHECK(s["pixel_count"] == want->count);
        CHECK(s["window"] == json{{"start", "2024-06-01"}, {"end", "2024-06-30"}});
    }

    auto [bad_window, _] = r.get("/plots/0:0:107:55:1/indices?window=june");
    CHECK(bad_window == 400);
    auto [far, err] = r.get("/plots/33:12:4:201:7:3/indices");
    CHECK(far == 404);
    CHECK(err["error"] == "NoValidPixels");

    r.world.fail("stac");
    auto [down, err2] = r.get("/plots/0:0:107:55:1/indices");
    CHECK(down == 502);
    CHECK(err2["stage"] == "indices");
}

TEST_CASE("document ingestion") {
    Running r;
    auto doc = json::parse(read_file(agro::testing::fixture("apple_cultivation.json")));
    auto [ok, body] = r.post("/documents", doc);
    CHECK(ok == 200);
    CHECK(body == json{{"doc_id", "apple-cultivation"}, {"chunks", 3}});

    auto [dup, err] = r.post("/documents", doc);
    CHECK(dup == 409);
    CHECK(err["error"] == "DuplicateDocIdWithoutReplaceFlag");

    doc["replace"] = true;
    CHECK(r.post("/documents", doc).first == 200);
    CHECK(r.service->store().chunk_count() == 3);

    auto [one, single] =
        r.post("/documents", {{"doc_id", "note"}, {"filename", "note.txt"}, {"pages", {{{"page_number", 1}, {"text", "Short."}}}}});
    CHECK(one == 200);
    CHECK(single["chunks"] == 1);

    auto [bad, _] = r.post("/documents", {{"pages", json::array()}});
    CHECK(bad == 400);
    auto raw = r.http->Post("/documents", "{oops", "application/json");
    REQUIRE(raw);
    CHECK(raw->status == 400);
}

TEST_CASE("the index persists across service restarts") {
    agro::testing::FakeWorld world;
    {
        Service s(world.config());
        s.ingest(json::parse(read_file(agro::testing::fixture("apple_cultivation.json"))));
    }
    Service again(world.config());
    CHECK(again.store().chunk_count() == 3);
    CHECK(again.store().has_document("apple-cultivation"));
}

TEST_CASE("chat validation") {
    Running r;
    auto [empty, e1] = r.post("/chat", {{"query", "   "}});
    CHECK(empty == 400);
    CHECK(e1["error"] == "InvalidArgument");
    CHECK(r.post("/chat", {{"text", "hi"}}).first == 400);
    CHECK(r.post("/chat", {{"query", "Is plot 0:0:0107:55:1 steep?"}}).first == 422);
    CHECK(r.post("/chat", {{"query", "hi"}, {"mode", "vision"}}).first == 400);
    CHECK(r.post("/chat", {{"query", "hi"}, {"session_id", "../x"}}).first == 400);
    auto [unknown, e2] = r.post("/chat", {{"query", "hi"}, {"session_id", "abc"}});
    CHECK(unknown == 404);
    CHECK(e2["error"] == "SessionNotFound");
    auto [missing_plot, e3] = r.post("/chat", {{"query", "Describe plot 9:9:9:9:9"}});
    CHECK(missing_plot == 404);
    CHECK(e3["message"].get<std::string>().find("9:9:9:9:9") != std::string::npos);
}

TEST_CASE("document questions are answered with citations") {
    Running r;
    r.ingest_apple();
    auto [status, body] = r.post("/chat", {{"query", "What soil do apple orchards need?"}});
    REQUIRE(status == 200);
    CHECK(body["mode"]["mode"] == "rag");
    CHECK(body["citations"].size() >= 1);
    CHECK(body["citations"][0]["source_label"].get<std::string>().find("Apple_cultivation.pdf (page") == 0);
    CHECK(body["image_data_uri"].is_null());
    CHECK(body["followups"].size() == 3);
    CHECK(body["markdown"].get<std::string>().find("```") == std::string::npos);
}

TEST_CASE("plot questions combine imagery, indices and documents") {
    Running r;
    r.ingest_apple();
    auto [status, body] = r.post("/chat", {{"query", "Can I plant apple trees in plot 0:0:107:55:1?"}});
    REQUIRE(status == 200);
    CHECK(body["mode"]["mode"] == "both");
    CHECK(body["image_data_uri"].get<std::string>().rfind("data:image/jpeg;base64,", 0) == 0);
    CHECK(body["markdown"].get<std::string>().find("pasture") != std::string::npos);

    json final_request;
    for (const auto& req : r.world.llm.requests()) {
        if (req.path != "/v1/chat/completions") continue;
        auto j = json::parse(req.body);
        if (j["model"] == "mock-final") final_request = j;
    }
    REQUIRE(!final_request.is_null());
    auto user = final_request["messages"].back()["content"].get<std::string>();
    CHECK(user.find("Land use = PASTIZAL") != std::string::npos);
    CHECK(user.find("'NDVI_mean'") != std::string::npos);
    CHECK(user.find("### Terrain description") != std::string::npos);
    CHECK(user.find("[1] Source: Apple_cultivation.pdf") != std::string::npos);
}

TEST_CASE("questions without plot IDs never touch plot services") {
    Running r;
    r.world.triage_reply = [](const std::string&, bool) { return "MULTIMODAL"; };
    auto [status, body] = r.post("/chat", {{"query", "How do I prune apple trees?"}});
    REQUIRE(status == 200);
    CHECK(body["mode"]["mode"] == "rag");
    CHECK(r.world.wms.requests().empty());
    CHECK(r.world.stac.requests().empty());
}

TEST_CASE("upstream failures name their stage") {
    struct Case {
        const char* fault;
        const char* stage;
    };
    for (auto c : {Case{"final", "answer"}, Case{"wms", "orthophoto"}, Case{"terrain", "terrain"},
                   Case{"stac", "indices"}, Case{"embedding", "retrieval"}}) {
        CAPTURE(c.fault);
        Running r;
        r.ingest_apple();
        r.world.fail(c.fault);
        auto [status, body] = r.post("/chat", {{"query", "Can I plant apple trees in plot 0:0:107:55:1?"}});
        CHECK(status == 502);
        CHECK(body["stage"] == c.stage);
    }

    Running r;
    r.world.fail("triage");
    auto [status, body] = r.post("/chat", {{"query", "Can I plant apple trees in plot 0:0:107:55:1?"}});
    CHECK(status == 200);
    CHECK(body["mode"]["mode"] == "both");
    CHECK(body["mode"]["model_fallback"] == true);
}

TEST_CASE("remote registry outages are reported as registry failures") {
    Running r([](json& j) {
        j["registry"] = {{"mode", "remote"},
                         {"url_template",
                          "http://127.0.0.1:" + std::to_string(agro::testing::closed_port()) + "/parcel/{id}"}};
    });
    auto [status, body] = r.post("/chat", {{"query", "Describe plot 0:0:107:55:1"}});
    CHECK(status == 502);
    CHECK(body["stage"] == "registry");
    auto [direct, body2] = r.get("/plots/0:0:107:55:1");
    CHECK(direct == 502);
    CHECK(body2["stage"] == "registry");
}

TEST_CASE("sessions replay identically after a restart") {
    agro::testing::FakeWorld world;
    std::string session;
    json first_turns;
    {
        Service s(world.config());
        auto a = s.chat({{"query", "How do I prune apple trees?"}});
        REQUIRE(a.status == 200);
        session = a.body["session_id"];
        auto b = s.chat({{"query", "And in winter?"}, {"session_id", session}});
        REQUIRE(b.status == 200);
        CHECK(b.body["session_id"] == session);
        first_turns = s.session(session).body["turns"];
        REQUIRE(first_turns.size() == 2);
    }
    auto last = json::parse(world.llm.requests().back().body)["messages"];
    CHECK(last.size() == 4);
    CHECK(last[1]["content"] == "How do I prune apple trees?");

    Service again(world.config());
    auto replay = again.session(session);
    CHECK(replay.status == 200);
    CHECK(replay.body["turns"] == first_turns);
    CHECK(again.session("ffff").status == 404);
    CHECK(again.session("a/b").status == 400);
}

TEST_CASE("health reports unreachable endpoints") {
    Running healthy;
    auto [ok, body] = healthy.get("/health");
    CHECK(ok == 200);
    CHECK(body["status"] == "ok");
    CHECK(body["unreachable"].empty());

    Running r([](json& j) {
        j["endpoints"]["reranker"]["base_url"] =
            "http://127.0.0.1:" + std::to_string(agro::testing::closed_port()) + "/v1";
    });
    auto [status, degraded] = r.get("/health");
    CHECK(status == 200);
    CHECK(degraded["status"] == "degraded");
    CHECK(degraded["unreachable"] == json::array({"reranker"}));
    CHECK(degraded["endpoints"]["final"] == "reachable");
}

TEST_CASE("evaluation runs over posted cases or a corpus file") {
    Running r;
    agro::testing::TempDir out;
    auto [status, body] = r.post("/evaluate", {{"corpus_path", agro::testing::fixture("corpus.jsonl").string()},
                                               {"output_dir", out.path.string()}});
    REQUIRE(status == 200);
    CHECK(body["counts"]["total"] == 3);
    CHECK(body["summary_csv"].get<std::string>().rfind("mode,correctness", 0) == 0);
    CHECK(std::filesystem::exists(out.path / "summary.csv"));

    json cases = json::array();
    for (const auto& c : judge::load_corpus_jsonl(read_file(agro::testing::fixture("corpus.jsonl"))))
        cases.push_back(judge::to_json(c));
    auto [s2, b2] = r.post("/evaluate", {{"cases", cases}});
    CHECK(s2 == 200);
    CHECK(b2["summary_csv"] == body["summary_csv"]);

    CHECK(r.post("/evaluate", json::object()).first == 400);
    r.world.judge_reply = [](const std::string&) { return std::string("no verdict"); };
    auto [s3, b3] = r.post("/evaluate", {{"cases", cases}});
    CHECK(s3 == 502);
    CHECK(b3["stage"] == "judge");
}

TEST_CASE("CORS headers are attached") {
    Running r;
    auto res = r.http->Get("/health");
    REQUIRE(res);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    auto pre = r.http->Options("/chat");
    REQUIRE(pre);
    CHECK(pre->status == 204);
}
