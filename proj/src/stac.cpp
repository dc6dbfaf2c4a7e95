#include "agro/stac.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/http.hpp"

namespace agro::stac {

using nlohmann::json;

std::map<std::string, std::string> SearchRequest::default_asset_bands() {
    return {{"red", "red"}, {"nir", "nir"}, {"green", "green"}, {"blue", "blue"}, {"scl", "scl"},
            {"B04", "red"}, {"B08", "nir"}, {"B03", "green"}, {"B02", "blue"}, {"SCL", "scl"}};
}

json build_search_body(const SearchRequest& req) {
    return {{"bbox", {req.bbox.min_x, req.bbox.min_y, req.bbox.max_x, req.bbox.max_y}},
            {"datetime", format_date(req.window.start) + "T00:00:00Z/" + format_date(req.window.end) + "T23:59:59Z"},
            {"collections", {req.collection}},
            {"query", {{req.cloud_property, {{"lte", req.max_cloud_pct}}}}},
            {"limit", req.limit}};
}

std::vector<SceneRef> parse_search_response(std::string_view body, const std::map<std::string, std::string>& asset_bands) {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidStacResponse, "STAC response: " + why); };
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        throw bad(std::string("not valid JSON (") + e.what() + ")");
    }
    if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array())
        throw bad("missing features array");

    std::vector<SceneRef> refs;
    for (const auto& item : doc["features"]) {
        if (!item.is_object() || !item.contains("id") || !item["id"].is_string()) throw bad("item without id");
        SceneRef ref;
        ref.id = item["id"].get<std::string>();
        const auto& props = item.value("properties", json::object());
        if (!props.contains("datetime") || !props["datetime"].is_string())
            throw bad("item " + ref.id + " has no datetime");
        ref.datetime = props["datetime"].get<std::string>();
        auto ts = parse_timestamp(ref.datetime);
        if (!ts) throw bad("item " + ref.id + " has an unparsable datetime '" + ref.datetime + "'");
        ref.timestamp = *ts;
        if (props.contains("eo:cloud_cover") && props["eo:cloud_cover"].is_number())
            ref.cloud_cover = props["eo:cloud_cover"].get<double>();
        if (item.contains("assets") && item["assets"].is_object()) {
            for (const auto& [key, asset] : item["assets"].items()) {
                auto band = asset_bands.find(key);
                if (band == asset_bands.end()) continue;
                if (!asset.is_object() || !asset.contains("href") || !asset["href"].is_string())
                    throw bad("asset " + key + " of item " + ref.id + " has no href");
                ref.assets.emplace(band->second, asset["href"].get<std::string>());
            }
        }
        refs.push_back(std::move(ref));
    }
    std::stable_sort(refs.begin(), refs.end(), [](const SceneRef& a, const SceneRef& b) {
        return a.timestamp != b.timestamp ? a.timestamp > b.timestamp : a.id < b.id;
    });
    return refs;
}

std::vector<SceneRef> stac_search(const SearchRequest& req) {
    auto body = build_search_body(req).dump();
    auto resp = http::post(req.endpoint, body, "application/json", {{"Accept", "application/geo+json"}}, req.timeout_s);
    if (resp.transport != http::Transport::Ok)
        throw Error(Errc::EndpointUnreachable, "STAC endpoint unreachable (" + resp.transport_error + ")");
    if (!resp.ok())
        throw Error(Errc::EndpointUnreachable, "STAC endpoint returned HTTP " + std::to_string(resp.status));
    auto refs = parse_search_response(resp.body, req.asset_bands);
    spdlog::debug("stac: {} scenes for {}", refs.size(), format_date_range(req.window));
    return refs;
}

std::string fetch_asset(const std::string& href, double timeout_s) {
    if (href.rfind("http://", 0) == 0 || href.rfind("https://", 0) == 0) {
        auto resp = http::get(href, {}, timeout_s);
        if (resp.transport != http::Transport::Ok)
            throw Error(Errc::EndpointUnreachable, "asset " + href + " unreachable (" + resp.transport_error + ")");
        if (!resp.ok())
            throw Error(Errc::EndpointUnreachable, "asset " + href + " returned HTTP " + std::to_string(resp.status));
        return resp.body;
    }
    std::string path = href.rfind("file://", 0) == 0 ? href.substr(7) : href;
    return read_file(path);
}

std::vector<raster::SceneStack> load_scenes(const std::vector<SceneRef>& refs, const LoadOptions& opts) {
    struct Task {
        std::size_t scene;
        std::string band;
        std::string href;
    };
    std::vector<Task> tasks;
    std::vector<raster::SceneStack> stacks(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        stacks[i].scene_id = refs[i].id;
        stacks[i].date = Date{std::chrono::floor<std::chrono::days>(refs[i].timestamp)};
        for (const auto& band : opts.bands) {
            auto it = refs[i].assets.find(band);
            if (it != refs[i].assets.end()) tasks.push_back({i, band, it->second});
        }
    }

    std::mutex mu;
    std::exception_ptr first_error;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
            try {
                auto grid = raster::load_band_bytes(fetch_asset(tasks[t].href, opts.timeout_s));
                if (tasks[t].band != "scl") {
                    for (double& v : grid.values) {
                        if (grid.is_nodata(v)) continue;
                        v = v * opts.reflectance_scale + opts.reflectance_offset;
                        if (v < 0.0 || v > 1.0) v = grid.nodata;
                    }
                }
                std::lock_guard lock(mu);
                stacks[tasks[t].scene].bands.emplace(tasks[t].band, std::move(grid));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.max_in_flight)), tasks.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    for (const auto& stack : stacks)
        if (!stack.bands.empty()) stack.check_georef();
    return stacks;
}

}  // namespace agro::stac
