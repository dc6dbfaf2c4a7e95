#pragma once

#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/plot_registry.hpp"
#include "agro/raster.hpp"
#include "agro/util.hpp"

namespace agro::stac {

struct SceneRef {
    std::string id;
    std::string datetime;  // as reported by the catalog
    std::chrono::sys_seconds timestamp{};
    double cloud_cover = -1;              // -1 when the item does not report it
    std::map<std::string, std::string> assets;  // band name -> href
};

struct SearchRequest {
    std::string endpoint;  // full item-search URL, e.g. https://host/v1/search
    BBox bbox;
    DateRange window;
    std::string collection = "sentinel-2-l2a";
    double max_cloud_pct = 60;
    std::string cloud_property = "eo:cloud_cover";
    int limit = 50;
    /// STAC asset key -> band name; assets with unlisted keys are ignored.
    std::map<std::string, std::string> asset_bands = default_asset_bands();
    double timeout_s = 20;

    static std::map<std::string, std::string> default_asset_bands();
};

nlohmann::json build_search_body(const SearchRequest& req);
/// Newest first. Throws InvalidStacResponse.
std::vector<SceneRef> parse_search_response(std::string_view body, const std::map<std::string, std::string>& asset_bands);

/// Item-search POST. Throws EndpointUnreachable / InvalidStacResponse.
std::vector<SceneRef> stac_search(const SearchRequest& req);

struct LoadOptions {
    std::set<std::string> bands;  // which bands to fetch
    double reflectance_scale = 1.0;
    double reflectance_offset = 0.0;
    int max_in_flight = 4;
    double timeout_s = 60;
};

/// Reads `file://` URIs and plain paths from disk and http(s) hrefs over GET.
std::string fetch_asset(const std::string& href, double timeout_s);

/// Fetches the requested bands (all scenes, bounded concurrency), applies the
/// reflectance scaling to optical bands and marks values outside [0, 1] as
/// nodata. Bands an item does not provide are simply absent from its stack.
std::vector<raster::SceneStack> load_scenes(const std::vector<SceneRef>& refs, const LoadOptions& opts);

}  // namespace agro::stac
