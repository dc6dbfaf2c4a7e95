#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "agro/llm_gateway.hpp"
#include "agro/plot_registry.hpp"

namespace agro::ortho {

struct OrthophotoRequest {
    BBox bbox;  // EPSG:4326, lon/lat
    int width_px = 0;
    int height_px = 0;
    std::string layer;
    std::string format = "image/jpeg";
};

struct OrthophotoImage {
    std::string bytes;
    std::string mime;
    BBox bbox;
};

struct TerrainDescription {
    std::string text;
    std::string model_id;
    std::chrono::sys_seconds generated_at{};
};

struct WmsConfig {
    std::string endpoint;  // GetMap base URL, may already carry a query string
    std::string layer = "OI.OrthoimageCoverage";
    std::string format = "image/jpeg";
    double buffer_frac = 0.15;
    int target_px = 768;
    double timeout_s = 30;
};

inline constexpr int kMinImagePx = 64;
inline constexpr int kMaxImagePx = 4096;

/// Bbox grown by buffer_frac of its width/height on every side; the longer
/// side gets target_px pixels and the other keeps the aspect ratio.
OrthophotoRequest build_wms_request(const PlotGeometry& geom, double buffer_frac, int target_px,
                                    std::string layer = "", std::string format = "image/jpeg");

/// WMS 1.3.0 GetMap URL. EPSG:4326 under 1.3.0 uses lat,lon axis order in BBOX.
std::string getmap_url(const OrthophotoRequest& req, const std::string& endpoint);

OrthophotoImage fetch_orthophoto(const OrthophotoRequest& req, const std::string& endpoint, double timeout_s = 30);

/// RFC 4648 base64 with padding.
std::string encode_base64(std::string_view bytes);
/// "data:{mime};base64,..."
std::string encode_data_uri(const OrthophotoImage& img);

std::vector<llm::ChatMessage> build_terrain_prompt(const OrthophotoImage& img, const PlotAttributes& attrs);

TerrainDescription describe_terrain(const OrthophotoImage& img, const PlotAttributes& attrs, const llm::Gateway& gateway);

}  // namespace agro::ortho
