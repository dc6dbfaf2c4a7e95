#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/llm_gateway.hpp"
#include "agro/ortho.hpp"
#include "agro/plot_registry.hpp"
#include "agro/rag_store.hpp"
#include "agro/raster.hpp"
#include "agro/stac.hpp"
#include "agro/util.hpp"

namespace agro {

struct StacSettings {
    std::string endpoint;  // empty disables index statistics
    std::string collection = "sentinel-2-l2a";
    double max_cloud_pct = 60;
    int window_days = 30;
    std::optional<DateRange> window;  // fixed window instead of the trailing one
    std::set<int> excluded_scl = raster::kDefaultExcludedScl;
    std::vector<raster::IndexKind> indices = {raster::IndexKind::NDVI};
    std::map<std::string, std::string> asset_bands = stac::SearchRequest::default_asset_bands();
    double reflectance_scale = 1.0;
    double reflectance_offset = 0.0;
    int max_in_flight = 4;
    int limit = 50;
    double timeout_s = 20;
};

struct RagSettings {
    rag::ChunkingParams chunking;
    std::size_t top_k = 4;
    bool use_reranker = false;
};

struct ServerSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
};

struct AppConfig {
    std::vector<llm::ModelEndpoint> endpoints;
    llm::RetryPolicy retry;
    RegistryConfig registry;
    ortho::WmsConfig wms;  // empty endpoint disables orthophotos
    StacSettings stac;
    RagSettings rag;
    std::size_t context_budget_chars = 24000;
    std::size_t history_turns = 6;
    std::filesystem::path data_dir = "data";
    ServerSettings server;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

/// Relative paths resolve against `base_dir`. Throws Error(ConfigError).
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// AGRO_{ROLE}_BASE_URL, AGRO_{ROLE}_API_KEY, AGRO_{ROLE}_MODEL and AGRO_DATA_DIR.
void apply_env_overrides(AppConfig& config, const EnvLookup& env = process_env);

AppConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

/// Configured window, or the trailing window_days ending today (UTC).
DateRange default_window(const StacSettings& stac);

}  // namespace agro
