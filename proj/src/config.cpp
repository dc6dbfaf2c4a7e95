#include "agro/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <iterator>

#include "agro/errors.hpp"

namespace agro {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& why) {
    throw Error(Errc::ConfigError, "config " + where + ": " + why);
}

const json* section(const json& j, const char* key) {
    if (!j.contains(key)) return nullptr;
    if (!j[key].is_object()) fail(key, "must be an object");
    return &j[key];
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key) || obj[key].is_null()) return;
    try {
        out = obj[key].get<T>();
    } catch (const json::exception&) {
        fail(where + "." + key, "has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

llm::ModelEndpoint read_endpoint(llm::ModelRole role, const json& j) {
    const std::string where = "endpoints." + std::string(llm::role_name(role));
    if (!j.is_object()) fail(where, "must be an object");
    llm::ModelEndpoint ep;
    ep.role = role;
    read(j, "base_url", ep.base_url, where);
    read(j, "model", ep.model_name, where);
    read(j, "api_key", ep.api_key, where);
    read(j, "timeout_s", ep.timeout_s, where);
    read(j, "max_retries", ep.max_retries, where);
    read(j, "max_in_flight", ep.max_in_flight, where);
    if (ep.timeout_s <= 0) fail(where + ".timeout_s", "must be positive");
    if (ep.max_retries < 0) fail(where + ".max_retries", "must be >= 0");
    if (ep.max_in_flight < 1) fail(where + ".max_in_flight", "must be >= 1");
    return ep;
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
    return std::nullopt;
}

AppConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) fail("root", "must be a JSON object");
    AppConfig c;

    if (auto* eps = section(j, "endpoints")) {
        for (const auto& [name, value] : eps->items()) {
            auto role = llm::parse_role(name);
            if (!role) fail("endpoints", "unknown model role '" + name + "'");
            c.endpoints.push_back(read_endpoint(*role, value));
        }
    }
    if (auto* r = section(j, "retry")) {
        read(*r, "backoff_base_s", c.retry.backoff_base_s, "retry");
        read(*r, "multiplier", c.retry.multiplier, "retry");
        read(*r, "jitter", c.retry.jitter, "retry");
        if (c.retry.jitter < 0 || c.retry.jitter > 1) fail("retry.jitter", "must be within [0, 1]");
    }

    if (auto* r = section(j, "registry")) {
        std::string mode = "fixture";
        read(*r, "mode", mode, "registry");
        if (mode == "fixture") {
            c.registry.mode = RegistryConfig::Mode::Fixture;
            std::string path;
            read(*r, "fixture_path", path, "registry");
            if (path.empty()) fail("registry.fixture_path", "is required in fixture mode");
            c.registry.fixture_path = resolve(base_dir, path).string();
        } else if (mode == "remote") {
            c.registry.mode = RegistryConfig::Mode::Remote;
            auto& rc = c.registry.remote;
            read(*r, "url_template", rc.url_template, "registry");
            if (rc.url_template.empty()) fail("registry.url_template", "is required in remote mode");
            read(*r, "timeout_s", rc.timeout_s, "registry");
            read(*r, "headers", rc.headers, "registry");
            rc.fields = RemoteRegistryConfig::default_fields();
            if (auto* f = section(*r, "fields")) {
                for (const auto& [name, value] : f->items()) {
                    FieldMapping m;
                    if (value.is_string()) {
                        m.pointer = value.get<std::string>();
                    } else if (value.is_object()) {
                        read(value, "pointer", m.pointer, "registry.fields." + name);
                        read(value, "scale", m.scale, "registry.fields." + name);
                    } else {
                        fail("registry.fields." + name, "must be a pointer string or {pointer, scale}");
                    }
                    rc.fields[name] = m;
                }
            }
        } else {
            fail("registry.mode", "must be fixture or remote");
        }
    } else {
        fail("registry", "section is required");
    }

    if (auto* w = section(j, "wms")) {
        read(*w, "endpoint", c.wms.endpoint, "wms");
        read(*w, "layer", c.wms.layer, "wms");
        read(*w, "format", c.wms.format, "wms");
        read(*w, "buffer_frac", c.wms.buffer_frac, "wms");
        read(*w, "target_px", c.wms.target_px, "wms");
        read(*w, "timeout_s", c.wms.timeout_s, "wms");
        if (c.wms.buffer_frac < 0) fail("wms.buffer_frac", "must be >= 0");
        if (c.wms.target_px < ortho::kMinImagePx || c.wms.target_px > ortho::kMaxImagePx)
            fail("wms.target_px", "out of range");
    }

    if (auto* s = section(j, "stac")) {
        auto& st = c.stac;
        read(*s, "endpoint", st.endpoint, "stac");
        read(*s, "collection", st.collection, "stac");
        read(*s, "max_cloud_pct", st.max_cloud_pct, "stac");
        read(*s, "window_days", st.window_days, "stac");
        read(*s, "excluded_scl", st.excluded_scl, "stac");
        read(*s, "reflectance_scale", st.reflectance_scale, "stac");
        read(*s, "reflectance_offset", st.reflectance_offset, "stac");
        read(*s, "max_in_flight", st.max_in_flight, "stac");
        read(*s, "limit", st.limit, "stac");
        read(*s, "timeout_s", st.timeout_s, "stac");
        if (s->contains("asset_bands")) {
            st.asset_bands.clear();
            read(*s, "asset_bands", st.asset_bands, "stac");
        }
        if (s->contains("window")) {
            std::string text;
            read(*s, "window", text, "stac");
            st.window = parse_date_range(text);
            if (!st.window) fail("stac.window", "must be YYYY-MM-DD/YYYY-MM-DD");
        }
        if (s->contains("indices")) {
            std::vector<std::string> names;
            read(*s, "indices", names, "stac");
            st.indices.clear();
            for (const auto& n : names) {
                auto kind = raster::parse_index_kind(n);
                if (!kind) fail("stac.indices", "unknown index '" + n + "'");
                st.indices.push_back(*kind);
            }
            if (st.indices.empty()) fail("stac.indices", "must list at least one index");
        }
        if (st.window_days < 1) fail("stac.window_days", "must be >= 1");
        if (st.max_in_flight < 1) fail("stac.max_in_flight", "must be >= 1");
    }

    if (auto* r = section(j, "rag")) {
        read(*r, "chunk_size", c.rag.chunking.chunk_size, "rag");
        read(*r, "overlap", c.rag.chunking.overlap, "rag");
        read(*r, "top_k", c.rag.top_k, "rag");
        read(*r, "use_reranker", c.rag.use_reranker, "rag");
        if (c.rag.chunking.chunk_size == 0 || c.rag.chunking.overlap >= c.rag.chunking.chunk_size)
            fail("rag", "need chunk_size > overlap >= 0");
        if (c.rag.top_k == 0) fail("rag.top_k", "must be >= 1");
    }

    read(j, "context_budget_chars", c.context_budget_chars, "root");
    read(j, "history_turns", c.history_turns, "root");
    std::string data_dir;
    read(j, "data_dir", data_dir, "root");
    if (!data_dir.empty()) c.data_dir = resolve(base_dir, data_dir);
    else c.data_dir = resolve(base_dir, "data");

    if (auto* s = section(j, "server")) {
        read(*s, "host", c.server.host, "server");
        read(*s, "port", c.server.port, "server");
        read(*s, "cors_origin", c.server.cors_origin, "server");
        if (c.server.port < 0 || c.server.port > 65535) fail("server.port", "out of range");
    }
    return c;
}

void apply_env_overrides(AppConfig& config, const EnvLookup& env) {
    for (auto role : llm::kAllRoles) {
        const std::string prefix = "AGRO_" + to_upper(llm::role_name(role)) + "_";
        auto base = env(prefix + "BASE_URL");
        auto key = env(prefix + "API_KEY");
        auto model = env(prefix + "MODEL");
        if (!base && !key && !model) continue;
        auto it = std::find_if(config.endpoints.begin(), config.endpoints.end(),
                               [role](const llm::ModelEndpoint& e) { return e.role == role; });
        if (it == config.endpoints.end()) {
            if (!base) continue;  // a key alone does not define an endpoint
            llm::ModelEndpoint added;
            added.role = role;
            config.endpoints.push_back(std::move(added));
            it = std::prev(config.endpoints.end());
        }
        if (base) it->base_url = *base;
        if (key) it->api_key = *key;
        if (model) it->model_name = *model;
    }
    if (auto dir = env("AGRO_DATA_DIR")) config.data_dir = *dir;
}

AppConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    json j = json::parse(text, nullptr, false, true);
    if (j.is_discarded()) throw Error(Errc::ConfigError, "config " + path.string() + " is not valid JSON");
    auto config = config_from_json(j, path.parent_path());
    apply_env_overrides(config, env);
    for (const auto& ep : config.endpoints)
        if (ep.base_url.empty())
            throw Error(Errc::ConfigError, "endpoint " + std::string(llm::role_name(ep.role)) + " has no base_url");
    return config;
}

DateRange default_window(const StacSettings& stac) {
    return stac.window ? *stac.window : trailing_window(today_utc(), stac.window_days);
}

}  // namespace agro
