#include "agro/plot_registry.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/http.hpp"
#include "agro/util.hpp"

namespace agro {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Identifiers

PlotId PlotId::from_components(std::vector<std::uint64_t> components) {
    if (components.size() < kMinComponents || components.size() > kMaxComponents) {
        throw Error(Errc::MalformedPlotId, "plot ID must have 5 to 7 components, got " +
                                               std::to_string(components.size()));
    }
    return PlotId(std::move(components));
}

std::string PlotId::str() const {
    std::string out;
    for (std::size_t i = 0; i < components_.size(); ++i) {
        if (i) out.push_back(':');
        out += std::to_string(components_[i]);
    }
    return out;
}

PlotId parse_plot_id(std::string_view text) {
    auto trimmed = trim(text);
    auto fail = [&](const std::string& why) {
        return Error(Errc::MalformedPlotId, "malformed plot ID '" + std::string(trimmed) + "': " + why);
    };
    auto tokens = split(trimmed, ':');
    if (tokens.size() < PlotId::kMinComponents || tokens.size() > PlotId::kMaxComponents)
        throw fail("expected 5 to 7 colon-separated components");

    std::vector<std::uint64_t> components;
    for (auto tok : tokens) {
        if (tok.empty()) throw fail("empty component");
        if (tok.front() == '-') throw fail("negative component");
        if (!std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw fail("non-numeric component '" + std::string(tok) + "'");
        if (tok.size() > 1 && tok.front() == '0') throw fail("leading zero in '" + std::string(tok) + "'");
        std::uint64_t value = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (ec != std::errc{}) throw fail("component out of range");
        components.push_back(value);
    }
    return PlotId::from_components(std::move(components));
}

std::string format_plot_id(const PlotId& id) { return id.str(); }

// ---------------------------------------------------------------------------
// Geometry

BBox PlotGeometry::bbox() const {
    BBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& ring : rings) {
        for (const auto& p : ring) {
            box.min_x = std::min(box.min_x, p.lon);
            box.min_y = std::min(box.min_y, p.lat);
            box.max_x = std::max(box.max_x, p.lon);
            box.max_y = std::max(box.max_y, p.lat);
        }
    }
    return box;
}

namespace {

double orient(const LonLat& a, const LonLat& b, const LonLat& c) {
    return (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
}

bool on_segment(const LonLat& a, const LonLat& b, const LonLat& p) {
    return std::min(a.lon, b.lon) <= p.lon && p.lon <= std::max(a.lon, b.lon) &&
           std::min(a.lat, b.lat) <= p.lat && p.lat <= std::max(a.lat, b.lat);
}

bool segments_intersect(const LonLat& p1, const LonLat& p2, const LonLat& q1, const LonLat& q2) {
    double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
    double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

bool ring_self_intersects(const Ring& ring) {
    const std::size_t n = ring.size() - 1;  // segment count; ring is closed
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1])) return true;
        }
    }
    return false;
}

}  // namespace

std::string check_attributes(const PlotAttributes& a) {
    if (!(a.area_ha >= 0)) return "area_ha must be non-negative";
    if (!(a.perimeter_m >= 0)) return "perimeter_m must be non-negative";
    if (!(a.slope_pct >= 0)) return "slope_pct must be non-negative";
    if (!std::isfinite(a.altitude_m)) return "altitude_m must be finite";
    return {};
}

std::string check_geometry(const PlotGeometry& geom) {
    if (geom.rings.empty()) return "polygon has no rings";
    for (std::size_t r = 0; r < geom.rings.size(); ++r) {
        const auto& ring = geom.rings[r];
        if (ring.size() < 4) return "ring " + std::to_string(r) + " has fewer than 4 points";
        if (ring.front() != ring.back()) return "ring " + std::to_string(r) + " is not closed";
        for (const auto& p : ring)
            if (!std::isfinite(p.lon) || !std::isfinite(p.lat)) return "non-finite coordinate";
    }
    if (ring_self_intersects(geom.rings.front())) return "exterior ring self-intersects";
    auto box = geom.bbox();
    if (!(box.width() > 0 && box.height() > 0)) return "degenerate bounding box";
    return {};
}

PlotGeometry geometry_from_geojson(const json& geometry) {
    auto bad = [](const std::string& why) { return Error(Errc::InvalidGeometry, "invalid GeoJSON geometry: " + why); };
    if (!geometry.is_object() || !geometry.contains("type") || !geometry.contains("coordinates"))
        throw bad("expected an object with type and coordinates");
    const auto type = geometry.at("type").get<std::string>();
    json polygon;
    if (type == "Polygon") {
        polygon = geometry.at("coordinates");
    } else if (type == "MultiPolygon") {
        const auto& polys = geometry.at("coordinates");
        if (!polys.is_array() || polys.size() != 1) throw bad("MultiPolygon must hold exactly one polygon");
        polygon = polys.at(0);
    } else {
        throw bad("unsupported geometry type " + type);
    }
    if (!polygon.is_array()) throw bad("coordinates must be an array of rings");

    PlotGeometry geom;
    for (const auto& ring_json : polygon) {
        if (!ring_json.is_array()) throw bad("ring must be an array");
        Ring ring;
        for (const auto& pos : ring_json) {
            if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
                throw bad("position must be [lon, lat]");
            ring.push_back({pos[0].get<double>(), pos[1].get<double>()});
        }
        geom.rings.push_back(std::move(ring));
    }
    return geom;
}

json geometry_to_geojson(const PlotGeometry& geom) {
    json rings = json::array();
    for (const auto& ring : geom.rings) {
        json r = json::array();
        for (const auto& p : ring) r.push_back({p.lon, p.lat});
        rings.push_back(std::move(r));
    }
    return {{"type", "Polygon"}, {"coordinates", std::move(rings)}};
}

json to_json(const PlotAttributes& a) {
    return {{"area_ha", a.area_ha},
            {"perimeter_m", a.perimeter_m},
            {"slope_pct", a.slope_pct},
            {"altitude_m", a.altitude_m},
            {"land_use", a.land_use}};
}

json to_json(const PlotRecord& record) {
    auto box = record.geometry.bbox();
    return {{"plot_id", record.id.str()},
            {"source", record.source == PlotSource::Remote ? "remote" : "fixture"},
            {"attributes", to_json(record.attributes)},
            {"bbox", {box.min_x, box.min_y, box.max_x, box.max_y}},
            {"geometry", geometry_to_geojson(record.geometry)}};
}

// ---------------------------------------------------------------------------
// Fixture registry

FixtureRegistry FixtureRegistry::from_geojson(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::RegistryResponseInvalid, std::string("fixture registry is not valid JSON: ") + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") || !doc["features"].is_array())
        throw Error(Errc::RegistryResponseInvalid, "fixture registry must be a GeoJSON FeatureCollection");

    FixtureRegistry registry;
    for (const auto& feature : doc["features"]) {
        const auto& props = feature.at("properties");
        auto id = parse_plot_id(props.at("plot_id").get<std::string>());
        PlotRecord record{id, {}, {}, PlotSource::Fixture};
        try {
            record.attributes.area_ha = props.at("area_ha").get<double>();
            record.attributes.perimeter_m = props.at("perimeter_m").get<double>();
            record.attributes.slope_pct = props.at("slope_pct").get<double>();
            record.attributes.altitude_m = props.at("altitude_m").get<double>();
            record.attributes.land_use = props.at("land_use").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(Errc::RegistryResponseInvalid, "fixture " + id.str() + ": " + e.what());
        }
        record.geometry = geometry_from_geojson(feature.at("geometry"));
        if (auto why = check_attributes(record.attributes); !why.empty())
            throw Error(Errc::RegistryResponseInvalid, "fixture " + id.str() + ": " + why);
        if (auto why = check_geometry(record.geometry); !why.empty())
            throw Error(Errc::InvalidGeometry, "fixture " + id.str() + ": " + why);
        if (!registry.records_.emplace(id, std::move(record)).second)
            throw Error(Errc::RegistryResponseInvalid, "duplicate fixture plot_id " + id.str());
    }
    return registry;
}

FixtureRegistry FixtureRegistry::load(const std::string& path) { return from_geojson(read_file(path)); }

PlotRecord FixtureRegistry::fetch(const PlotId& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) throw Error(Errc::PlotNotFound, "plot " + id.str() + " not found");
    return it->second;
}

std::vector<PlotId> FixtureRegistry::ids() const {
    std::vector<PlotId> out;
    for (const auto& [id, _] : records_) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// Remote registry

std::map<std::string, FieldMapping> RemoteRegistryConfig::default_fields() {
    return {{"area_ha", {"/area_ha"}},         {"perimeter_m", {"/perimeter_m"}}, {"slope_pct", {"/slope_pct"}},
            {"altitude_m", {"/altitude_m"}},   {"land_use", {"/land_use"}},       {"geometry", {"/geometry"}}};
}

RemoteRegistry::RemoteRegistry(RemoteRegistryConfig config) : config_(std::move(config)) {
    auto defaults = RemoteRegistryConfig::default_fields();
    for (auto& [name, mapping] : defaults) config_.fields.try_emplace(name, mapping);
}

std::string RemoteRegistry::url_for(const PlotId& id) const {
    std::string url = config_.url_template;
    auto replace_all = [&url](const std::string& key, const std::string& value) {
        for (auto pos = url.find(key); pos != std::string::npos; pos = url.find(key, pos + value.size()))
            url.replace(pos, key.size(), value);
    };
    const auto& comps = id.components();
    for (std::size_t i = 0; i < PlotId::kMaxComponents; ++i)
        replace_all("{c" + std::to_string(i) + "}", i < comps.size() ? std::to_string(comps[i]) : "");
    replace_all("{id}", id.str());
    return url;
}

PlotRecord RemoteRegistry::parse_response(const PlotId& id, std::string_view body) const {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::RegistryResponseInvalid, std::string("registry response is not JSON: ") + e.what());
    }
    if (doc.is_null() || (doc.is_array() && doc.empty()))
        throw Error(Errc::PlotNotFound, "plot " + id.str() + " not found");

    auto lookup = [&](const std::string& field) -> const json& {
        const auto& mapping = config_.fields.at(field);
        try {
            return doc.at(json::json_pointer(mapping.pointer));
        } catch (const json::exception&) {
            throw Error(Errc::RegistryResponseInvalid,
                        "registry response lacks " + field + " at " + mapping.pointer);
        }
    };
    auto number = [&](const std::string& field) {
        const auto& v = lookup(field);
        double value = 0;
        if (v.is_number()) {
            value = v.get<double>();
        } else if (auto parsed = v.is_string() ? parse_double(v.get<std::string>()) : std::nullopt) {
            value = *parsed;
        } else {
            throw Error(Errc::RegistryResponseInvalid, "registry field " + field + " is not numeric");
        }
        return value * config_.fields.at(field).scale;
    };

    PlotRecord record{id, {}, {}, PlotSource::Remote};
    record.attributes.area_ha = number("area_ha");
    record.attributes.perimeter_m = number("perimeter_m");
    record.attributes.slope_pct = number("slope_pct");
    record.attributes.altitude_m = number("altitude_m");
    const auto& land_use = lookup("land_use");
    record.attributes.land_use = land_use.is_string() ? land_use.get<std::string>() : land_use.dump();
    try {
        record.geometry = geometry_from_geojson(lookup("geometry"));
    } catch (const Error& e) {
        throw Error(Errc::RegistryResponseInvalid, e.what());
    }
    if (auto why = check_attributes(record.attributes); !why.empty())
        throw Error(Errc::RegistryResponseInvalid, "registry record " + id.str() + ": " + why);
    if (auto why = check_geometry(record.geometry); !why.empty())
        throw Error(Errc::RegistryResponseInvalid, "registry record " + id.str() + ": " + why);
    return record;
}

PlotRecord RemoteRegistry::fetch(const PlotId& id) const {
    auto url = url_for(id);
    http::Headers headers(config_.headers.begin(), config_.headers.end());
    headers.emplace("Accept", "application/json");
    auto resp = http::get(url, headers, config_.timeout_s);
    if (resp.transport != http::Transport::Ok)
        throw Error(Errc::RegistryUnreachable, "registry unreachable (" + resp.transport_error + ")");
    if (resp.status == 404) throw Error(Errc::PlotNotFound, "plot " + id.str() + " not found");
    if (!resp.ok())
        throw Error(Errc::RegistryUnreachable, "registry returned HTTP " + std::to_string(resp.status));
    spdlog::debug("registry: fetched {} from {}", id.str(), url);
    return parse_response(id, resp.body);
}

std::unique_ptr<PlotRegistry> make_registry(const RegistryConfig& config) {
    if (config.mode == RegistryConfig::Mode::Remote) return std::make_unique<RemoteRegistry>(config.remote);
    return std::make_unique<FixtureRegistry>(FixtureRegistry::load(config.fixture_path));
}

}  // namespace agro
