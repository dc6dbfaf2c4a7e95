#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace agro {

/// Cadastral plot identifier: 5 to 7 colon-separated registry field codes,
/// e.g. "0:0:107:161:1". Individual positions are never interpreted.
class PlotId {
public:
    static constexpr std::size_t kMinComponents = 5;
    static constexpr std::size_t kMaxComponents = 7;

    /// Throws Error(MalformedPlotId) on wrong arity.
    static PlotId from_components(std::vector<std::uint64_t> components);

    const std::vector<std::uint64_t>& components() const noexcept { return components_; }
    std::string str() const;

    friend bool operator==(const PlotId&, const PlotId&) = default;
    friend auto operator<=>(const PlotId&, const PlotId&) = default;

private:
    explicit PlotId(std::vector<std::uint64_t> c) : components_(std::move(c)) {}
    std::vector<std::uint64_t> components_;
};

/// Accepts exactly the canonical form (surrounding whitespace trimmed):
/// decimal tokens without sign or leading zeros.
PlotId parse_plot_id(std::string_view text);
std::string format_plot_id(const PlotId& id);

struct PlotAttributes {
    double area_ha = 0;
    double perimeter_m = 0;
    double slope_pct = 0;
    double altitude_m = 0;
    std::string land_use;

    friend bool operator==(const PlotAttributes&, const PlotAttributes&) = default;
};

struct LonLat {
    double lon = 0;
    double lat = 0;
    friend bool operator==(const LonLat&, const LonLat&) = default;
};

using Ring = std::vector<LonLat>;

struct BBox {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
    bool intersects(const BBox& o) const {
        return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y && o.min_y <= max_y;
    }
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Polygon in EPSG:4326; rings[0] is the exterior, the rest are holes.
struct PlotGeometry {
    std::vector<Ring> rings;

    BBox bbox() const;
    friend bool operator==(const PlotGeometry&, const PlotGeometry&) = default;
};

enum class PlotSource { Remote, Fixture };

struct PlotRecord {
    PlotId id;
    PlotAttributes attributes;
    PlotGeometry geometry;
    PlotSource source = PlotSource::Fixture;
};

/// Empty string when valid, otherwise the first violated invariant.
std::string check_attributes(const PlotAttributes& attrs);
std::string check_geometry(const PlotGeometry& geom);

/// GeoJSON Polygon (or single-member MultiPolygon) geometry object.
PlotGeometry geometry_from_geojson(const nlohmann::json& geometry);
nlohmann::json geometry_to_geojson(const PlotGeometry& geom);

nlohmann::json to_json(const PlotAttributes& attrs);
nlohmann::json to_json(const PlotRecord& record);

class PlotRegistry {
public:
    virtual ~PlotRegistry() = default;
    /// Throws PlotNotFound, RegistryUnreachable or RegistryResponseInvalid.
    virtual PlotRecord fetch(const PlotId& id) const = 0;
};

/// Immutable in-memory registry loaded from a GeoJSON FeatureCollection whose
/// features carry "plot_id" plus the attribute properties.
class FixtureRegistry final : public PlotRegistry {
public:
    static FixtureRegistry from_geojson(std::string_view text);
    static FixtureRegistry load(const std::string& path);

    PlotRecord fetch(const PlotId& id) const override;
    std::size_t size() const noexcept { return records_.size(); }
    std::vector<PlotId> ids() const;

private:
    std::map<PlotId, PlotRecord> records_;
};

/// Maps one PlotRecord field to a JSON pointer into the remote response,
/// with an optional multiplicative unit conversion.
struct FieldMapping {
    std::string pointer;
    double scale = 1.0;
};

struct RemoteRegistryConfig {
    /// Placeholders {c0}..{c6} take the ID components, {id} the canonical string.
    std::string url_template;
    std::map<std::string, FieldMapping> fields;  // area_ha, perimeter_m, slope_pct, altitude_m, land_use, geometry
    double timeout_s = 10.0;
    std::map<std::string, std::string> headers;

    static std::map<std::string, FieldMapping> default_fields();
};

class RemoteRegistry final : public PlotRegistry {
public:
    explicit RemoteRegistry(RemoteRegistryConfig config);
    PlotRecord fetch(const PlotId& id) const override;

    std::string url_for(const PlotId& id) const;
    /// Applies the field mapping to an already-fetched body.
    PlotRecord parse_response(const PlotId& id, std::string_view body) const;

private:
    RemoteRegistryConfig config_;
};

struct RegistryConfig {
    enum class Mode { Fixture, Remote } mode = Mode::Fixture;
    std::string fixture_path;
    RemoteRegistryConfig remote;
};

std::unique_ptr<PlotRegistry> make_registry(const RegistryConfig& config);

inline PlotRecord fetch_plot(const PlotId& id, const PlotRegistry& registry) { return registry.fetch(id); }

}  // namespace agro
