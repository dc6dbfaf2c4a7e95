#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/plot_registry.hpp"
#include "agro/util.hpp"

namespace agro::raster {

/// Nodata sentinel written into computed index grids.
inline constexpr double kIndexNodata = -9999.0;
/// Index denominators with smaller magnitude yield nodata.
inline constexpr double kDenominatorGuard = 1e-9;

/// Single-band raster. Values are row-major with row 0 at the top (north);
/// (origin_x, origin_y) is the lower-left corner of the lower-left cell.
struct BandGrid {
    int ncols = 0;
    int nrows = 0;
    double origin_x = 0;
    double origin_y = 0;
    double cellsize = 1;
    double nodata = kIndexNodata;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    bool is_nodata(double v) const noexcept { return v == nodata || v != v; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * ncols + col]; }

    double center_x(int col) const noexcept { return origin_x + (col + 0.5) * cellsize; }
    double center_y(int row) const noexcept { return origin_y + (nrows - row - 0.5) * cellsize; }
    BBox extent() const noexcept {
        return {origin_x, origin_y, origin_x + ncols * cellsize, origin_y + nrows * cellsize};
    }

    bool same_georef(const BandGrid& o) const noexcept {
        return ncols == o.ncols && nrows == o.nrows && origin_x == o.origin_x && origin_y == o.origin_y &&
               cellsize == o.cellsize;
    }
    friend bool operator==(const BandGrid&, const BandGrid&) = default;
};

/// Empty when valid, otherwise the violated invariant.
std::string check_grid(const BandGrid& grid);

struct SceneStack {
    std::string scene_id;
    Date date{};
    std::map<std::string, BandGrid> bands;  // "red", "nir", "green", "blue", "scl"

    /// Throws Error(MissingBand) naming the absent band.
    const BandGrid& band(const std::string& name) const;
    bool has(const std::string& name) const { return bands.count(name) != 0; }
    /// Throws GeoreferenceMismatch when band grids disagree.
    void check_georef() const;
    const BandGrid& reference() const;
};

struct PixelMask {
    int ncols = 0;
    int nrows = 0;
    std::vector<std::uint8_t> bits;  // 1 = included

    static PixelMask full(int ncols, int nrows) {
        return {ncols, nrows, std::vector<std::uint8_t>(static_cast<std::size_t>(ncols) * nrows, 1)};
    }
    bool matches(const BandGrid& g) const noexcept { return ncols == g.ncols && nrows == g.nrows; }
    std::size_t count() const noexcept;
    friend bool operator==(const PixelMask&, const PixelMask&) = default;
};

enum class IndexKind { NDVI, EVI, NDWI };

std::string_view index_name(IndexKind kind) noexcept;
std::optional<IndexKind> parse_index_kind(std::string_view name);
std::vector<std::string> required_bands(IndexKind kind);
inline constexpr IndexKind kAllIndices[] = {IndexKind::NDVI, IndexKind::EVI, IndexKind::NDWI};

struct IndexStats {
    IndexKind kind = IndexKind::NDVI;
    double max = 0;
    double mean = 0;
    double min = 0;
    double std_dev = 0;
    std::size_t pixel_count = 0;
    DateRange window{};
};

/// {"NDVI_max", "NDVI_mean", "NDVI_min", "NDVI_stdDev", "index", "pixel_count", "window"}
nlohmann::json to_json(const IndexStats& stats);
IndexStats index_stats_from_json(const nlohmann::json& j);

// ESRI ASCII grid -----------------------------------------------------------

BandGrid load_ascii_grid(std::string_view text);
/// Canonical form: fixed key order, shortest round-trip numbers.
std::string write_ascii_grid(const BandGrid& grid);

/// Sniffs the payload: ESRI ASCII is parsed directly, TIFF is converted by
/// the external `gdal_translate` tool when it is on PATH.
BandGrid load_band_bytes(std::string_view bytes);

// Index math ----------------------------------------------------------------

double index_value(IndexKind kind, double red, double nir, double blue, double green) noexcept;
BandGrid compute_index(const SceneStack& stack, IndexKind kind);

/// Sentinel-2 SCL classes masked by default: cloud shadow, cloud medium and
/// high probability, thin cirrus.
inline const std::set<int> kDefaultExcludedScl = {3, 8, 9, 10};

PixelMask scl_cloud_mask(const BandGrid& scl, const std::set<int>& excluded_classes);

/// Per-pixel median over unmasked valid observations.
BandGrid temporal_composite(std::span<const SceneStack> stacks, IndexKind kind, std::span<const PixelMask> masks);

double median(std::vector<double> values);

// Zones ---------------------------------------------------------------------

/// Even-odd ray casting over all rings; points on any edge count as inside.
bool point_in_polygon(const PlotGeometry& geom, double x, double y);

struct PolygonMask {
    PixelMask mask;
    bool disjoint_extent = false;
};

PolygonMask rasterize_polygon_mask(const PlotGeometry& geom, const BandGrid& grid_georef);

/// Throws Error(NoValidPixels) when the mask selects no valid pixel.
IndexStats zonal_stats(const BandGrid& index, const PixelMask& mask, IndexKind kind, const DateRange& window);

}  // namespace agro::raster
