#include "agro/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"

namespace agro::raster {

using nlohmann::json;

std::string check_grid(const BandGrid& g) {
    if (g.ncols <= 0 || g.nrows <= 0) return "grid dimensions must be positive";
    if (!(g.cellsize > 0)) return "cellsize must be positive";
    if (g.values.size() != static_cast<std::size_t>(g.ncols) * static_cast<std::size_t>(g.nrows))
        return "value count does not match ncols*nrows";
    return {};
}

const BandGrid& SceneStack::band(const std::string& name) const {
    auto it = bands.find(name);
    if (it == bands.end())
        throw Error(Errc::MissingBand, "scene " + scene_id + " is missing band '" + name + "'");
    return it->second;
}

const BandGrid& SceneStack::reference() const {
    if (bands.empty()) throw Error(Errc::MissingBand, "scene " + scene_id + " has no bands");
    return bands.begin()->second;
}

void SceneStack::check_georef() const {
    const auto& ref = reference();
    for (const auto& [name, grid] : bands)
        if (!grid.same_georef(ref))
            throw Error(Errc::GeoreferenceMismatch, "band '" + name + "' of scene " + scene_id +
                                                        " has a different georeference");
}

std::size_t PixelMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::string_view index_name(IndexKind kind) noexcept {
    switch (kind) {
        case IndexKind::NDVI: return "NDVI";
        case IndexKind::EVI: return "EVI";
        case IndexKind::NDWI: return "NDWI";
    }
    return "?";
}

std::optional<IndexKind> parse_index_kind(std::string_view name) {
    auto upper = to_upper(trim(name));
    for (auto kind : kAllIndices)
        if (upper == index_name(kind)) return kind;
    return std::nullopt;
}

std::vector<std::string> required_bands(IndexKind kind) {
    switch (kind) {
        case IndexKind::NDVI: return {"nir", "red"};
        case IndexKind::EVI: return {"nir", "red", "blue"};
        case IndexKind::NDWI: return {"green", "nir"};
    }
    return {};
}

json to_json(const IndexStats& s) {
    const std::string k(index_name(s.kind));
    return {{"index", k},
            {k + "_max", s.max},
            {k + "_mean", s.mean},
            {k + "_min", s.min},
            {k + "_stdDev", s.std_dev},
            {"pixel_count", s.pixel_count},
            {"window", {{"start", format_date(s.window.start)}, {"end", format_date(s.window.end)}}}};
}

IndexStats index_stats_from_json(const json& j) {
    IndexStats s;
    auto kind = parse_index_kind(j.at("index").get<std::string>());
    if (!kind) throw Error(Errc::InvalidArgument, "unknown index kind");
    s.kind = *kind;
    const std::string k(index_name(s.kind));
    s.max = j.at(k + "_max").get<double>();
    s.mean = j.at(k + "_mean").get<double>();
    s.min = j.at(k + "_min").get<double>();
    s.std_dev = j.at(k + "_stdDev").get<double>();
    s.pixel_count = j.value("pixel_count", std::size_t{0});
    if (j.contains("window")) {
        auto start = parse_date(j["window"].at("start").get<std::string>());
        auto end = parse_date(j["window"].at("end").get<std::string>());
        if (start && end) s.window = {*start, *end};
    }
    return s;
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid

BandGrid load_ascii_grid(std::string_view text) {
    auto fail = [](const std::string& why) { return Error(Errc::GridParseError, "ASCII grid: " + why); };
    std::istringstream in{std::string(text)};
    std::map<std::string, double> header;
    std::string token;
    std::vector<double> values;

    while (in >> token) {
        if (std::isalpha(static_cast<unsigned char>(token[0]))) {
            if (!values.empty()) throw fail("header key '" + token + "' after data values");
            std::string key;
            for (char c : token) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            std::string value_text;
            if (!(in >> value_text)) throw fail("header key '" + token + "' has no value");
            auto value = parse_double(value_text);
            if (!value) throw fail("non-numeric header value '" + value_text + "'");
            header[key] = *value;
            continue;
        }
        auto value = parse_double(token);
        if (!value) throw fail("non-numeric token '" + token + "'");
        values.push_back(*value);
    }

    auto require = [&](const std::string& key) {
        auto it = header.find(key);
        if (it == header.end()) throw fail("missing header key " + key);
        return it->second;
    };
    BandGrid grid;
    double ncols = require("ncols"), nrows = require("nrows");
    if (ncols != std::floor(ncols) || nrows != std::floor(nrows) || ncols <= 0 || nrows <= 0)
        throw fail("ncols/nrows must be positive integers");
    grid.ncols = static_cast<int>(ncols);
    grid.nrows = static_cast<int>(nrows);
    grid.cellsize = require("cellsize");
    if (!(grid.cellsize > 0)) throw fail("cellsize must be positive");
    if (header.count("xllcorner")) {
        grid.origin_x = header["xllcorner"];
    } else if (header.count("xllcenter")) {
        grid.origin_x = header["xllcenter"] - grid.cellsize / 2;
    } else {
        throw fail("missing header key xllcorner");
    }
    if (header.count("yllcorner")) {
        grid.origin_y = header["yllcorner"];
    } else if (header.count("yllcenter")) {
        grid.origin_y = header["yllcenter"] - grid.cellsize / 2;
    } else {
        throw fail("missing header key yllcorner");
    }
    grid.nodata = header.count("nodata_value") ? header["nodata_value"] : kIndexNodata;

    const auto expected = static_cast<std::size_t>(grid.ncols) * static_cast<std::size_t>(grid.nrows);
    if (values.size() != expected)
        throw fail("header declares " + std::to_string(expected) + " cells, body has " +
                   std::to_string(values.size()));
    grid.values = std::move(values);
    return grid;
}

std::string write_ascii_grid(const BandGrid& g) {
    std::string out;
    out += "ncols " + std::to_string(g.ncols) + "\n";
    out += "nrows " + std::to_string(g.nrows) + "\n";
    out += "xllcorner " + format_shortest(g.origin_x) + "\n";
    out += "yllcorner " + format_shortest(g.origin_y) + "\n";
    out += "cellsize " + format_shortest(g.cellsize) + "\n";
    out += "NODATA_value " + format_shortest(g.nodata) + "\n";
    for (int r = 0; r < g.nrows; ++r) {
        for (int c = 0; c < g.ncols; ++c) {
            if (c) out.push_back(' ');
            out += format_shortest(g.at(r, c));
        }
        out.push_back('\n');
    }
    return out;
}

namespace {

BandGrid convert_with_gdal(std::string_view bytes) {
    namespace fs = std::filesystem;
    if (std::system("command -v gdal_translate >/dev/null 2>&1") != 0)
        throw Error(Errc::UnsupportedRasterFormat,
                    "GeoTIFF input requires gdal_translate on PATH; convert to ESRI ASCII grid first");
    auto dir = fs::temp_directory_path() / ("agro-raster-" + random_hex(6));
    fs::create_directories(dir);
    auto in = dir / "band.tif", out = dir / "band.asc";
    write_file(in, bytes);
    auto cmd = "gdal_translate -q -of AAIGrid '" + in.string() + "' '" + out.string() + "'";
    int rc = std::system(cmd.c_str());
    BandGrid grid;
    try {
        if (rc != 0) throw Error(Errc::UnsupportedRasterFormat, "gdal_translate failed with status " + std::to_string(rc));
        grid = load_ascii_grid(read_file(out));
    } catch (...) {
        fs::remove_all(dir);
        throw;
    }
    fs::remove_all(dir);
    return grid;
}

}  // namespace

BandGrid load_band_bytes(std::string_view bytes) {
    if (bytes.size() >= 4 && (bytes.substr(0, 4) == std::string_view("II*\0", 4) ||
                              bytes.substr(0, 4) == std::string_view("MM\0*", 4)))
        return convert_with_gdal(bytes);
    return load_ascii_grid(bytes);
}

// ---------------------------------------------------------------------------
// Index math

double index_value(IndexKind kind, double red, double nir, double blue, double green) noexcept {
    double num = 0, den = 0;
    switch (kind) {
        case IndexKind::NDVI:
            num = nir - red;
            den = nir + red;
            break;
        case IndexKind::EVI:
            num = 2.5 * (nir - red);
            den = nir + 6.0 * red - 7.5 * blue + 1.0;
            break;
        case IndexKind::NDWI:
            num = green - nir;
            den = green + nir;
            break;
    }
    if (!(std::fabs(den) >= kDenominatorGuard)) return kIndexNodata;
    return num / den;
}

BandGrid compute_index(const SceneStack& stack, IndexKind kind) {
    std::vector<const BandGrid*> inputs;
    for (const auto& name : required_bands(kind)) inputs.push_back(&stack.band(name));
    for (const auto* grid : inputs) {
        if (!grid->same_georef(*inputs.front()))
            throw Error(Errc::GeoreferenceMismatch, "bands of scene " + stack.scene_id + " are misaligned");
    }
    const BandGrid& ref = *inputs.front();
    static const BandGrid kAbsent{};
    auto pick = [&](const char* name) -> const BandGrid& {
        auto it = stack.bands.find(name);
        return it == stack.bands.end() ? kAbsent : it->second;
    };
    const BandGrid& red = pick("red");
    const BandGrid& nir = pick("nir");
    const BandGrid& blue = pick("blue");
    const BandGrid& green = pick("green");

    BandGrid out{ref.ncols, ref.nrows, ref.origin_x, ref.origin_y, ref.cellsize, kIndexNodata, {}};
    out.values.resize(ref.size(), kIndexNodata);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        bool valid = std::all_of(inputs.begin(), inputs.end(), [i](const BandGrid* g) { return !g->is_nodata(g->values[i]); });
        if (!valid) continue;
        auto value_of = [i](const BandGrid& g) { return g.values.empty() ? 0.0 : g.values[i]; };
        out.values[i] = index_value(kind, value_of(red), value_of(nir), value_of(blue), value_of(green));
    }
    return out;
}

PixelMask scl_cloud_mask(const BandGrid& scl, const std::set<int>& excluded_classes) {
    PixelMask mask{scl.ncols, scl.nrows, std::vector<std::uint8_t>(scl.size(), 0)};
    for (std::size_t i = 0; i < scl.size(); ++i) {
        double v = scl.values[i];
        if (scl.is_nodata(v)) continue;
        mask.bits[i] = excluded_classes.count(static_cast<int>(std::lround(v))) ? 0 : 1;
    }
    return mask;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error(Errc::EmptyInput, "median of an empty set");
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lower + upper) / 2.0;
}

BandGrid temporal_composite(std::span<const SceneStack> stacks, IndexKind kind, std::span<const PixelMask> masks) {
    if (stacks.empty()) throw Error(Errc::EmptyInput, "temporal composite needs at least one scene");
    if (!masks.empty() && masks.size() != stacks.size())
        throw Error(Errc::GeoreferenceMismatch, "one mask per scene is required");

    std::vector<BandGrid> layers;
    layers.reserve(stacks.size());
    for (const auto& stack : stacks) {
        layers.push_back(compute_index(stack, kind));
        if (!layers.back().same_georef(layers.front()))
            throw Error(Errc::GeoreferenceMismatch, "scene " + stack.scene_id + " has a different georeference");
    }
    for (const auto& mask : masks)
        if (!mask.matches(layers.front()))
            throw Error(Errc::GeoreferenceMismatch, "mask dimensions do not match the scene grid");

    BandGrid out = layers.front();
    std::vector<double> samples;
    for (std::size_t i = 0; i < out.size(); ++i) {
        samples.clear();
        for (std::size_t s = 0; s < layers.size(); ++s) {
            if (!masks.empty() && !masks[s].bits[i]) continue;
            double v = layers[s].values[i];
            if (!layers[s].is_nodata(v)) samples.push_back(v);
        }
        out.values[i] = samples.empty() ? kIndexNodata : median(samples);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Zones

namespace {

// Tolerance scales with coordinate magnitude so that centers computed as
// origin + k * cellsize still land on vertices they coincide with in decimal.
bool on_edge(const LonLat& a, const LonLat& b, double x, double y) {
    const double scale = std::max({1.0, std::abs(a.lon), std::abs(a.lat), std::abs(b.lon), std::abs(b.lat),
                                   std::abs(x), std::abs(y)});
    const double slack = 16 * std::numeric_limits<double>::epsilon() * scale;
    const double cross = (b.lon - a.lon) * (y - a.lat) - (b.lat - a.lat) * (x - a.lon);
    if (std::abs(cross) > slack * (std::abs(b.lon - a.lon) + std::abs(b.lat - a.lat))) return false;
    return std::min(a.lon, b.lon) - slack <= x && x <= std::max(a.lon, b.lon) + slack &&
           std::min(a.lat, b.lat) - slack <= y && y <= std::max(a.lat, b.lat) + slack;
}

}  // namespace

bool point_in_polygon(const PlotGeometry& geom, double x, double y) {
    bool inside = false;
    for (const auto& ring : geom.rings) {
        for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
            const auto& a = ring[i];
            const auto& b = ring[i + 1];
            if (on_edge(a, b, x, y)) return true;
            if ((a.lat > y) != (b.lat > y)) {
                double x_cross = a.lon + (y - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if (x < x_cross) inside = !inside;
            }
        }
    }
    return inside;
}

PolygonMask rasterize_polygon_mask(const PlotGeometry& geom, const BandGrid& grid) {
    PolygonMask result{{grid.ncols, grid.nrows, std::vector<std::uint8_t>(grid.size(), 0)}, false};
    const auto box = geom.bbox();
    if (!box.intersects(grid.extent())) {
        spdlog::warn("raster: polygon extent does not intersect the grid");
        result.disjoint_extent = true;
        return result;
    }
    // Restrict the scan to cells whose centers can fall inside the polygon bbox.
    auto clamp_col = [&](double x) { return std::clamp(static_cast<int>(std::floor((x - grid.origin_x) / grid.cellsize)), 0, grid.ncols - 1); };
    auto clamp_row = [&](double y) {
        return std::clamp(grid.nrows - 1 - static_cast<int>(std::floor((y - grid.origin_y) / grid.cellsize)), 0, grid.nrows - 1);
    };
    const int c0 = clamp_col(box.min_x), c1 = clamp_col(box.max_x);
    const int r0 = clamp_row(box.max_y), r1 = clamp_row(box.min_y);
    for (int r = r0; r <= r1; ++r) {
        const double y = grid.center_y(r);
        for (int c = c0; c <= c1; ++c) {
            if (point_in_polygon(geom, grid.center_x(c), y))
                result.mask.bits[static_cast<std::size_t>(r) * grid.ncols + c] = 1;
        }
    }
    if (result.mask.count() == 0) spdlog::debug("raster: polygon covers no pixel center");
    return result;
}

IndexStats zonal_stats(const BandGrid& index, const PixelMask& mask, IndexKind kind, const DateRange& window) {
    if (!mask.matches(index)) throw Error(Errc::GeoreferenceMismatch, "mask dimensions do not match the index grid");
    IndexStats stats;
    stats.kind = kind;
    stats.window = window;

    double sum = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
        double v = index.values[i];
        if (!mask.bits[i] || index.is_nodata(v)) continue;
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        ++n;
    }
    if (n == 0) throw Error(Errc::NoValidPixels, std::string(index_name(kind)) + ": no valid pixels inside the parcel");

    const double mean = sum / static_cast<double>(n);
    double sq = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
        double v = index.values[i];
        if (!mask.bits[i] || index.is_nodata(v)) continue;
        sq += (v - mean) * (v - mean);
    }
    stats.min = lo;
    stats.max = hi;
    stats.mean = std::clamp(mean, lo, hi);
    stats.std_dev = std::sqrt(sq / static_cast<double>(n));
    stats.pixel_count = n;
    return stats;
}

}  // namespace agro::raster
