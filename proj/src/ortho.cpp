#include "agro/ortho.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "agro/errors.hpp"
#include "agro/http.hpp"
#include "agro/prompt_assets.hpp"
#include "agro/util.hpp"

namespace agro::ortho {

OrthophotoRequest build_wms_request(const PlotGeometry& geom, double buffer_frac, int target_px, std::string layer,
                                    std::string format) {
    if (target_px < kMinImagePx || target_px > kMaxImagePx)
        throw Error(Errc::InvalidArgument, "target_px must be within [64, 4096]");
    if (buffer_frac < 0) throw Error(Errc::InvalidArgument, "buffer_frac must be non-negative");
    auto box = geom.bbox();
    if (!(box.width() > 0 && box.height() > 0))
        throw Error(Errc::DegenerateGeometry, "plot geometry has a zero-area bounding box");

    const double dx = box.width() * buffer_frac, dy = box.height() * buffer_frac;
    OrthophotoRequest req;
    req.bbox = {box.min_x - dx, box.min_y - dy, box.max_x + dx, box.max_y + dy};
    req.layer = std::move(layer);
    req.format = std::move(format);

    const double w = req.bbox.width(), h = req.bbox.height();
    auto scaled = [target_px](double ratio) {
        return std::clamp(static_cast<int>(std::lround(target_px * ratio)), kMinImagePx, kMaxImagePx);
    };
    if (w >= h) {
        req.width_px = target_px;
        req.height_px = scaled(h / w);
    } else {
        req.height_px = target_px;
        req.width_px = scaled(w / h);
    }
    return req;
}

std::string getmap_url(const OrthophotoRequest& req, const std::string& endpoint) {
    const auto& b = req.bbox;
    std::string bbox = format_shortest(b.min_y) + "," + format_shortest(b.min_x) + "," + format_shortest(b.max_y) +
                       "," + format_shortest(b.max_x);
    std::string url = endpoint;
    char sep = url.find('?') == std::string::npos ? '?' : '&';
    if (!url.empty() && (url.back() == '?' || url.back() == '&')) sep = '\0';
    if (sep) url.push_back(sep);
    url += "SERVICE=WMS&VERSION=1.3.0&REQUEST=GetMap";
    url += "&LAYERS=" + http::url_encode(req.layer);
    url += "&STYLES=";
    url += "&CRS=" + http::url_encode("EPSG:4326");
    url += "&BBOX=" + http::url_encode(bbox);
    url += "&WIDTH=" + std::to_string(req.width_px);
    url += "&HEIGHT=" + std::to_string(req.height_px);
    url += "&FORMAT=" + http::url_encode(req.format);
    return url;
}

namespace {

std::string base_mime(std::string_view content_type) {
    auto semi = content_type.find(';');
    auto mime = trim(content_type.substr(0, semi));
    std::string out;
    for (char c : mime) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::string service_exception_text(const std::string& body) {
    auto open = body.find("<ServiceException");
    if (open == std::string::npos) return std::string(trim(body.substr(0, 200)));
    auto start = body.find('>', open);
    auto end = body.find("</ServiceException>", open);
    if (start == std::string::npos || end == std::string::npos || end < start) return "malformed ServiceException";
    return std::string(trim(std::string_view(body).substr(start + 1, end - start - 1)));
}

bool is_xml(const std::string& mime, const std::string& body) {
    return mime.find("xml") != std::string::npos || body.rfind("<?xml", 0) == 0;
}

}  // namespace

OrthophotoImage fetch_orthophoto(const OrthophotoRequest& req, const std::string& endpoint, double timeout_s) {
    if (req.width_px < kMinImagePx || req.width_px > kMaxImagePx || req.height_px < kMinImagePx ||
        req.height_px > kMaxImagePx)
        throw Error(Errc::InvalidArgument, "orthophoto dimensions must be within [64, 4096]");
    if (!(req.bbox.min_x < req.bbox.max_x && req.bbox.min_y < req.bbox.max_y))
        throw Error(Errc::DegenerateGeometry, "orthophoto bbox is empty");

    auto url = getmap_url(req, endpoint);
    auto resp = http::get(url, {}, timeout_s);
    if (resp.transport != http::Transport::Ok)
        throw Error(Errc::WmsUnreachable, "WMS unreachable (" + resp.transport_error + ")");
    const auto mime = base_mime(resp.content_type);
    if (is_xml(mime, resp.body))
        throw Error(Errc::WmsError, "WMS service exception: " + service_exception_text(resp.body));
    if (resp.status >= 500) throw Error(Errc::WmsUnreachable, "WMS returned HTTP " + std::to_string(resp.status));
    if (!resp.ok()) throw Error(Errc::WmsError, "WMS returned HTTP " + std::to_string(resp.status));
    if (mime != "image/jpeg" && mime != "image/png")
        throw Error(Errc::UnexpectedContentType, "WMS returned content type '" + resp.content_type + "'");
    if (resp.body.empty()) throw Error(Errc::UnexpectedContentType, "WMS returned an empty image");
    spdlog::debug("wms: {} bytes of {}", resp.body.size(), mime);
    return {std::move(resp.body), mime, req.bbox};
}

std::string encode_base64(std::string_view bytes) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        auto n = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                 static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(kAlphabet[(n >> 6) & 63]);
        out.push_back(kAlphabet[n & 63]);
    }
    if (auto rest = bytes.size() - i; rest > 0) {
        unsigned n = static_cast<unsigned char>(bytes[i]) << 16;
        if (rest == 2) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(rest == 2 ? kAlphabet[(n >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

std::string encode_data_uri(const OrthophotoImage& img) {
    if (img.bytes.empty()) throw Error(Errc::InvalidArgument, "cannot encode an empty image");
    return "data:" + img.mime + ";base64," + encode_base64(img.bytes);
}

std::vector<llm::ChatMessage> build_terrain_prompt(const OrthophotoImage& img, const PlotAttributes& attrs) {
    std::string summary;
    summary += "Land use (registry label): " + attrs.land_use + "\n";
    summary += "Area (ha): " + format_shortest(attrs.area_ha) + "\n";
    summary += "Perimeter (m): " + format_shortest(attrs.perimeter_m) + "\n";
    summary += "Average slope (%): " + format_shortest(attrs.slope_pct) + "\n";
    summary += "Altitude (m): " + format_shortest(attrs.altitude_m);
    auto text = render_template(prompts::kTerrain, {{"attributes", summary}});

    llm::ChatMessage msg;
    msg.role = llm::ChatMessage::Role::User;
    msg.parts.push_back({llm::ContentPart::Kind::Text, std::move(text)});
    msg.parts.push_back({llm::ContentPart::Kind::ImageUrl, encode_data_uri(img)});
    return {std::move(msg)};
}

TerrainDescription describe_terrain(const OrthophotoImage& img, const PlotAttributes& attrs, const llm::Gateway& gateway) {
    auto messages = build_terrain_prompt(img, attrs);
    auto text = gateway.chat_complete(llm::ModelRole::Multimodal, messages);
    if (trim(text).empty()) throw Error(Errc::EmptyModelResponse, "multimodal model returned an empty description");
    return {std::move(text), gateway.endpoint(llm::ModelRole::Multimodal).model_name,
            std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now())};
}

}  // namespace agro::ortho
