#include "agro/http.hpp"

#include <chrono>
#include <cstdio>

#include <httplib.h>

#include "agro/util.hpp"

namespace agro::http {

std::string Url::origin() const {
    return scheme + "://" + host + ":" + std::to_string(port);
}

std::string Url::join(std::string_view suffix) const {
    std::string out = path;
    while (!out.empty() && out.back() == '/') out.pop_back();
    if (!suffix.empty() && suffix.front() != '/') out.push_back('/');
    out += suffix;
    return out.empty() ? "/" : out;
}

std::optional<Url> parse_url(std::string_view text) {
    text = trim(text);
    Url url;
    auto sep = text.find("://");
    if (sep == std::string_view::npos) return std::nullopt;
    url.scheme = std::string(text.substr(0, sep));
    if (url.scheme != "http" && url.scheme != "https") return std::nullopt;
    text.remove_prefix(sep + 3);
    auto slash = text.find_first_of("/?");
    std::string_view authority = text.substr(0, slash);
    url.path = slash == std::string_view::npos ? "/" : std::string(text.substr(slash));
    if (url.path.front() == '?') url.path.insert(url.path.begin(), '/');
    if (authority.empty()) return std::nullopt;

    auto colon = authority.rfind(':');
    if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
        auto port = parse_int(authority.substr(colon + 1));
        if (!port || *port <= 0 || *port > 65535) return std::nullopt;
        url.port = static_cast<int>(*port);
        url.host = std::string(authority.substr(0, colon));
    } else {
        url.host = std::string(authority);
        url.port = url.scheme == "https" ? 443 : 80;
    }
    if (url.host.empty()) return std::nullopt;
    return url;
}

std::string url_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xfu]);
        }
    }
    return out;
}

namespace {

Response failure(Transport kind, std::string message) {
    Response r;
    r.transport = kind;
    r.transport_error = std::move(message);
    return r;
}

Response convert(const httplib::Result& result) {
    if (!result) {
        auto err = result.error();
        Transport kind = Transport::Other;
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) kind = Transport::Timeout;
        if (err == httplib::Error::Connection) kind = Transport::ConnectionFailed;
        return failure(kind, httplib::to_string(err));
    }
    Response r;
    r.transport = Transport::Ok;
    r.status = result->status;
    r.body = result->body;
    r.content_type = result->get_header_value("Content-Type");
    return r;
}

template <typename Fn>
Response with_client(const std::string& url_text, double timeout_s, Fn&& fn) {
    auto url = parse_url(url_text);
    if (!url) return failure(Transport::Other, "invalid URL: " + url_text);
    httplib::Client client(url->origin());
    if (!client.is_valid()) return failure(Transport::Other, "unsupported URL scheme: " + url_text);
    auto timeout = std::chrono::duration<double>(timeout_s);
    auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    client.set_connection_timeout(micros);
    client.set_read_timeout(micros);
    client.set_write_timeout(micros);
    client.set_follow_location(true);
    return convert(fn(client, url->path));
}

}  // namespace

Response get(const std::string& url, const Headers& headers, double timeout_s) {
    return with_client(url, timeout_s, [&](httplib::Client& c, const std::string& path) {
        return c.Get(path, httplib::Headers(headers.begin(), headers.end()));
    });
}

Response post(const std::string& url, const std::string& body, const std::string& content_type,
              const Headers& headers, double timeout_s) {
    return with_client(url, timeout_s, [&](httplib::Client& c, const std::string& path) {
        return c.Post(path, httplib::Headers(headers.begin(), headers.end()), body, content_type);
    });
}

}  // namespace agro::http
