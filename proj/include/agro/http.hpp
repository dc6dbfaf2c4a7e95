#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace agro::http {

struct Url {
    std::string scheme;  // "http" or "https"
    std::string host;
    int port = 0;
    std::string path;  // includes the query string, always starts with '/'

    std::string origin() const;
    /// Path with `suffix` appended, avoiding a doubled '/'.
    std::string join(std::string_view suffix) const;
};

std::optional<Url> parse_url(std::string_view text);

std::string url_encode(std::string_view s);

using Headers = std::multimap<std::string, std::string>;

enum class Transport { Ok, Timeout, ConnectionFailed, Other };

struct Response {
    Transport transport = Transport::Other;
    int status = 0;
    std::string body;
    std::string content_type;
    std::string transport_error;  // human-readable, set when transport != Ok

    bool ok() const { return transport == Transport::Ok && status >= 200 && status < 300; }
};

Response get(const std::string& url, const Headers& headers, double timeout_s);
Response post(const std::string& url, const std::string& body, const std::string& content_type,
              const Headers& headers, double timeout_s);

}  // namespace agro::http
