#include "agro/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "agro/errors.hpp"

namespace agro {

std::string_view trim(std::string_view s) noexcept {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string format_shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return "nan";
    return {buf, end};
}

std::string format_fixed_half_up(double v, int places, int shift10) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    const bool negative = std::signbit(v) && v != 0.0;
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, std::fabs(v), std::chars_format::scientific);
    std::string_view sci(buf, static_cast<std::size_t>(end - buf));
    auto epos = sci.find('e');
    std::string digits;
    for (char c : sci.substr(0, epos))
        if (c != '.') digits.push_back(c);
    int exponent = 0;
    std::from_chars(sci.data() + epos + 1 + (sci[epos + 1] == '+' ? 1 : 0), sci.data() + sci.size(), exponent);

    // digits d0 d1 d2 ... represent d0.d1d2... * 10^exponent
    int point = exponent + 1 + shift10;
    if (point < 0) {
        digits.insert(0, static_cast<std::size_t>(-point), '0');
        point = 0;
    }
    const auto needed = static_cast<std::size_t>(point + places + 1);
    if (digits.size() < needed) digits.append(needed - digits.size(), '0');

    std::string kept = digits.substr(0, static_cast<std::size_t>(point + places));
    if (digits[static_cast<std::size_t>(point + places)] >= '5') {
        int i = static_cast<int>(kept.size()) - 1;
        while (i >= 0 && kept[static_cast<std::size_t>(i)] == '9') kept[static_cast<std::size_t>(i--)] = '0';
        if (i >= 0) {
            ++kept[static_cast<std::size_t>(i)];
        } else {
            kept.insert(kept.begin(), '1');
            ++point;
        }
    }
    std::string int_part = kept.substr(0, static_cast<std::size_t>(point));
    std::string frac_part = kept.substr(static_cast<std::size_t>(point));
    auto nz = int_part.find_first_not_of('0');
    int_part = nz == std::string::npos ? "0" : int_part.substr(nz);

    std::string out;
    bool all_zero = int_part == "0" && frac_part.find_first_not_of('0') == std::string::npos;
    if (negative && !all_zero) out.push_back('-');
    out += int_part;
    if (places > 0) {
        out.push_back('.');
        out += frac_part;
    }
    return out;
}

double round_half_up(double v, int places) {
    return *parse_double(format_fixed_half_up(v, places));
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::optional<long long> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int digits_value(std::string_view s) {
    int v = 0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
    text = trim(text);
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto y = text.substr(0, 4), m = text.substr(5, 2), d = text.substr(8, 2);
    if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return std::nullopt;
    Date date{std::chrono::year{digits_value(y)}, std::chrono::month{static_cast<unsigned>(digits_value(m))},
              std::chrono::day{static_cast<unsigned>(digits_value(d))}};
    if (!date.ok()) return std::nullopt;
    return date;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

std::optional<DateRange> parse_date_range(std::string_view text) {
    auto parts = split(trim(text), '/');
    if (parts.size() != 2) return std::nullopt;
    auto start = parse_date(parts[0]);
    auto end = parse_date(parts[1]);
    if (!start || !end) return std::nullopt;
    if (std::chrono::sys_days{*start} > std::chrono::sys_days{*end}) return std::nullopt;
    return DateRange{*start, *end};
}

std::string format_date_range(const DateRange& r) {
    return format_date(r.start) + "/" + format_date(r.end);
}

DateRange trailing_window(const Date& end, int days) {
    auto start = std::chrono::sys_days{end} - std::chrono::days{days};
    return {Date{start}, end};
}

Date today_utc() {
    return Date{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())};
}

std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text) {
    text = trim(text);
    if (text.size() < 10) return std::nullopt;
    auto date = parse_date(text.substr(0, 10));
    if (!date) return std::nullopt;
    std::chrono::sys_seconds t{std::chrono::sys_days{*date}};
    if (text.size() == 10) return t;
    if (text[10] != 'T' && text[10] != 't' && text[10] != ' ') return std::nullopt;
    if (text.size() < 19 || text[13] != ':' || text[16] != ':') return std::nullopt;
    auto hh = text.substr(11, 2), mm = text.substr(14, 2), ss = text.substr(17, 2);
    if (!all_digits(hh) || !all_digits(mm) || !all_digits(ss)) return std::nullopt;
    t += std::chrono::hours{digits_value(hh)} + std::chrono::minutes{digits_value(mm)} +
         std::chrono::seconds{digits_value(ss)};
    return t;
}

std::string format_timestamp(std::chrono::sys_seconds t) {
    auto days = std::chrono::floor<std::chrono::days>(t);
    std::chrono::hh_mm_ss hms{t - days};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(Date{days}).c_str(),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp-" + random_hex(4);
    write_file(tmp, contents);
    std::filesystem::rename(tmp, path);
}

std::string random_hex(std::size_t bytes) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes * 2);
    for (std::size_t i = 0; i < bytes; ++i) {
        auto b = static_cast<unsigned>(rng() & 0xffu);
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xfu]);
    }
    return out;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) break;
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(tmpl.substr(pos, open - pos));
        auto it = vars.find(std::string(tmpl.substr(open + 2, close - open - 2)));
        if (it != vars.end())
            out += it->second;
        else
            out.append(tmpl.substr(open, close + 2 - open));
        pos = close + 2;
    }
    out.append(tmpl.substr(pos));
    return out;
}

}  // namespace agro
