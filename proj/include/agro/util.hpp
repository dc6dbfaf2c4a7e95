#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agro {

std::string_view trim(std::string_view s) noexcept;
std::string to_upper(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Shortest decimal text that round-trips to the same double ("94", "0.763").
std::string format_shortest(double v);

/// Fixed-point text with `places` decimals, rounding half-up on the shortest
/// decimal representation of `v * 10^shift10`. Working on decimal digits keeps
/// 0.84675 -> "0.8468" even though the binary value sits just below the tie.
std::string format_fixed_half_up(double v, int places, int shift10 = 0);

/// Value of format_fixed_half_up parsed back.
double round_half_up(double v, int places);

/// Strict full-string number parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Calendar dates (UTC) -------------------------------------------------------

using Date = std::chrono::year_month_day;

struct DateRange {
    Date start;
    Date end;

    friend bool operator==(const DateRange&, const DateRange&) = default;
};

std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& d);

/// "YYYY-MM-DD/YYYY-MM-DD", start <= end.
std::optional<DateRange> parse_date_range(std::string_view text);
std::string format_date_range(const DateRange& r);

/// Window of `days` days ending at `end` (inclusive).
DateRange trailing_window(const Date& end, int days);
Date today_utc();

/// Parses the leading "YYYY-MM-DDTHH:MM:SS" of an RFC 3339 timestamp; the
/// fractional part and a trailing 'Z' are accepted and ignored.
std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text);
std::string format_timestamp(std::chrono::sys_seconds t);

// Files ---------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
/// Write to a temporary sibling and rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string random_hex(std::size_t bytes);

/// Replaces every "{{name}}" with vars[name]; unknown placeholders are kept.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace agro
