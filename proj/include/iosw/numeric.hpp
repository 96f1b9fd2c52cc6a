#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "iosw/errors.hpp"

namespace iosw {

/// Shortest decimal rendering that round-trips to the same double.
/// Locale-free, so CSV output is byte-reproducible.
inline std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

/// Strict decimal parse: the whole field must be one plain number
/// (no locale separators, no surrounding whitespace).
inline double parse_double_strict(std::string_view field, std::size_t line,
                                  std::size_t col) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError("expected a number, got '" + std::string(field) + "'",
                         line, col);
    }
    return value;
}

inline long parse_long_strict(std::string_view field, std::size_t line,
                              std::size_t col) {
    long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError("expected an integer, got '" + std::string(field) + "'",
                         line, col);
    }
    return value;
}

/// Split one CSV line on commas. No quoting: none of the formats used here
/// permit embedded commas.
inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

/// Linear-interpolation quantile (the common "type 7" rule) on a copy of the
/// data. q in [0,1]; data must be nonempty.
inline double quantile(std::vector<double> data, double q) {
    std::sort(data.begin(), data.end());
    if (data.size() == 1) return data[0];
    double pos = q * static_cast<double>(data.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = static_cast<std::size_t>(std::ceil(pos));
    double frac = pos - static_cast<double>(lo);
    return data[lo] + frac * (data[hi] - data[lo]);
}

inline double median(std::vector<double> data) { return quantile(std::move(data), 0.5); }

} // namespace iosw
