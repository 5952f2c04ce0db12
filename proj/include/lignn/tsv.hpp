#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace lignn::tsv {

inline std::vector<std::string_view> split(std::string_view line, char sep = '\t') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

/// True for blank lines and `#` comments.
inline bool skippable(std::string_view line) {
    line = trim(line);
    return line.empty() || line.front() == '#';
}

template <typename T>
std::optional<T> parse(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) return std::nullopt;
    }
    return value;
}

inline std::optional<std::vector<double>> parse_vector(std::string_view s, char sep = ',') {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (auto part : split(s, sep)) {
        auto v = parse<double>(part);
        if (!v) return std::nullopt;
        out.push_back(*v);
    }
    return out;
}

/// Shortest representation that parses back to the identical double.
inline std::string format(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::string format_vector(const double* data, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ',';
        out += format(data[i]);
    }
    return out;
}

}  // namespace lignn::tsv
