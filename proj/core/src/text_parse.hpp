#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "gexse/error.hpp"

namespace gexse::textparse {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw_data("cannot open " + p.string());
    std::string s;
    is.seekg(0, std::ios::end);
    s.resize(static_cast<std::size_t>(is.tellg()));
    is.seekg(0);
    is.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ','; }

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t b = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > b) out.push_back(line.substr(b, i - b));
    }
    return out;
}

inline double to_double(std::string_view tok, const std::string& file, std::size_t line) {
    if (tok.size() == 3 && (tok[0] == 'N' || tok[0] == 'n') && (tok[1] == 'a' || tok[1] == 'A') &&
        (tok[2] == 'N' || tok[2] == 'n')) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw_data(file + ":" + std::to_string(line) + ": cannot parse '" + std::string(tok) + "' as a number");
    }
    return v;
}

inline long to_long(std::string_view tok, const std::string& file, std::size_t line) {
    const double v = to_double(tok, file, line);
    if (!std::isfinite(v) || v != std::floor(v)) {
        throw_data(file + ":" + std::to_string(line) + ": expected an integer, got '" + std::string(tok) + "'");
    }
    return static_cast<long>(v);
}

/// Calls fn(line_view, 1-based line number) for every non-empty line.
template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
    std::size_t line = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        ++line;
        std::string_view v(text.data() + pos, end - pos);
        if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
        if (v.find_first_not_of(" \t") != std::string_view::npos) fn(v, line);
        pos = end + 1;
    }
}

}  // namespace gexse::textparse
