#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "entropic/grid.hpp"

namespace entropic::csv {

/// Shortest decimal string that parses back to exactly `v` ("nan", "inf", "-inf" otherwise).
inline std::string format(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw UsageError("csv: cannot parse number '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Grid CSV: the header row lists `n,lo,hi` for every axis; the remaining rows hold the
/// row-major samples, one row per line of the last axis.
inline void write_grid(std::ostream& os, const RealField& f) {
    const auto& spec = f.spec;
    for (std::size_t k = 0; k < spec.dims(); ++k) {
        const auto& a = spec.axis(k);
        if (k) os << ',';
        os << a.n << ',' << format(a.lo) << ',' << format(a.hi);
    }
    os << '\n';
    const std::size_t row = spec.axis(spec.dims() - 1).n;
    for (std::size_t i = 0; i < f.size(); ++i) {
        os << format(f[i]);
        os << (((i + 1) % row == 0) ? '\n' : ',');
    }
}

inline void write_grid(const std::string& path, const RealField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot open '" + path + "' for writing");
    write_grid(os, f);
}

inline RealField read_grid(std::istream& is, Boundary boundary = Boundary::dirichlet_zero) {
    std::string line;
    if (!std::getline(is, line)) throw UsageError("grid csv: missing header row");
    const auto head = split(line);
    if (head.empty() || head.size() % 3 != 0)
        throw UsageError("grid csv: header must hold n,lo,hi per axis");
    std::vector<Axis> axes;
    for (std::size_t k = 0; k < head.size(); k += 3) {
        const double n = parse(head[k]);
        if (!(n >= 1) || n != std::floor(n)) throw UsageError("grid csv: axis size must be a positive integer");
        axes.push_back(Axis{parse(head[k + 1]), parse(head[k + 2]), static_cast<std::size_t>(n)});
    }
    GridSpec spec(std::move(axes), boundary);
    std::vector<double> values;
    values.reserve(spec.size());
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        for (const auto& tok : split(line)) values.push_back(parse(tok));
    }
    if (values.size() != spec.size())
        throw UsageError("grid csv: expected " + std::to_string(spec.size()) + " values, found " +
                         std::to_string(values.size()));
    return RealField(std::move(spec), std::move(values));
}

inline RealField read_grid(const std::string& path, Boundary boundary = Boundary::dirichlet_zero) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open grid csv '" + path + "'");
    return read_grid(is, boundary);
}

} // namespace entropic::csv
