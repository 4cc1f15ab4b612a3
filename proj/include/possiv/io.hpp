#pragma once

#include "possiv/dataset.hpp"
#include "possiv/error.hpp"
#include "possiv/posterior.hpp"
#include "possiv/simulate.hpp"
#include "possiv/validify.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace possiv {

/// Round-trip-safe decimal rendering (17 significant digits).
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Curve table as written to and read from CSV.
struct CurveTable {
    std::vector<double> beta;
    std::vector<double> possibility;
    std::optional<std::vector<double>> validified;
};

inline CurveTable to_table(const PossibilityCurve& c) { return CurveTable{c.grid.points, c.possibility, std::nullopt}; }

inline CurveTable to_table(const ValidifiedCurve& c) {
    return CurveTable{c.base.grid.points, c.base.possibility, c.validified};
}

inline void write_curve_csv(std::ostream& os, const CurveTable& t) {
    os << "beta,possibility";
    if (t.validified) os << ",validified_possibility";
    os << '\n';
    for (std::size_t i = 0; i < t.beta.size(); ++i) {
        os << format_real(t.beta[i]) << ',' << format_real(t.possibility[i]);
        if (t.validified) os << ',' << format_real((*t.validified)[i]);
        os << '\n';
    }
}

inline void write_curve_csv(const std::string& path, const CurveTable& t) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path + "'");
    write_curve_csv(os, t);
}

inline CurveTable read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open curve file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("curve file '" + path + "' is empty");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "beta" || header[1] != "possibility")
        throw ParseError("curve file '" + path + "' must start with columns beta,possibility");
    const bool has_validified = header.size() >= 3 && header[2] == "validified_possibility";
    CurveTable t;
    if (has_validified) t.validified.emplace();
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) throw ParseError("curve file row " + std::to_string(row) + " is malformed");
        auto num = [&](std::size_t j) {
            auto v = detail::parse_real(fields[j]);
            if (!v) throw ParseError("curve file row " + std::to_string(row) + ": bad number '" + fields[j] + "'");
            return *v;
        };
        t.beta.push_back(num(0));
        t.possibility.push_back(num(1));
        if (has_validified) t.validified->push_back(num(2));
    }
    return t;
}

inline void write_coverage_csv(std::ostream& os, const CoverageReport& report) {
    os << "method,coverage,mean_width,reps,errors\n";
    for (const auto& r : report.rows) {
        std::string label = r.method;
        if (label.find_first_of(",\"") != std::string::npos) {
            std::string quoted = "\"";
            for (char ch : label) {
                if (ch == '"') quoted += '"';
                quoted += ch;
            }
            label = quoted + "\"";
        }
        os << label << ',' << format_real(r.coverage) << ',' << format_real(r.mean_width) << ','
           << r.replications << ',' << r.errors << '\n';
    }
}

inline void write_coverage_csv(const std::string& path, const CoverageReport& report) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path + "'");
    write_coverage_csv(os, report);
}

} // namespace possiv
