#pragma once

#include "possiv/error.hpp"
#include "possiv/linalg.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace possiv {

/// Observational data with columns mapped to their roles.
struct IvDataset {
    Vector y;
    Vector x;
    Matrix z;
    std::optional<Matrix> u;
    std::vector<std::string> instrument_names;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index p() const { return z.cols(); }
    Eigen::Index q() const { return u ? u->cols() : 0; }
};

/// Canonical (W, Z) form consumed by the estimators: W = [y x] after any
/// covariate projection, and gram = Z^T Z of the stored Z.
struct CanonicalData {
    Matrix w;
    Matrix z;
    Matrix gram;
    std::vector<std::string> instrument_names;

    Eigen::Index n() const { return w.rows(); }
    Eigen::Index p() const { return z.cols(); }
};

inline std::vector<std::string> default_instrument_names(Eigen::Index p) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("z" + std::to_string(j + 1));
    return names;
}

inline void validate(const IvDataset& d) {
    const auto n = d.n();
    if (d.x.size() != n || d.z.rows() != n || (d.u && d.u->rows() != n))
        throw DataError("outcome, treatment, instruments and covariates must have the same number of rows");
    if (d.p() < 1) throw DataError("at least one instrument is required");
    if (n < d.p() + d.q() + 2)
        throw DataError("need n >= p + q + 2 observations, got n=" + std::to_string(n) +
                        ", p=" + std::to_string(d.p()) + ", q=" + std::to_string(d.q()));
    if (!d.y.allFinite() || !d.x.allFinite() || !d.z.allFinite() || (d.u && !d.u->allFinite()))
        throw DataError("data contain non-finite entries");
    if (!has_full_column_rank(d.z)) throw DataError("instrument matrix is rank deficient");
    if (d.u && !has_full_column_rank(*d.u)) throw DataError("covariate matrix is rank deficient");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.emplace_back(trim(field));
    return fields;
}

inline std::optional<double> parse_real(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(value))
        return std::nullopt;
    return value;
}

} // namespace detail

/// Reads a header-led CSV file and maps columns to roles. When add_intercept
/// is set a column of ones is appended to the covariates.
inline IvDataset load_csv(const std::string& path, const std::string& outcome_col,
                          const std::string& treatment_col,
                          const std::vector<std::string>& instrument_cols,
                          const std::vector<std::string>& covariate_cols, bool add_intercept) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError("data file '" + path + "' is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);

    auto column_index = [&](const std::string& name) {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw ConfigError("column '" + name + "' not found in '" + path + "'");
    };
    if (instrument_cols.empty()) throw ConfigError("no instrument columns given");

    const std::size_t iy = column_index(outcome_col);
    const std::size_t ix = column_index(treatment_col);
    std::vector<std::size_t> iz, iu;
    for (const auto& c : instrument_cols) iz.push_back(column_index(c));
    for (const auto& c : covariate_cols) iu.push_back(column_index(c));

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        std::vector<double> row(fields.size(), 0.0);
        auto parse_cell = [&](std::size_t j) {
            const auto v = detail::parse_real(fields[j]);
            if (!v)
                throw ParseError("row " + std::to_string(line_no) + ", column '" + header[j] +
                                 "': cannot parse '" + fields[j] + "' as a finite number");
            row[j] = *v;
        };
        parse_cell(iy);
        parse_cell(ix);
        for (auto j : iz) parse_cell(j);
        for (auto j : iu) parse_cell(j);
        rows.push_back(std::move(row));
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    IvDataset d;
    d.y.resize(n);
    d.x.resize(n);
    d.z.resize(n, static_cast<Eigen::Index>(iz.size()));
    const auto q = static_cast<Eigen::Index>(iu.size()) + (add_intercept ? 1 : 0);
    if (q > 0) d.u = Matrix(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        d.y(i) = r[iy];
        d.x(i) = r[ix];
        for (std::size_t j = 0; j < iz.size(); ++j) d.z(i, static_cast<Eigen::Index>(j)) = r[iz[j]];
        for (std::size_t j = 0; j < iu.size(); ++j) (*d.u)(i, static_cast<Eigen::Index>(j)) = r[iu[j]];
        if (add_intercept) (*d.u)(i, q - 1) = 1.0;
    }
    d.instrument_names = instrument_cols;
    validate(d);
    return d;
}

/// Residuals of the column-wise least-squares regression of m on u, i.e. M_U m.
/// M_U itself is never formed.
inline Matrix residualise(const Matrix& u, const Matrix& m) {
    Eigen::HouseholderQR<Matrix> qr(u);
    return m - u * qr.solve(m);
}

inline CanonicalData project_out_covariates(const IvDataset& d) {
    CanonicalData c;
    c.w.resize(d.n(), 2);
    c.w.col(0) = d.y;
    c.w.col(1) = d.x;
    c.z = d.z;
    if (d.u) {
        if (!has_full_column_rank(*d.u)) throw DataError("covariate matrix is rank deficient");
        c.w = residualise(*d.u, c.w);
        c.z = residualise(*d.u, c.z);
        if (!has_full_column_rank(c.z))
            throw DataError("instruments are collinear with the covariates after projection");
    }
    c.gram = c.z.transpose() * c.z;
    c.instrument_names = d.instrument_names.empty() ? default_instrument_names(d.p()) : d.instrument_names;
    return c;
}

/// Rescales each instrument column to unit sample standard deviation.
inline CanonicalData standardise_instruments(CanonicalData c) {
    const auto n = c.n();
    if (n < 2) throw DataError("cannot standardise with fewer than two observations");
    for (Eigen::Index j = 0; j < c.p(); ++j) {
        auto col = c.z.col(j);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
        const double scale = col.cwiseAbs().maxCoeff();
        if (!(sd > 1e-14 * std::max(scale, 1e-300))) {
            const std::string name = static_cast<std::size_t>(j) < c.instrument_names.size()
                                         ? c.instrument_names[static_cast<std::size_t>(j)]
                                         : "z" + std::to_string(j + 1);
            throw DataError("instrument '" + name + "' has zero variance");
        }
        col /= sd;
    }
    c.gram = c.z.transpose() * c.z;
    return c;
}

/// Canonical data straight from matrices, bypassing CSV ingestion.
inline CanonicalData make_canonical(Matrix w, Matrix z) {
    if (w.cols() != 2 || w.rows() != z.rows()) throw DataError("w must be n x 2 with the same rows as z");
    CanonicalData c;
    c.gram = z.transpose() * z;
    c.instrument_names = default_instrument_names(z.cols());
    c.w = std::move(w);
    c.z = std::move(z);
    return c;
}

} // namespace possiv
