#pragma once
#ifndef WWMIX_IO_HPP_
#define WWMIX_IO_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"

namespace wwmix {
namespace io {

// Labels in this domain (mutation names, lineage names, ISO dates) never
// contain separators, so CSV/TSV handling is plain splitting with no quoting.

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Shortest decimal that round-trips a double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec <= 16; ++prec) {
            char shorter[40];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

inline double parse_double(const std::string& s, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError(context + ": expected a number, got '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& context) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw ParseError(context + ": expected an integer, got '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Labeled matrix CSV: header "corner,col1,col2,..."; one label per row.
// ---------------------------------------------------------------------------

struct LabeledMatrix {
    std::string corner;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    MatrixD values;
};

template <typename T, typename Formatter>
std::string matrix_csv(const std::string& corner, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels, const Matrix<T>& m,
                       Formatter format_cell) {
    detail::require_shape(m.rows() == row_labels.size() && m.cols() == col_labels.size(),
                          "matrix_csv: label counts must match the matrix shape");
    std::string out = corner;
    for (const auto& c : col_labels) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out += row_labels[r];
        for (std::size_t c = 0; c < m.cols(); ++c) out += "," + format_cell(m(r, c));
        out += "\n";
    }
    return out;
}

inline std::string matrix_csv(const std::string& corner, const std::vector<std::string>& rows,
                              const std::vector<std::string>& cols, const MatrixD& m) {
    return matrix_csv(corner, rows, cols, m, [](double v) { return format_double(v); });
}

inline std::string matrix_csv(const std::string& corner, const std::vector<std::string>& rows,
                              const std::vector<std::string>& cols, const MatrixI& m) {
    return matrix_csv(corner, rows, cols, m, [](int v) { return std::to_string(v); });
}

inline LabeledMatrix read_matrix_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw ParseError("'" + path.string() + "' is empty");
    auto header = split(lines[0], ',');
    LabeledMatrix out;
    out.corner = header[0];
    out.col_labels.assign(header.begin() + 1, header.end());
    std::size_t n_rows = 0;
    for (std::size_t r = 1; r < lines.size(); ++r)
        if (!lines[r].empty()) ++n_rows;
    out.values = MatrixD(n_rows, out.col_labels.size());
    std::size_t row = 0;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto fields = split(lines[r], ',');
        if (fields.size() != out.col_labels.size() + 1)
            throw ParseError("'" + path.string() + "' line " + std::to_string(r + 1) +
                             ": expected " + std::to_string(out.col_labels.size() + 1) +
                             " fields, got " + std::to_string(fields.size()));
        out.row_labels.push_back(fields[0]);
        for (std::size_t c = 0; c < out.col_labels.size(); ++c)
            out.values(row, c) =
                parse_double(fields[c + 1], path.string() + " line " + std::to_string(r + 1));
        ++row;
    }
    return out;
}

// ---------------------------------------------------------------------------
// key=value metadata files
// ---------------------------------------------------------------------------

using MetaMap = std::map<std::string, std::string>;

inline std::string meta_string(const MetaMap& meta) {
    std::string out;
    for (const auto& [k, v] : meta) out += k + "=" + v + "\n";
    return out;
}

inline MetaMap read_meta(const std::filesystem::path& path) {
    MetaMap out;
    for (const auto& line : read_lines(path)) {
        if (line.empty() || line[0] == '#') continue;
        const auto pos = line.find('=');
        if (pos == std::string::npos)
            throw ParseError("'" + path.string() + "': malformed line '" + line + "'");
        out[line.substr(0, pos)] = line.substr(pos + 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Panel directory: counts.csv + depths.csv + panel.meta
// ---------------------------------------------------------------------------

inline void write_panel(const MutationPanel& panel, const std::filesystem::path& dir,
                        const MetaMap& extra_meta = {}) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> date_labels;
    for (const auto& d : panel.dates()) date_labels.push_back(d.iso());
    write_file(dir / "counts.csv",
               matrix_csv("mutation", panel.mutations(), date_labels, panel.counts()));
    write_file(dir / "depths.csv",
               matrix_csv("mutation", panel.mutations(), date_labels, panel.depths()));
    MetaMap meta = extra_meta;
    meta["n_mutations"] = std::to_string(panel.n_mutations());
    meta["n_dates"] = std::to_string(panel.n_dates());
    if (!panel.site().empty()) meta["site"] = panel.site();
    write_file(dir / "panel.meta", meta_string(meta));
}

inline MutationPanel read_panel(const std::filesystem::path& dir) {
    const auto counts = read_matrix_csv(dir / "counts.csv");
    const auto depths = read_matrix_csv(dir / "depths.csv");
    if (counts.row_labels != depths.row_labels || counts.col_labels != depths.col_labels)
        throw ParseError("panel '" + dir.string() + "': counts.csv and depths.csv disagree");
    std::vector<Date> dates;
    for (const auto& s : counts.col_labels) dates.push_back(Date::parse(s));
    MatrixI c(counts.values.rows(), counts.values.cols());
    MatrixI d(depths.values.rows(), depths.values.cols());
    for (std::size_t i = 0; i < c.size(); ++i) {
        c.data()[i] = static_cast<int>(counts.values.data()[i]);
        d.data()[i] = static_cast<int>(depths.values.data()[i]);
    }
    std::string site;
    if (std::filesystem::exists(dir / "panel.meta")) {
        auto meta = read_meta(dir / "panel.meta");
        if (auto it = meta.find("site"); it != meta.end()) site = it->second;
    }
    return MutationPanel(counts.row_labels, dates, std::move(c), std::move(d), site);
}

}  // namespace io
}  // namespace wwmix

#endif  // WWMIX_IO_HPP_
