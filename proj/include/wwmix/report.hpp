#pragma once
#ifndef WWMIX_REPORT_HPP_
#define WWMIX_REPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/io.hpp"
#include "wwmix/lineage_defs.hpp"
#include "wwmix/matrix.hpp"

namespace wwmix {

// ---------------------------------------------------------------------------
// Definition tables
// ---------------------------------------------------------------------------

/// CSV table of a definition set: one row per mutation (sorted
/// lexicographically by label), one 0/1 column per lineage.  Lossless under
/// parse_definition_table, and emission after parsing is byte-stable.
inline std::string definition_table(const LineageDefinitionSet& defs) {
    const auto& universe = defs.mutation_universe();
    std::vector<std::size_t> order(universe.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return universe[a] < universe[b]; });
    std::vector<std::string> rows(universe.size());
    Matrix<std::uint8_t> cells(universe.size(), defs.n_lineages(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) {
        rows[r] = universe[order[r]];
        for (std::size_t j = 0; j < defs.n_lineages(); ++j)
            cells(r, j) = defs.membership()(order[r], j);
    }
    return io::matrix_csv("mutation", rows, defs.names(), cells,
                          [](std::uint8_t v) { return std::to_string(static_cast<int>(v)); });
}

/// Same table with the lineage columns reordered by descending similarity to
/// `reference` (see align_to_reference).
inline std::string definition_table(const LineageDefinitionSet& defs,
                                    const std::set<std::string>& reference) {
    return definition_table(defs.reorder(align_to_reference(defs, reference)));
}

/// Inverse of definition_table.  The mutation universe keeps the file's row
/// order (already lexicographic for files this module emitted).
inline LineageDefinitionSet parse_definition_table(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    detail::require(!lines.empty(), "definition table: empty input");
    const auto header = io::split(lines[0], ',');
    detail::require(header.size() >= 2 && header[0] == "mutation",
                    "definition table: header must start with 'mutation' and name >= 1 lineage");
    const std::vector<std::string> names(header.begin() + 1, header.end());
    std::vector<std::string> universe;
    Matrix<std::uint8_t> membership(lines.size() - 1, names.size(), 0);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = io::split(lines[r], ',');
        detail::require_shape(cells.size() == header.size(),
                              "definition table: row " + std::to_string(r) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(header.size()));
        universe.push_back(cells[0]);
        for (std::size_t j = 0; j < names.size(); ++j) {
            detail::require(cells[j + 1] == "0" || cells[j + 1] == "1",
                            "definition table: cell at row " + std::to_string(r) +
                                " is '" + cells[j + 1] + "', expected 0 or 1");
            membership(r - 1, j) = cells[j + 1] == "1" ? 1 : 0;
        }
    }
    return LineageDefinitionSet(names, std::move(membership), std::move(universe));
}

// ---------------------------------------------------------------------------
// Comparison grids
// ---------------------------------------------------------------------------

/// Jaccard similarity matrix for one ordered source pair.  `available` is
/// false when the two sources share no vocabulary (the matrix is then empty).
struct PairSimilarity {
    std::size_t left = 0;
    std::size_t right = 0;
    bool available = false;
    MatrixD sim;
};

/// Upper-triangular grid of pairwise similarity matrices over >= 2 definition
/// sources.  Diagonal entries compare a source with itself; off-diagonal
/// entries restrict both sources to their shared vocabulary first.
struct ComparisonGrid {
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> lineage_names;
    std::vector<PairSimilarity> pairs;  // (a, b) with a <= b, ordered by a then b

    const PairSimilarity& pair(std::size_t a, std::size_t b) const {
        const std::size_t lo = std::min(a, b), hi = std::max(a, b);
        for (const auto& p : pairs)
            if (p.left == lo && p.right == hi) return p;
        throw InvariantError("ComparisonGrid: no pair (" + std::to_string(a) + ", " +
                             std::to_string(b) + ")");
    }
};

inline ComparisonGrid comparison_grid(const std::vector<DefinitionView>& sources) {
    detail::require(sources.size() >= 2, "comparison_grid: need at least 2 sources");
    ComparisonGrid grid;
    for (const auto& s : sources) {
        grid.labels.push_back(s.source_label);
        grid.lineage_names.push_back(s.names);
    }
    for (std::size_t a = 0; a < sources.size(); ++a) {
        for (std::size_t b = a; b < sources.size(); ++b) {
            PairSimilarity p;
            p.left = a;
            p.right = b;
            bool shared = false;
            for (const auto& m : sources[a].vocabulary)
                if (sources[b].vocabulary.count(m)) {
                    shared = true;
                    break;
                }
            if (shared) {
                p.sim = similarity_matrix(sources[a], sources[b], VocabularyPolicy::Shared);
                p.available = true;
            }
            grid.pairs.push_back(std::move(p));
        }
    }
    return grid;
}

namespace detail {

/// File-name-safe rendering of a source label.
inline std::string sanitize_label(const std::string& label) {
    std::string out;
    for (char c : label) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
        out += ok ? c : '_';
    }
    return out.empty() ? std::string{"source"} : out;
}

/// White -> dark blue ramp over [0, 1].
inline std::string heat_color(double v) {
    v = std::min(1.0, std::max(0.0, v));
    const auto channel = [&](double hi, double lo) {
        return static_cast<int>(std::lround(hi + (lo - hi) * v));
    };
    return "rgb(" + std::to_string(channel(255, 8)) + "," + std::to_string(channel(255, 48)) +
           "," + std::to_string(channel(255, 107)) + ")";
}

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// SVG coordinate/label formatter: fixed notation (viewers need not accept
/// scientific notation in length attributes), trailing zeros trimmed.
inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    std::string s = buf;
    while (s.find('.') != std::string::npos && s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    if (s == "-0") s = "0";
    return s;
}

}  // namespace detail

/// SVG heat grid: one tile per pair (upper triangle including the diagonal),
/// cells shaded white (0) to dark blue (1); unavailable pairs are crossed out.
/// Deterministic for fixed input.
inline std::string comparison_grid_svg(const ComparisonGrid& grid) {
    const double tile = 120.0, gap = 14.0, ml = 130.0, mt = 46.0;
    const std::size_t s = grid.labels.size();
    const double width = ml + static_cast<double>(s) * (tile + gap);
    const double height = mt + static_cast<double>(s) * (tile + gap);
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(width) +
                      "\" height=\"" + detail::num(height) + "\" font-family=\"monospace\">\n";
    for (std::size_t b = 0; b < s; ++b) {
        const double x = ml + static_cast<double>(b) * (tile + gap);
        svg += "<text x=\"" + detail::num(x + tile / 2) + "\" y=\"" + detail::num(mt - 12.0) +
               "\" text-anchor=\"middle\" font-size=\"12\">" +
               detail::svg_escape(grid.labels[b]) + "</text>\n";
    }
    for (std::size_t a = 0; a < s; ++a) {
        const double y = mt + static_cast<double>(a) * (tile + gap);
        svg += "<text x=\"" + detail::num(ml - 10.0) + "\" y=\"" + detail::num(y + tile / 2) +
               "\" text-anchor=\"end\" font-size=\"12\">" + detail::svg_escape(grid.labels[a]) +
               "</text>\n";
        for (std::size_t b = a; b < s; ++b) {
            const auto& p = grid.pair(a, b);
            const double x = ml + static_cast<double>(b) * (tile + gap);
            svg += "<g transform=\"translate(" + detail::num(x) + "," + detail::num(y) + ")\">\n";
            if (p.available) {
                const double cw = tile / static_cast<double>(p.sim.cols());
                const double ch = tile / static_cast<double>(p.sim.rows());
                for (std::size_t i = 0; i < p.sim.rows(); ++i)
                    for (std::size_t j = 0; j < p.sim.cols(); ++j)
                        svg += "<rect x=\"" + detail::num(static_cast<double>(j) * cw) +
                               "\" y=\"" + detail::num(static_cast<double>(i) * ch) +
                               "\" width=\"" + detail::num(cw) + "\" height=\"" +
                               detail::num(ch) + "\" fill=\"" +
                               detail::heat_color(p.sim(i, j)) + "\"/>\n";
            } else {
                svg += "<line x1=\"0\" y1=\"0\" x2=\"" + detail::num(tile) + "\" y2=\"" +
                       detail::num(tile) + "\" stroke=\"#999999\"/>\n";
                svg += "<line x1=\"0\" y1=\"" + detail::num(tile) + "\" x2=\"" +
                       detail::num(tile) + "\" y2=\"0\" stroke=\"#999999\"/>\n";
                svg += "<text x=\"" + detail::num(tile / 2) + "\" y=\"" +
                       detail::num(tile / 2) +
                       "\" text-anchor=\"middle\" font-size=\"12\">n/a</text>\n";
            }
            svg += "<rect x=\"0\" y=\"0\" width=\"" + detail::num(tile) + "\" height=\"" +
                   detail::num(tile) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
            svg += "</g>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

/// Emit one CSV per available pair (rows = left source lineages, columns =
/// right source lineages) plus the heat grid as grid.svg.  Unavailable pairs
/// get no CSV; they are visible only as crossed-out tiles.
inline void write_comparison_grid(const ComparisonGrid& grid, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& p : grid.pairs) {
        if (!p.available) continue;
        const std::string name = "pair_" + detail::sanitize_label(grid.labels[p.left]) + "_vs_" +
                                 detail::sanitize_label(grid.labels[p.right]) + ".csv";
        io::write_file(dir / name, io::matrix_csv("jaccard", grid.lineage_names[p.left],
                                                  grid.lineage_names[p.right], p.sim));
    }
    io::write_file(dir / "grid.svg", comparison_grid_svg(grid));
}

// ---------------------------------------------------------------------------
// Abundance plots
// ---------------------------------------------------------------------------

/// Fixed 12-color categorical palette; polylines cycle through it.
inline const std::vector<std::string>& plot_palette() {
    static const std::vector<std::string> p{
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
        "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};
    return p;
}

/// Line plot of one or more abundance series sharing a date axis: one
/// polyline per lineage per series, y fixed to [0, 1], legend on the right.
/// Deterministic for fixed input.
inline std::string abundance_plot(const std::vector<AbundanceSeries>& series,
                                  const std::vector<std::string>& labels) {
    detail::require(!series.empty(), "abundance_plot: need at least one series");
    detail::require_shape(labels.size() == series.size(),
                          "abundance_plot: one label per series");
    const auto& dates = series[0].dates();
    detail::require(!dates.empty(), "abundance_plot: need at least one date");
    for (const auto& s : series)
        detail::require_shape(s.dates() == dates, "abundance_plot: shared date axis required");
    const std::size_t t = dates.size();

    const double ml = 52.0, mr = 170.0, mt = 18.0, mb = 42.0;
    const double pw = 560.0, ph = 320.0;
    const double width = ml + pw + mr, height = mt + ph + mb;
    const auto xpos = [&](std::size_t i) {
        if (t == 1) return ml + pw / 2;
        return ml + pw * static_cast<double>(i) / static_cast<double>(t - 1);
    };
    const auto ypos = [&](double v) { return mt + ph * (1.0 - v); };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(width) +
                      "\" height=\"" + detail::num(height) + "\" font-family=\"monospace\">\n";
    // Frame and y ticks at 0, 0.25, ..., 1.
    svg += "<rect x=\"" + detail::num(ml) + "\" y=\"" + detail::num(mt) + "\" width=\"" +
           detail::num(pw) + "\" height=\"" + detail::num(ph) +
           "\" fill=\"none\" stroke=\"#333333\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = 0.25 * k;
        svg += "<line x1=\"" + detail::num(ml - 4.0) + "\" y1=\"" + detail::num(ypos(v)) +
               "\" x2=\"" + detail::num(ml) + "\" y2=\"" + detail::num(ypos(v)) +
               "\" stroke=\"#333333\"/>\n";
        svg += "<text x=\"" + detail::num(ml - 8.0) + "\" y=\"" + detail::num(ypos(v) + 4.0) +
               "\" text-anchor=\"end\" font-size=\"11\">" + detail::num(v) + "</text>\n";
    }
    // Date ticks: about 8, always including the first and last date.
    const std::size_t stride = std::max<std::size_t>(1, (t + 7) / 8);
    std::vector<std::size_t> ticks;
    for (std::size_t i = 0; i < t; i += stride) ticks.push_back(i);
    if (ticks.back() != t - 1) ticks.push_back(t - 1);
    for (const std::size_t idx : ticks) {
        svg += "<line x1=\"" + detail::num(xpos(idx)) + "\" y1=\"" + detail::num(mt + ph) +
               "\" x2=\"" + detail::num(xpos(idx)) + "\" y2=\"" + detail::num(mt + ph + 4.0) +
               "\" stroke=\"#333333\"/>\n";
        svg += "<text x=\"" + detail::num(xpos(idx)) + "\" y=\"" +
               detail::num(mt + ph + 18.0) + "\" text-anchor=\"middle\" font-size=\"10\">" +
               dates[idx].iso() + "</text>\n";
    }
    // Polylines and legend.
    std::size_t color = 0;
    double legend_y = mt + 12.0;
    for (std::size_t s = 0; s < series.size(); ++s) {
        for (std::size_t j = 0; j < series[s].n_lineages(); ++j) {
            const std::string& stroke = plot_palette()[color % plot_palette().size()];
            std::string points;
            for (std::size_t i = 0; i < t; ++i) {
                if (i) points += " ";
                points += detail::num(xpos(i)) + "," + detail::num(ypos(series[s].values()(j, i)));
            }
            svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + stroke +
                   "\" stroke-width=\"1.5\"/>\n";
            const std::string entry = series.size() == 1
                                          ? series[s].lineage_names()[j]
                                          : labels[s] + ":" + series[s].lineage_names()[j];
            svg += "<line x1=\"" + detail::num(ml + pw + 14.0) + "\" y1=\"" +
                   detail::num(legend_y - 4.0) + "\" x2=\"" + detail::num(ml + pw + 34.0) +
                   "\" y2=\"" + detail::num(legend_y - 4.0) + "\" stroke=\"" + stroke +
                   "\" stroke-width=\"1.5\"/>\n";
            svg += "<text x=\"" + detail::num(ml + pw + 40.0) + "\" y=\"" +
                   detail::num(legend_y) + "\" font-size=\"11\">" + detail::svg_escape(entry) +
                   "</text>\n";
            legend_y += 16.0;
            ++color;
        }
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace wwmix

#endif  // WWMIX_REPORT_HPP_
