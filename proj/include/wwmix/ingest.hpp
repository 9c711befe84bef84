#pragma once
#ifndef WWMIX_INGEST_HPP_
#define WWMIX_INGEST_HPP_

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/dates.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/io.hpp"

namespace wwmix {

/// One sequencing observation of a mutation on a date.
struct RawMutationRow {
    std::string sample_id;
    Date date;
    std::string mutation;
    long position = 0;
    long count = 0;
    long coverage = 0;

    void validate() const {
        detail::require(count >= 0 && coverage >= 0,
                        "raw row '" + mutation + "': counts and coverages must be non-negative");
        detail::require(count <= coverage, "raw row '" + mutation + "' on " + date.iso() +
                                               ": count " + std::to_string(count) +
                                               " exceeds coverage " + std::to_string(coverage));
        detail::require(!mutation.empty(), "raw row: empty mutation label");
    }
};

/// Mutation-selection and panel-construction settings.
struct FilterConfig {
    long min_depth = 40;            // depth needed for a date to count toward dynamics
    int dynamics_d = 10;            // how many qualifying dates each condition requires
    double low_freq = 0.10;         // "present": frequency >= low_freq
    double high_freq = 0.90;        // "not fixed": frequency < high_freq (strict)
    long zero_depth_replacement = 1;  // depth substituted for missing/zero-depth cells
    std::string site;               // free-form label carried into panel metadata

    void validate() const {
        detail::require(min_depth >= 1, "FilterConfig: min_depth must be >= 1");
        detail::require(dynamics_d >= 1, "FilterConfig: dynamics_d must be >= 1");
        detail::require(low_freq >= 0.0 && low_freq <= 1.0, "FilterConfig: low_freq outside [0,1]");
        detail::require(high_freq >= 0.0 && high_freq <= 1.0,
                        "FilterConfig: high_freq outside [0,1]");
        detail::require(low_freq < high_freq, "FilterConfig: low_freq must be below high_freq");
        detail::require(zero_depth_replacement >= 1,
                        "FilterConfig: zero_depth_replacement must be >= 1");
    }
};

/// Sum counts and coverages of rows sharing (date, mutation).  Output is
/// sorted by (date, mutation); sample ids collapse to the first seen.
inline std::vector<RawMutationRow> merge_same_day(const std::vector<RawMutationRow>& rows) {
    for (const auto& r : rows) r.validate();
    std::map<std::pair<Date, std::string>, RawMutationRow> merged;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.date, r.mutation);
        auto it = merged.find(key);
        if (it == merged.end()) {
            merged.emplace(std::move(key), r);
        } else {
            it->second.count += r.count;
            it->second.coverage += r.coverage;
        }
    }
    std::vector<RawMutationRow> out;
    out.reserve(merged.size());
    for (auto& [key, row] : merged) out.push_back(std::move(row));
    return out;
}

/// Dynamics filter: keep mutations that, among dates with coverage >= min_depth,
/// show frequency >= low_freq on at least dynamics_d dates AND frequency
/// < high_freq on at least dynamics_d dates.  Input must be day-merged.
inline std::set<std::string> select_mutations(const std::vector<RawMutationRow>& merged,
                                              const FilterConfig& cfg) {
    cfg.validate();
    std::map<std::string, std::pair<int, int>> tallies;  // mutation -> (n_present, n_not_fixed)
    for (const auto& r : merged) {
        r.validate();
        auto& tally = tallies[r.mutation];  // ensure every mutation is considered
        if (r.coverage < cfg.min_depth) continue;
        const double freq = static_cast<double>(r.count) / static_cast<double>(r.coverage);
        if (freq >= cfg.low_freq) ++tally.first;
        if (freq < cfg.high_freq) ++tally.second;
    }
    std::set<std::string> selected;
    for (const auto& [mutation, tally] : tallies)
        if (tally.first >= cfg.dynamics_d && tally.second >= cfg.dynamics_d)
            selected.insert(mutation);
    return selected;
}

/// Assemble the panel over all dates present in `merged` and the selected
/// mutations.  Cells with no observation, or an observed depth of zero, get
/// count 0 and depth cfg.zero_depth_replacement.
inline MutationPanel build_panel(const std::vector<RawMutationRow>& merged,
                                 const std::set<std::string>& selected,
                                 const FilterConfig& cfg) {
    cfg.validate();
    detail::require(!selected.empty(), "build_panel: no mutations selected");
    std::set<Date> date_set;
    std::set<std::string> seen;
    for (const auto& r : merged) {
        date_set.insert(r.date);
        seen.insert(r.mutation);
    }
    for (const auto& m : selected)
        detail::require(seen.count(m) > 0,
                        "build_panel: selected mutation '" + m + "' has no observations");
    const std::vector<std::string> mutations(selected.begin(), selected.end());
    const std::vector<Date> dates(date_set.begin(), date_set.end());
    std::map<std::string, std::size_t> mutation_index;
    std::map<Date, std::size_t> date_index;
    for (std::size_t i = 0; i < mutations.size(); ++i) mutation_index[mutations[i]] = i;
    for (std::size_t t = 0; t < dates.size(); ++t) date_index[dates[t]] = t;

    MatrixI counts(mutations.size(), dates.size(), 0);
    MatrixI depths(mutations.size(), dates.size(), static_cast<int>(cfg.zero_depth_replacement));
    for (const auto& r : merged) {
        auto it = mutation_index.find(r.mutation);
        if (it == mutation_index.end()) continue;
        if (r.coverage <= 0) continue;  // leave the zero-depth replacement in place
        const std::size_t i = it->second;
        const std::size_t t = date_index.at(r.date);
        counts(i, t) = static_cast<int>(r.count);
        depths(i, t) = static_cast<int>(r.coverage);
    }
    return MutationPanel(mutations, dates, std::move(counts), std::move(depths), cfg.site);
}

/// merge + select + build in one step.
inline MutationPanel preprocess(const std::vector<RawMutationRow>& rows, const FilterConfig& cfg) {
    const auto merged = merge_same_day(rows);
    const auto selected = select_mutations(merged, cfg);
    return build_panel(merged, selected, cfg);
}

/// Reader for the raw TSV export with header
/// `sample_id\tdate\tmutation\tposition\tcount\tcoverage`.
inline std::vector<RawMutationRow> read_mutation_tsv(const std::filesystem::path& path) {
    const auto lines = io::read_lines(path);
    detail::require(!lines.empty(), "'" + path.string() + "' is empty");
    const auto header = io::split(lines[0], '\t');
    const std::vector<std::string> expected = {"sample_id", "date",  "mutation",
                                               "position",  "count", "coverage"};
    if (header != expected) {
        std::string got;
        for (const auto& h : header) got += (got.empty() ? "" : " ") + h;
        throw ParseError("'" + path.string() + "': unexpected header '" + got + "'");
    }
    std::vector<RawMutationRow> rows;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (lines[n].empty()) continue;
        const auto f = io::split(lines[n], '\t');
        const std::string ctx = path.string() + " line " + std::to_string(n + 1);
        if (f.size() != 6) throw ParseError(ctx + ": expected 6 fields, got " +
                                            std::to_string(f.size()));
        RawMutationRow row;
        row.sample_id = f[0];
        row.date = Date::parse(f[1]);
        row.mutation = f[2];
        row.position = io::parse_long(f[3], ctx);
        row.count = io::parse_long(f[4], ctx);
        row.coverage = io::parse_long(f[5], ctx);
        row.validate();
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace wwmix

#endif  // WWMIX_INGEST_HPP_
