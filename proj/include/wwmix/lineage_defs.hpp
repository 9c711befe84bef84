#pragma once
#ifndef WWMIX_LINEAGE_DEFS_HPP_
#define WWMIX_LINEAGE_DEFS_HPP_

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/io.hpp"
#include "wwmix/matrix.hpp"

namespace wwmix {

/// Named collection of lineage -> mutation-set definitions (e.g. a barcode
/// table or a curated constellation file).
struct ReferenceCatalog {
    std::string source_label;
    std::map<std::string, std::set<std::string>> definitions;

    std::set<std::string> vocabulary() const {
        std::set<std::string> out;
        for (const auto& [name, muts] : definitions) out.insert(muts.begin(), muts.end());
        return out;
    }

    ReferenceCatalog subset(const std::vector<std::string>& lineages) const {
        ReferenceCatalog out;
        out.source_label = source_label;
        for (const auto& name : lineages) {
            auto it = definitions.find(name);
            detail::require(it != definitions.end(),
                            "catalog '" + source_label + "' has no lineage '" + name + "'");
            out.definitions[name] = it->second;
        }
        return out;
    }
};

/// Jaccard similarity |a∩b| / |a∪b|.  Inputs must be non-empty before any
/// vocabulary restriction; an empty union after restriction scores 0.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    detail::require(!a.empty() && !b.empty(), "jaccard: mutation sets must be non-empty");
    std::size_t inter = 0;
    for (const auto& m : a) inter += b.count(m);
    const std::size_t uni = a.size() + b.size() - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Jaccard after restricting both sets to `universe`.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b,
                      const std::set<std::string>& universe) {
    detail::require(!a.empty() && !b.empty(), "jaccard: mutation sets must be non-empty");
    std::set<std::string> ar, br;
    for (const auto& m : a)
        if (universe.count(m)) ar.insert(m);
    for (const auto& m : b)
        if (universe.count(m)) br.insert(m);
    if (ar.empty() && br.empty()) return 0.0;
    if (ar.empty() || br.empty()) return 0.0;
    return jaccard(ar, br);
}

/// Uniform view over catalogs and estimated definition sets for comparison.
struct DefinitionView {
    std::string source_label;
    std::vector<std::string> names;
    std::vector<std::set<std::string>> sets;
    std::set<std::string> vocabulary;
};

inline DefinitionView make_view(const ReferenceCatalog& catalog) {
    DefinitionView v;
    v.source_label = catalog.source_label;
    for (const auto& [name, muts] : catalog.definitions) {
        detail::require(!muts.empty(),
                        "catalog '" + catalog.source_label + "': lineage '" + name + "' is empty");
        v.names.push_back(name);
        v.sets.push_back(muts);
        v.vocabulary.insert(muts.begin(), muts.end());
    }
    return v;
}

inline DefinitionView make_view(const LineageDefinitionSet& defs, const std::string& label) {
    DefinitionView v;
    v.source_label = label;
    v.names = defs.names();
    for (std::size_t j = 0; j < defs.n_lineages(); ++j) v.sets.push_back(defs.mutation_set(j));
    // The estimate's vocabulary is the full panel it was fit on, not just the
    // union of member mutations: absence from a lineage is informative.
    v.vocabulary.insert(defs.mutation_universe().begin(), defs.mutation_universe().end());
    return v;
}

enum class VocabularyPolicy {
    None,    ///< compare raw sets
    Shared,  ///< restrict both sides to the intersection of source vocabularies
};

/// Pairwise Jaccard similarities, rows from `left`, columns from `right`.
inline MatrixD similarity_matrix(const DefinitionView& left, const DefinitionView& right,
                                 VocabularyPolicy policy = VocabularyPolicy::Shared) {
    std::set<std::string> shared;
    if (policy == VocabularyPolicy::Shared) {
        for (const auto& m : left.vocabulary)
            if (right.vocabulary.count(m)) shared.insert(m);
        detail::require(!shared.empty(), "similarity_matrix: sources '" + left.source_label +
                                             "' and '" + right.source_label +
                                             "' share no mutations");
    }
    auto restricted = [&](const std::set<std::string>& s) {
        if (policy == VocabularyPolicy::None) return s;
        std::set<std::string> out;
        for (const auto& m : s)
            if (shared.count(m)) out.insert(m);
        return out;
    };
    MatrixD sim(left.sets.size(), right.sets.size(), 0.0);
    for (std::size_t i = 0; i < left.sets.size(); ++i) {
        const auto a = restricted(left.sets[i]);
        for (std::size_t j = 0; j < right.sets.size(); ++j) {
            const auto b = restricted(right.sets[j]);
            if (a.empty() || b.empty()) {
                sim(i, j) = 0.0;  // nothing left after restriction
            } else {
                sim(i, j) = jaccard(a, b);
            }
        }
    }
    return sim;
}

/// Column order of `defs` sorted by descending Jaccard similarity to
/// `reference` (raw sets, no restriction).  Ties keep the original order.
inline std::vector<std::size_t> align_to_reference(const LineageDefinitionSet& defs,
                                                   const std::set<std::string>& reference) {
    detail::require(!reference.empty(), "align_to_reference: reference set is empty");
    std::vector<double> score(defs.n_lineages(), 0.0);
    for (std::size_t j = 0; j < defs.n_lineages(); ++j) {
        const auto s = defs.mutation_set(j);
        score[j] = s.empty() ? 0.0 : jaccard(s, reference);
    }
    std::vector<std::size_t> order(defs.n_lineages());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    return order;
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

/// Barcode CSV: header `lineage,mut1,mut2,...`; one row per lineage with
/// fractional cell values; membership means cell >= 0.5.
inline ReferenceCatalog load_barcode_csv(const std::filesystem::path& path,
                                         const std::string& label) {
    const auto table = io::read_matrix_csv(path);
    ReferenceCatalog catalog;
    catalog.source_label = label;
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        std::set<std::string> muts;
        for (std::size_t c = 0; c < table.col_labels.size(); ++c)
            if (table.values(r, c) >= 0.5) muts.insert(table.col_labels[c]);
        const auto& name = table.row_labels[r];
        detail::require(!muts.empty(),
                        "'" + path.string() + "': lineage '" + name + "' has no mutations");
        detail::require(catalog.definitions.emplace(name, std::move(muts)).second,
                        "'" + path.string() + "': duplicate lineage '" + name + "'");
    }
    return catalog;
}

/// Constellation JSON (one object): {"lineage": ["mut", ...], ...}.
/// Parsed with a minimal scanner so the library itself stays dependency-free.
inline ReferenceCatalog load_constellations_json(const std::filesystem::path& path,
                                                 const std::string& label) {
    const std::string text = io::read_file(path);
    ReferenceCatalog catalog;
    catalog.source_label = label;
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    };
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError("'" + path.string() + "': " + what + " near offset " +
                          std::to_string(pos));
    };
    auto read_string = [&]() -> std::string {
        skip_ws();
        if (pos >= text.size() || text[pos] != '"') throw fail("expected string");
        ++pos;
        std::string out;
        while (pos < text.size() && text[pos] != '"') {
            if (text[pos] == '\\') throw fail("escapes are not supported in labels");
            out += text[pos++];
        }
        if (pos >= text.size()) throw fail("unterminated string");
        ++pos;
        return out;
    };
    skip_ws();
    if (pos >= text.size() || text[pos] != '{') throw fail("expected '{'");
    ++pos;
    skip_ws();
    if (pos < text.size() && text[pos] == '}') return catalog;
    while (true) {
        const std::string name = read_string();
        skip_ws();
        if (pos >= text.size() || text[pos] != ':') throw fail("expected ':'");
        ++pos;
        skip_ws();
        if (pos >= text.size() || text[pos] != '[') throw fail("expected '['");
        ++pos;
        std::set<std::string> muts;
        skip_ws();
        if (pos < text.size() && text[pos] == ']') {
            ++pos;
        } else {
            while (true) {
                muts.insert(read_string());
                skip_ws();
                if (pos >= text.size()) throw fail("unterminated array");
                if (text[pos] == ',') {
                    ++pos;
                    continue;
                }
                if (text[pos] == ']') {
                    ++pos;
                    break;
                }
                throw fail("expected ',' or ']'");
            }
        }
        detail::require(!muts.empty(),
                        "'" + path.string() + "': lineage '" + name + "' has no mutations");
        detail::require(catalog.definitions.emplace(name, std::move(muts)).second,
                        "'" + path.string() + "': duplicate lineage '" + name + "'");
        skip_ws();
        if (pos >= text.size()) throw fail("unterminated object");
        if (text[pos] == ',') {
            ++pos;
            continue;
        }
        if (text[pos] == '}') break;
        throw fail("expected ',' or '}'");
    }
    return catalog;
}

/// Two-column TSV mapping mutation labels between nomenclatures
/// (`from\tto`, no header).  Unmapped labels pass through unchanged.
inline std::map<std::string, std::string> load_label_map(const std::filesystem::path& path) {
    std::map<std::string, std::string> out;
    const auto lines = io::read_lines(path);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        if (lines[n].empty() || lines[n][0] == '#') continue;
        const auto f = io::split(lines[n], '\t');
        if (f.size() != 2)
            throw ParseError("'" + path.string() + "' line " + std::to_string(n + 1) +
                             ": expected 2 tab-separated fields");
        detail::require(out.emplace(f[0], f[1]).second, "'" + path.string() + "' line " +
                                                            std::to_string(n + 1) +
                                                            ": duplicate source label '" + f[0] +
                                                            "'");
    }
    return out;
}

inline ReferenceCatalog apply_label_map(const ReferenceCatalog& catalog,
                                        const std::map<std::string, std::string>& label_map) {
    ReferenceCatalog out;
    out.source_label = catalog.source_label;
    for (const auto& [name, muts] : catalog.definitions) {
        std::set<std::string> mapped;
        for (const auto& m : muts) {
            auto it = label_map.find(m);
            mapped.insert(it == label_map.end() ? m : it->second);
        }
        out.definitions[name] = std::move(mapped);
    }
    return out;
}

}  // namespace wwmix

#endif  // WWMIX_LINEAGE_DEFS_HPP_
