#pragma once
#ifndef WWMIX_SYNTH_HPP_
#define WWMIX_SYNTH_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/dates.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/io.hpp"
#include "wwmix/lineage_defs.hpp"
#include "wwmix/matrix.hpp"
#include "wwmix/mcmc.hpp"

namespace wwmix {

enum class WaveShape { LogisticCrossover, Plateau, Constant };

inline std::string to_string(WaveShape w) {
    switch (w) {
        case WaveShape::LogisticCrossover: return "logistic_crossover";
        case WaveShape::Plateau: return "plateau";
        case WaveShape::Constant: return "constant";
    }
    return "?";
}

inline WaveShape parse_wave_shape(const std::string& s) {
    if (s == "logistic_crossover") return WaveShape::LogisticCrossover;
    if (s == "plateau") return WaveShape::Plateau;
    if (s == "constant") return WaveShape::Constant;
    throw ConfigError("unknown wave_shape '" + s + "'");
}

struct DepthLaw {
    enum class Kind { Fixed, Uniform };
    Kind kind = Kind::Fixed;
    long fixed = 2000;
    long lo = 0;
    long hi = 0;

    static DepthLaw fixed_depth(long d) { return DepthLaw{Kind::Fixed, d, 0, 0}; }
    static DepthLaw uniform_depth(long lo, long hi) { return DepthLaw{Kind::Uniform, 0, lo, hi}; }

    void validate() const {
        if (kind == Kind::Fixed) {
            detail::require(fixed >= 1, "DepthLaw: fixed depth must be >= 1");
        } else {
            detail::require(lo >= 1 && hi >= lo, "DepthLaw: need 1 <= lo <= hi");
        }
    }
};

struct ScenarioSpec {
    std::size_t n_mutations = 60;
    std::size_t n_dates = 40;
    std::size_t r_true = 3;
    double overlap = 0.25;  // fraction of a lineage's mutations shared with its neighbor
    WaveShape wave_shape = WaveShape::LogisticCrossover;
    DepthLaw depth_law{};
    double residual_mass = 0.0;  // abundance assigned to no defined lineage
    std::uint64_t seed = 1;

    void validate() const {
        detail::require(n_mutations >= 1 && n_dates >= 1 && r_true >= 1,
                        "ScenarioSpec: dimensions must be positive");
        detail::require(r_true <= n_mutations, "ScenarioSpec: more lineages than mutations");
        detail::require(overlap >= 0.0 && overlap <= 1.0, "ScenarioSpec: overlap outside [0,1]");
        detail::require(residual_mass >= 0.0 && residual_mass < 1.0,
                        "ScenarioSpec: residual_mass outside [0,1)");
        depth_law.validate();
    }
};

struct SyntheticData {
    MutationPanel panel;
    Matrix<std::uint8_t> z_true;
    MatrixD g_true;
    std::vector<std::string> lineage_names;
};

namespace detail {

/// Contiguous overlapping windows covering [0, N).  Consecutive windows share
/// about overlap`·`len rows; the last window is stretched to end exactly at N.
struct WindowLayout {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;  // [begin, end)
};

inline WindowLayout window_layout(std::size_t n, std::size_t r, double overlap) {
    WindowLayout out;
    if (r == 1) {
        out.ranges.emplace_back(0, n);
        return out;
    }
    const double len_real =
        static_cast<double>(n) / (static_cast<double>(r) - (static_cast<double>(r) - 1.0) * overlap);
    const auto len = static_cast<long>(std::lround(len_real));
    const auto shared = static_cast<long>(std::lround(overlap * static_cast<double>(len)));
    const long step = len - shared;
    detail::require(len >= 1 && step >= 1,
                    "ScenarioSpec: infeasible overlap geometry (window step collapses)");
    const long last_begin = static_cast<long>(r - 1) * step;
    detail::require(last_begin + 1 <= static_cast<long>(n),
                    "ScenarioSpec: infeasible overlap geometry (windows exceed mutations)");
    for (std::size_t j = 0; j < r; ++j) {
        const long begin = static_cast<long>(j) * step;
        const long end = j + 1 == r ? static_cast<long>(n) : std::min(begin + len,
                                                                      static_cast<long>(n));
        detail::require(end > begin, "ScenarioSpec: infeasible overlap geometry (empty window)");
        out.ranges.emplace_back(static_cast<std::size_t>(begin), static_cast<std::size_t>(end));
    }
    return out;
}

inline double uniform01_from(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// True abundance curves: columns sum to 1 − residual_mass.
inline MatrixD true_abundance(std::size_t r, std::size_t t_count, WaveShape shape,
                              double residual_mass) {
    const double mass = 1.0 - residual_mass;
    MatrixD g(r, t_count, 0.0);
    for (std::size_t t = 0; t < t_count; ++t) {
        const double x =
            t_count == 1 ? 0.5 : static_cast<double>(t) / static_cast<double>(t_count - 1);
        std::vector<double> raw(r, 0.0);
        switch (shape) {
            case WaveShape::LogisticCrossover: {
                // Softmax of quadratic scores: every pairwise log-odds is
                // linear in time, i.e. logistic crossovers.
                const double kappa = 30.0;
                for (std::size_t j = 0; j < r; ++j) {
                    const double center =
                        (static_cast<double>(j) + 0.5) / static_cast<double>(r);
                    raw[j] = std::exp(-kappa * (x - center) * (x - center));
                }
                break;
            }
            case WaveShape::Plateau: {
                for (std::size_t j = 0; j < r; ++j) {
                    const bool era = x >= static_cast<double>(j) / static_cast<double>(r) &&
                                     x < (static_cast<double>(j) + 1.0) / static_cast<double>(r);
                    raw[j] = (era || (j + 1 == r && x >= 1.0)) ? 1.0 : 0.1;
                }
                break;
            }
            case WaveShape::Constant: {
                for (std::size_t j = 0; j < r; ++j) raw[j] = static_cast<double>(r - j);
                break;
            }
        }
        const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
        for (std::size_t j = 0; j < r; ++j) g(j, t) = mass * raw[j] / total;
    }
    return g;
}

/// Sample a panel forward from the model.  Counts are sums of Bernoulli draws
/// from this library's own generator, so output is identical across platforms.
inline SyntheticData generate(const ScenarioSpec& spec) {
    spec.validate();
    const auto layout = detail::window_layout(spec.n_mutations, spec.r_true, spec.overlap);
    Matrix<std::uint8_t> z(spec.n_mutations, spec.r_true, 0);
    for (std::size_t j = 0; j < spec.r_true; ++j)
        for (std::size_t i = layout.ranges[j].first; i < layout.ranges[j].second; ++i) z(i, j) = 1;

    const MatrixD g = true_abundance(spec.r_true, spec.n_dates, spec.wave_shape,
                                     spec.residual_mass);

    std::vector<std::string> mutations;
    int width = 1;
    for (std::size_t q = spec.n_mutations; q >= 10; q /= 10) ++width;
    for (std::size_t i = 0; i < spec.n_mutations; ++i) {
        std::string num = std::to_string(i + 1);
        mutations.push_back("mut" + std::string(static_cast<std::size_t>(width) - num.size(), '0') +
                            num);
    }
    std::vector<Date> dates;
    const Date start = Date::parse("2023-01-02");
    for (std::size_t t = 0; t < spec.n_dates; ++t)
        dates.push_back(Date(start.days() + 7 * static_cast<long>(t)));

    Rng rng = chain_rng(spec.seed, 900);  // dedicated stream for the generator
    MatrixI counts(spec.n_mutations, spec.n_dates, 0);
    MatrixI depths(spec.n_mutations, spec.n_dates, 0);
    for (std::size_t i = 0; i < spec.n_mutations; ++i) {
        for (std::size_t t = 0; t < spec.n_dates; ++t) {
            long depth = spec.depth_law.fixed;
            if (spec.depth_law.kind == DepthLaw::Kind::Uniform) {
                const auto span =
                    static_cast<std::uint64_t>(spec.depth_law.hi - spec.depth_law.lo + 1);
                depth = spec.depth_law.lo + static_cast<long>(rng() % span);
            }
            double p = 0.0;
            for (std::size_t j = 0; j < spec.r_true; ++j)
                if (z(i, j)) p += g(j, t);
            p = std::min(1.0, std::max(0.0, p));
            int c = 0;
            for (long d = 0; d < depth; ++d)
                if (detail::uniform01_from(rng) < p) ++c;
            counts(i, t) = c;
            depths(i, t) = static_cast<int>(depth);
        }
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < spec.r_true; ++j) names.push_back(std::to_string(j + 1));
    return SyntheticData{MutationPanel(mutations, dates, std::move(counts), std::move(depths),
                                       "synthetic"),
                         std::move(z), g, std::move(names)};
}

// ---------------------------------------------------------------------------
// Permutation-aligned scoring of estimated definitions against the truth
// ---------------------------------------------------------------------------

namespace detail {

inline std::set<std::size_t> column_support(const Matrix<std::uint8_t>& z, std::size_t col) {
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < z.rows(); ++i)
        if (z(i, col)) out.insert(i);
    return out;
}

}  // namespace detail

struct AlignResult {
    /// permutation[k] = estimated column matched to true column k (npos when
    /// the estimate has fewer columns than the truth).
    std::vector<std::size_t> permutation;
    double mean_jaccard = 0.0;
    std::vector<double> per_lineage;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Optimal one-to-one matching of estimated to true lineage columns by total
/// Jaccard; exhaustive for up to 8 columns, Hungarian beyond.
inline AlignResult align_and_score(const Matrix<std::uint8_t>& z_est,
                                   const Matrix<std::uint8_t>& z_true) {
    detail::require_shape(z_est.rows() == z_true.rows(),
                          "align_and_score: mutation universes differ (" +
                              std::to_string(z_est.rows()) + " vs " +
                              std::to_string(z_true.rows()) + " rows)");
    const std::size_t n = std::max(z_est.cols(), z_true.cols());
    detail::require(n >= 1, "align_and_score: no columns");
    MatrixD score(n, n, 0.0);
    for (std::size_t a = 0; a < z_est.cols(); ++a) {
        const auto sa = detail::column_support(z_est, a);
        for (std::size_t b = 0; b < z_true.cols(); ++b) {
            const auto sb = detail::column_support(z_true, b);
            if (sa.empty() || sb.empty()) continue;  // score 0 for empty columns
            std::size_t inter = 0;
            for (auto i : sa) inter += sb.count(i);
            score(a, b) =
                static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
        }
    }
    const auto [assignment, total] = n <= 8 ? detail::assignment_exhaustive(score)
                                            : detail::assignment_hungarian(score);
    AlignResult out;
    out.per_lineage.resize(z_true.cols(), 0.0);
    out.permutation.resize(z_true.cols(), AlignResult::npos);
    double sum = 0.0;
    for (std::size_t b = 0; b < z_true.cols(); ++b) {
        const std::size_t a = assignment[b];
        out.per_lineage[b] = score(a, b);
        out.permutation[b] = a < z_est.cols() ? a : AlignResult::npos;
        sum += score(a, b);
    }
    out.mean_jaccard = sum / static_cast<double>(z_true.cols());
    (void)total;
    return out;
}

/// Max-abs error of aligned abundance rows: est row permutation[k] vs true
/// row k.  Rows of the truth without a matched estimate count as error 1.
inline double aligned_abundance_error(const MatrixD& g_est, const MatrixD& g_true,
                                      const std::vector<std::size_t>& permutation) {
    detail::require_shape(g_est.cols() == g_true.cols(),
                          "aligned_abundance_error: date axes differ");
    detail::require_shape(permutation.size() == g_true.rows(),
                          "aligned_abundance_error: permutation length mismatch");
    double err = 0.0;
    for (std::size_t k = 0; k < g_true.rows(); ++k) {
        if (permutation[k] == AlignResult::npos || permutation[k] >= g_est.rows()) return 1.0;
        for (std::size_t t = 0; t < g_true.cols(); ++t)
            err = std::max(err, std::abs(g_est(permutation[k], t) - g_true(k, t)));
    }
    return err;
}

// ---------------------------------------------------------------------------
// key=value scenario file for the CLI
// ---------------------------------------------------------------------------

inline ScenarioSpec parse_scenario(const std::map<std::string, std::string>& kv) {
    ScenarioSpec spec;
    for (const auto& [key, value] : kv) {
        const std::string ctx = "scenario key '" + key + "'";
        if (key == "n_mutations") spec.n_mutations = static_cast<std::size_t>(io::parse_long(value, ctx));
        else if (key == "n_dates") spec.n_dates = static_cast<std::size_t>(io::parse_long(value, ctx));
        else if (key == "r_true") spec.r_true = static_cast<std::size_t>(io::parse_long(value, ctx));
        else if (key == "overlap") spec.overlap = io::parse_double(value, ctx);
        else if (key == "wave_shape") spec.wave_shape = parse_wave_shape(value);
        else if (key == "depth") spec.depth_law = DepthLaw::fixed_depth(io::parse_long(value, ctx));
        else if (key == "depth_lo") spec.depth_law.kind = DepthLaw::Kind::Uniform,
                 spec.depth_law.lo = io::parse_long(value, ctx);
        else if (key == "depth_hi") spec.depth_law.kind = DepthLaw::Kind::Uniform,
                 spec.depth_law.hi = io::parse_long(value, ctx);
        else if (key == "residual_mass") spec.residual_mass = io::parse_double(value, ctx);
        else if (key == "seed") spec.seed = static_cast<std::uint64_t>(io::parse_long(value, ctx));
        else throw ConfigError("unknown scenario key '" + key + "'");
    }
    spec.validate();
    return spec;
}

}  // namespace wwmix

#endif  // WWMIX_SYNTH_HPP_
