#pragma once
#ifndef WWMIX_NMF_HPP_
#define WWMIX_NMF_HPP_

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"
#include "wwmix/mcmc.hpp"

namespace wwmix {

struct NmfResult {
    MatrixD z;  // N x R basis
    MatrixD g;  // R x T coefficients
    double residual_sse = 0.0;
    int n_iter = 0;
    std::uint64_t seed = 0;
    std::vector<double> objective_trace;  // SSE per iteration, starting at the init
};

namespace detail {

inline void multiplicative_update(const MatrixD& numerator, const MatrixD& denominator,
                                  MatrixD& factor) {
    for (std::size_t k = 0; k < factor.size(); ++k) {
        const double num = numerator.data()[k];
        const double den = denominator.data()[k];
        double& v = factor.data()[k];
        // A zero factor or zero numerator pins the entry at zero; the
        // denominator is then irrelevant (it is zero only in those cases).
        v = (v == 0.0 || num == 0.0) ? 0.0 : v * (num / den);
    }
}

}  // namespace detail

/// Lee-Seung multiplicative updates for min ‖Y − ZG‖²_F with Z,G ≥ 0.
/// The objective is non-increasing every iteration (up to float round-off).
inline NmfResult fit_nmf(const MatrixD& y, std::size_t rank, std::uint64_t seed,
                         int max_iter = 2000, double tol = 1e-9) {
    detail::require(rank >= 1 && rank <= std::min(y.rows(), y.cols()),
                    "fit_nmf: rank must lie in [1, min(N,T)], got " + std::to_string(rank));
    detail::require(max_iter >= 1 && tol > 0.0, "fit_nmf: bad iteration controls");
    double y_max = 0.0;
    for (double v : y.data()) {
        detail::require(v >= 0.0 && std::isfinite(v),
                        "fit_nmf: Y entries must be finite and non-negative");
        y_max = std::max(y_max, v);
    }

    NmfResult out;
    out.seed = seed;
    out.z = MatrixD(y.rows(), rank);
    out.g = MatrixD(rank, y.cols());
    Rng rng(seed);
    std::uniform_real_distribution<double> init(0.0, y_max);
    for (auto& v : out.z.data()) v = init(rng);
    for (auto& v : out.g.data()) v = init(rng);

    auto sse = [&] {
        const MatrixD recon = matmul(out.z, out.g);
        double s = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double d = y.data()[k] - recon.data()[k];
            s += d * d;
        }
        return s;
    };

    double prev = sse();
    out.objective_trace.push_back(prev);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        const MatrixD zt = out.z.transposed();
        detail::multiplicative_update(matmul(zt, y), matmul(matmul(zt, out.z), out.g), out.g);
        const MatrixD gt = out.g.transposed();
        detail::multiplicative_update(matmul(y, gt), matmul(out.z, matmul(out.g, gt)), out.z);

        const double curr = sse();
        out.objective_trace.push_back(curr);
        assert(curr <= prev + 1e-9 * (1.0 + prev) && "multiplicative update increased the SSE");
        const double change = std::abs(prev - curr);
        prev = curr;
        if (change <= tol * std::max(1.0, curr)) {
            ++iter;
            break;
        }
    }
    out.n_iter = iter;
    out.residual_sse = prev;
    return out;
}

// ---------------------------------------------------------------------------
// Rank-selection diagnostics
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> argmax_rows(const MatrixD& m) {
    std::vector<std::size_t> out(m.rows(), 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double best = m(i, 0);
        for (std::size_t r = 1; r < m.cols(); ++r) {
            if (m(i, r) > best) {
                best = m(i, r);
                out[i] = r;
            }
        }
    }
    return out;
}

/// Cophenetic distances implied by average-linkage (UPGMA) clustering of a
/// symmetric dissimilarity matrix: entry (i,k) is the height at which i and k
/// first join the same cluster.
inline MatrixD average_linkage_cophenetic(const MatrixD& dist) {
    require_shape(dist.rows() == dist.cols(), "average_linkage_cophenetic: need square matrix");
    const std::size_t n = dist.rows();
    MatrixD coph(n, n, 0.0);
    if (n <= 1) return coph;

    std::vector<std::vector<std::size_t>> members(n);
    std::vector<bool> active(n, true);
    MatrixD d = dist;
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};

    for (std::size_t merge = 0; merge + 1 < n; ++merge) {
        double best = 0.0;
        std::size_t a = n, b = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t k = i + 1; k < n; ++k) {
                if (!active[k]) continue;
                if (a == n || d(i, k) < best) {
                    best = d(i, k);
                    a = i;
                    b = k;
                }
            }
        }
        for (std::size_t i : members[a])
            for (std::size_t k : members[b]) coph(i, k) = coph(k, i) = best;
        // Average-linkage distance of the merged cluster to the others.
        const double wa = static_cast<double>(members[a].size());
        const double wb = static_cast<double>(members[b].size());
        for (std::size_t c = 0; c < n; ++c) {
            if (!active[c] || c == a || c == b) continue;
            d(a, c) = d(c, a) = (wa * d(a, c) + wb * d(b, c)) / (wa + wb);
        }
        members[a].insert(members[a].end(), members[b].begin(), members[b].end());
        active[b] = false;
    }
    return coph;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    require_shape(x.size() == y.size() && !x.empty(), "pearson: length mismatch");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 1.0;  // degenerate: flat vector
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Correlation between consensus dissimilarities (1 − consensus) and the
/// cophenetic distances of their average-linkage dendrogram.  A perfectly
/// stable consensus (all entries 0/1) scores 1.
inline double cophenetic_score(const MatrixD& consensus) {
    detail::require_shape(consensus.rows() == consensus.cols(),
                          "cophenetic_score: need square consensus");
    const std::size_t n = consensus.rows();
    if (n < 2) return 1.0;
    MatrixD dist(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
            if (i != k) dist(i, k) = 1.0 - consensus(i, k);
    const MatrixD coph = detail::average_linkage_cophenetic(dist);
    std::vector<double> dv, cv;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = i + 1; k < n; ++k) {
            dv.push_back(dist(i, k));
            cv.push_back(coph(i, k));
        }
    return detail::pearson(dv, cv);
}

/// (1/N²) Σ 4(consensus − 1/2)²: 1 for a perfectly stable clustering,
/// approaching 0 when every pair is assigned together half the time.
inline double dispersion_score(const MatrixD& consensus) {
    detail::require_shape(consensus.rows() == consensus.cols(),
                          "dispersion_score: need square consensus");
    double s = 0.0;
    for (double c : consensus.data()) s += 4.0 * (c - 0.5) * (c - 0.5);
    return s / static_cast<double>(consensus.size());
}

/// Mean silhouette of points (rows of `points`) under the given hard labels,
/// Euclidean distance.  Singleton clusters contribute 0; fewer than two
/// distinct labels yields 0.
inline double silhouette_mean(const MatrixD& points, const std::vector<std::size_t>& labels) {
    detail::require_shape(points.rows() == labels.size(), "silhouette_mean: label count mismatch");
    const std::size_t n = points.rows();
    if (n == 0) return 0.0;
    const std::size_t n_labels = 1 + *std::max_element(labels.begin(), labels.end());
    std::vector<std::size_t> cluster_size(n_labels, 0);
    for (auto l : labels) ++cluster_size[l];
    std::size_t nonempty = 0;
    for (auto s : cluster_size) nonempty += s > 0 ? 1 : 0;
    if (nonempty < 2) return 0.0;

    auto dist = [&](std::size_t i, std::size_t k) {
        double s = 0.0;
        for (std::size_t c = 0; c < points.cols(); ++c) {
            const double d = points(i, c) - points(k, c);
            s += d * d;
        }
        return std::sqrt(s);
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cluster_size[labels[i]] <= 1) continue;  // singleton: s_i = 0
        std::vector<double> mean_dist(n_labels, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            mean_dist[labels[k]] += dist(i, k);
        }
        double a = 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < n_labels; ++l) {
            if (cluster_size[l] == 0) continue;
            if (l == labels[i]) {
                a = mean_dist[l] / static_cast<double>(cluster_size[l] - 1);
            } else {
                b = std::min(b, mean_dist[l] / static_cast<double>(cluster_size[l]));
            }
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

struct RankDiagRow {
    std::size_t rank = 0;
    double cophenetic = 0.0;
    double dispersion = 0.0;
    double evar = 0.0;
    double rss = 0.0;
    double silhouette_basis = 0.0;
    double silhouette_coef = 0.0;
    int n_runs = 0;
};

/// Repeated NMF fits per rank with consensus-based stability diagnostics.
/// Deterministic: run seeds are seed + 1000003·rank + run_index.
inline std::vector<RankDiagRow> rank_scan(const MatrixD& y, const std::vector<std::size_t>& ranks,
                                          int runs_per_rank = 30, std::uint64_t seed = 1,
                                          int max_iter = 2000, double tol = 1e-9) {
    detail::require(runs_per_rank >= 2, "rank_scan: need at least 2 runs per rank");
    detail::require(!ranks.empty(), "rank_scan: empty rank list");
    const double y_norm_sq = frobenius_sq(y);
    detail::require(y_norm_sq > 0.0, "rank_scan: Y is identically zero");
    for (auto r : ranks)
        detail::require(r >= 1 && r <= std::min(y.rows(), y.cols()),
                        "rank_scan: rank " + std::to_string(r) + " outside [1, min(N,T)]");

    std::vector<RankDiagRow> out;
    const std::size_t n = y.rows();
    for (const auto rank : ranks) {
        MatrixD consensus(n, n, 0.0);
        double best_rss = std::numeric_limits<double>::infinity();
        NmfResult best;
        for (int run = 0; run < runs_per_rank; ++run) {
            const std::uint64_t run_seed =
                seed + 1000003ULL * static_cast<std::uint64_t>(rank) +
                static_cast<std::uint64_t>(run);
            NmfResult fit = fit_nmf(y, rank, run_seed, max_iter, tol);
            const auto assign = detail::argmax_rows(fit.z);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < n; ++k)
                    if (assign[i] == assign[k]) consensus(i, k) += 1.0;
            if (fit.residual_sse < best_rss) {
                best_rss = fit.residual_sse;
                best = std::move(fit);
            }
        }
        for (auto& c : consensus.data()) c /= static_cast<double>(runs_per_rank);

        RankDiagRow row;
        row.rank = rank;
        row.n_runs = runs_per_rank;
        row.cophenetic = cophenetic_score(consensus);
        row.dispersion = dispersion_score(consensus);
        row.rss = best_rss;
        row.evar = 1.0 - best_rss / y_norm_sq;
        row.silhouette_basis = silhouette_mean(best.z, detail::argmax_rows(best.z));
        const MatrixD g_cols_as_rows = best.g.transposed();
        row.silhouette_coef =
            silhouette_mean(g_cols_as_rows, detail::argmax_rows(g_cols_as_rows));
        out.push_back(row);
    }
    return out;
}

/// Linear-interpolation quantile of the pooled values (the "type 7" rule:
/// h = q·(n−1), interpolate between the floor(h) and floor(h)+1 order stats).
inline double quantile_linear(std::vector<double> values, double q) {
    detail::require(!values.empty(), "quantile_linear: empty sample");
    detail::require(q > 0.0 && q <= 1.0, "quantile_linear: q outside (0,1]");
    std::sort(values.begin(), values.end());
    if (values.size() == 1 || q == 1.0) return values.back();
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

/// Divide Z by the q-quantile of its pooled entries and multiply G by the
/// same factor, leaving the reconstruction ZG unchanged.
inline NmfResult percentile_rescale(const NmfResult& result, double q = 0.99) {
    const double scale = quantile_linear(result.z.data(), q);
    detail::require(scale > 0.0, "percentile_rescale: quantile of Z is not positive");
    NmfResult out = result;
    for (auto& v : out.z.data()) v /= scale;
    for (auto& v : out.g.data()) v *= scale;
    return out;
}

}  // namespace wwmix

#endif  // WWMIX_NMF_HPP_
