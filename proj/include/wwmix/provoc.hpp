#pragma once
#ifndef WWMIX_PROVOC_HPP_
#define WWMIX_PROVOC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"
#include "wwmix/mcmc.hpp"

namespace wwmix {

/// Euclidean projection onto the simplex {x >= 0, sum x = 1} (sort-based).
inline std::vector<double> project_to_simplex(std::vector<double> v) {
    detail::require(!v.empty(), "project_to_simplex: empty vector");
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cumsum = 0.0;
    double tau = 0.0;
    std::size_t support = 0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) {
            tau = candidate;
            support = j + 1;
        }
    }
    detail::require(support > 0, "project_to_simplex: degenerate input");
    for (auto& x : v) x = std::max(0.0, x - tau);
    return v;
}

/// Euclidean projection onto {x >= 0, sum x <= 1}: clip negatives; if the
/// clipped sum still exceeds 1 the projection lies on the sum=1 face.
inline std::vector<double> project_to_sub_simplex(std::vector<double> v) {
    detail::require(!v.empty(), "project_to_sub_simplex: empty vector");
    double clipped_sum = 0.0;
    for (double x : v) clipped_sum += std::max(0.0, x);
    if (clipped_sum <= 1.0) {
        for (auto& x : v) x = std::max(0.0, x);
        return v;
    }
    return project_to_simplex(std::move(v));
}

struct ProvocOptions {
    int multistarts = 5;
    int max_iter = 10000;
    double tol = 1e-10;  // relative objective-change stop
    std::uint64_t seed = 1;
    double clamp_eps = kProbClampEps;
    ConstraintKind constraint = ConstraintKind::SumLEOne;

    void validate() const {
        detail::require(multistarts >= 1, "ProvocOptions: multistarts must be >= 1");
        detail::require(max_iter >= 1, "ProvocOptions: max_iter must be >= 1");
        detail::require(tol > 0.0, "ProvocOptions: tol must be positive");
        detail::require(clamp_eps > 0.0 && clamp_eps < 0.5,
                        "ProvocOptions: clamp_eps outside (0, 0.5)");
    }
};

struct ProvocFit {
    std::vector<double> rho;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> zrho(const Matrix<std::uint8_t>& z, const std::vector<double>& rho) {
    std::vector<double> p(z.rows(), 0.0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j)
            if (z(i, j)) s += rho[j];
        p[i] = s;
    }
    return p;
}

}  // namespace detail

/// Per-sample log-likelihood Σ_i [c log p' + (D−c) log(1−p')], p = (Zρ)_i.
inline double provoc_loglik(const std::vector<int>& counts, const std::vector<int>& depths,
                            const Matrix<std::uint8_t>& z, const std::vector<double>& rho,
                            double clamp_eps = kProbClampEps) {
    detail::require_shape(counts.size() == z.rows() && depths.size() == z.rows() &&
                              rho.size() == z.cols(),
                          "provoc_loglik: dimension mismatch");
    const auto p = detail::zrho(z, rho);
    double ll = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i)
        ll += binomial_cell_loglik(counts[i], depths[i], p[i], clamp_eps);
    return ll;
}

/// Gradient of provoc_loglik in ρ.  Cells whose probability is outside the
/// clamp window contribute zero (the clamped objective is flat there).
inline std::vector<double> provoc_gradient(const std::vector<int>& counts,
                                           const std::vector<int>& depths,
                                           const Matrix<std::uint8_t>& z,
                                           const std::vector<double>& rho,
                                           double clamp_eps = kProbClampEps) {
    detail::require_shape(counts.size() == z.rows() && depths.size() == z.rows() &&
                              rho.size() == z.cols(),
                          "provoc_gradient: dimension mismatch");
    const auto p = detail::zrho(z, rho);
    std::vector<double> g(rho.size(), 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (p[i] < clamp_eps || p[i] > 1.0 - clamp_eps) continue;
        const double w = static_cast<double>(counts[i]) / p[i] -
                         static_cast<double>(depths[i] - counts[i]) / (1.0 - p[i]);
        for (std::size_t j = 0; j < rho.size(); ++j)
            if (z(i, j)) g[j] += w;
    }
    return g;
}

/// Max KKT violation of `rho` for maximizing provoc_loglik subject to
/// {ρ ≥ 0, Σρ ≤ 1} (or Σρ = 1 with the SumEqOne variant).  Zero at an optimum.
inline double kkt_residual(const std::vector<int>& counts, const std::vector<int>& depths,
                           const Matrix<std::uint8_t>& z, const std::vector<double>& rho,
                           ConstraintKind constraint = ConstraintKind::SumLEOne,
                           double clamp_eps = kProbClampEps) {
    const auto g = provoc_gradient(counts, depths, z, rho, clamp_eps);
    const double boundary_tol = 1e-10;
    const double sum = std::accumulate(rho.begin(), rho.end(), 0.0);
    const bool face_active =
        constraint == ConstraintKind::SumEqOne || sum >= 1.0 - boundary_tol;

    // Multiplier for the sum constraint: average gradient over positive coords
    // when the face is active, else zero.
    double mu = 0.0;
    if (face_active) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < rho.size(); ++j) {
            if (rho[j] > boundary_tol) {
                acc += g[j];
                ++n;
            }
        }
        mu = n > 0 ? acc / static_cast<double>(n) : 0.0;
    }
    double residual = 0.0;
    // With Σρ ≤ 1 the multiplier must be non-negative; a negative common
    // gradient on an active face means the face should not be active.
    if (constraint == ConstraintKind::SumLEOne && face_active) residual = std::max(0.0, -mu);
    for (std::size_t j = 0; j < rho.size(); ++j) {
        if (rho[j] > boundary_tol) {
            residual = std::max(residual, std::abs(g[j] - mu));
        } else {
            residual = std::max(residual, std::max(0.0, g[j] - mu));
        }
    }
    return residual;
}

namespace detail {

inline std::vector<double> project_feasible(std::vector<double> v, ConstraintKind constraint) {
    return constraint == ConstraintKind::SumEqOne ? project_to_simplex(std::move(v))
                                                  : project_to_sub_simplex(std::move(v));
}

/// Projected gradient ascent with Armijo backtracking from one start.
struct AscentResult {
    std::vector<double> rho;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
};

inline AscentResult projected_gradient_ascent(const std::vector<int>& counts,
                                              const std::vector<int>& depths,
                                              const Matrix<std::uint8_t>& z,
                                              std::vector<double> rho,
                                              const ProvocOptions& opts) {
    const double armijo_sigma = 1e-4;
    double f = provoc_loglik(counts, depths, z, rho, opts.clamp_eps);
    double alpha = 1.0;
    AscentResult out;
    int iter = 0;
    for (; iter < opts.max_iter; ++iter) {
        const auto g = provoc_gradient(counts, depths, z, rho, opts.clamp_eps);
        alpha = std::min(alpha * 2.0, 1e6);
        bool stepped = false;
        std::vector<double> next;
        double f_next = f;
        while (alpha > 1e-20) {
            std::vector<double> cand(rho.size());
            for (std::size_t j = 0; j < rho.size(); ++j) cand[j] = rho[j] + alpha * g[j];
            cand = project_feasible(std::move(cand), opts.constraint);
            double dir_deriv = 0.0;
            for (std::size_t j = 0; j < rho.size(); ++j) dir_deriv += g[j] * (cand[j] - rho[j]);
            if (dir_deriv <= 0.0) break;  // stationary: projection made no ascent move
            const double f_cand = provoc_loglik(counts, depths, z, cand, opts.clamp_eps);
            if (f_cand >= f + armijo_sigma * dir_deriv) {
                next = std::move(cand);
                f_next = f_cand;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!stepped) {
            out.converged = true;
            break;
        }
        const double change = std::abs(f_next - f);
        rho = std::move(next);
        f = f_next;
        if (change <= opts.tol * std::max(1.0, std::abs(f))) {
            out.converged = true;
            ++iter;
            break;
        }
    }
    out.rho = std::move(rho);
    out.loglik = f;
    out.iterations = iter;
    return out;
}

/// A few steps of projected Newton on the active set.  Gradient-only ascent
/// stops with gradient norms far above the KKT tolerances once the objective
/// change falls under the stop rule, so the stationary point is sharpened
/// here; steps that fail to improve the objective are rejected, keeping the
/// ascent guarantee.
inline void newton_polish(const std::vector<int>& counts, const std::vector<int>& depths,
                          const Matrix<std::uint8_t>& z, std::vector<double>& rho, double& f,
                          const ProvocOptions& opts) {
    const std::size_t n_lineages = rho.size();
    const double active_tol = 1e-10;
    for (int round = 0; round < 60; ++round) {
        if (kkt_residual(counts, depths, z, rho, opts.constraint, opts.clamp_eps) < 1e-9) break;
        const auto g = provoc_gradient(counts, depths, z, rho, opts.clamp_eps);
        const double sum = std::accumulate(rho.begin(), rho.end(), 0.0);
        const bool face_active =
            opts.constraint == ConstraintKind::SumEqOne || sum >= 1.0 - active_tol;

        // Multiplier estimate for the face constraint, as in kkt_residual.
        double mu = 0.0;
        if (face_active) {
            double acc = 0.0;
            std::size_t n_pos = 0;
            for (std::size_t j = 0; j < n_lineages; ++j) {
                if (rho[j] > active_tol) {
                    acc += g[j];
                    ++n_pos;
                }
            }
            mu = n_pos > 0 ? acc / static_cast<double>(n_pos) : 0.0;
        }
        std::vector<std::size_t> free;
        for (std::size_t j = 0; j < n_lineages; ++j) {
            if (rho[j] > active_tol) {
                free.push_back(j);
            } else if (g[j] > mu) {
                free.push_back(j);  // boundary coordinate that wants to enter
            }
        }
        if (free.empty()) break;

        // Hessian over the free coordinates (clamped cells are flat).
        const auto p = zrho(z, rho);
        MatrixD hess(free.size(), free.size(), 0.0);
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (p[i] < opts.clamp_eps || p[i] > 1.0 - opts.clamp_eps) continue;
            const double w = -static_cast<double>(counts[i]) / (p[i] * p[i]) -
                             static_cast<double>(depths[i] - counts[i]) /
                                 ((1.0 - p[i]) * (1.0 - p[i]));
            for (std::size_t a = 0; a < free.size(); ++a) {
                if (!z(i, free[a])) continue;
                for (std::size_t b = 0; b < free.size(); ++b)
                    if (z(i, free[b])) hess(a, b) += w;
            }
        }
        for (std::size_t a = 0; a < free.size(); ++a) hess(a, a) -= 1e-9;

        // Newton step: H d = -g (optionally bordered with the face constraint).
        std::vector<double> direction(free.size(), 0.0);
        bool solved = true;
        try {
            if (face_active && free.size() > 1) {
                MatrixD bordered(free.size() + 1, free.size() + 1, 0.0);
                std::vector<double> rhs(free.size() + 1, 0.0);
                for (std::size_t a = 0; a < free.size(); ++a) {
                    for (std::size_t b = 0; b < free.size(); ++b)
                        bordered(a, b) = hess(a, b);
                    bordered(a, free.size()) = 1.0;
                    bordered(free.size(), a) = 1.0;
                    rhs[a] = -g[free[a]];
                }
                const auto sol = solve_linear(std::move(bordered), std::move(rhs));
                direction.assign(sol.begin(), sol.begin() + static_cast<long>(free.size()));
            } else {
                std::vector<double> rhs(free.size());
                for (std::size_t a = 0; a < free.size(); ++a) rhs[a] = -g[free[a]];
                direction = solve_linear(hess, std::move(rhs));
            }
        } catch (const InvariantError&) {
            solved = false;
        }
        if (!solved) break;

        // Accept with a hair of slack: near the optimum true improvements can
        // be below the float noise of the objective evaluation.
        const double accept_slack = 1e-12 * (1.0 + std::abs(f));
        bool improved = false;
        double t = 1.0;
        for (int half = 0; half < 40 && !improved; ++half, t *= 0.5) {
            std::vector<double> cand = rho;
            for (std::size_t a = 0; a < free.size(); ++a) cand[free[a]] += t * direction[a];
            cand = project_feasible(std::move(cand), opts.constraint);
            const double f_cand = provoc_loglik(counts, depths, z, cand, opts.clamp_eps);
            if (f_cand >= f - accept_slack) {
                const bool moved = cand != rho;
                rho = std::move(cand);
                f = f_cand;
                improved = moved;
                if (!moved) return;  // projection pinned the step: no further progress
            }
        }
        if (!improved) break;
    }
}

}  // namespace detail

/// Maximize the constrained per-sample binomial log-likelihood over
/// {ρ ≥ 0, Σρ ≤ 1} (or the exact simplex).  Best of opts.multistarts
/// projected-gradient runs from uniform feasible starts, then polished.
inline ProvocFit fit_sample(const std::vector<int>& counts, const std::vector<int>& depths,
                            const LineageDefinitionSet& defs, const ProvocOptions& opts = {}) {
    opts.validate();
    const auto& z = defs.membership();
    detail::require_shape(counts.size() == z.rows() && depths.size() == z.rows(),
                          "fit_sample: counts/depths must match the definition universe");
    bool any_depth = false;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        detail::require(depths[i] >= 0 && counts[i] >= 0 && counts[i] <= depths[i],
                        "fit_sample: need 0 <= count <= depth at index " + std::to_string(i));
        any_depth = any_depth || depths[i] > 0;
    }
    detail::require(any_depth, "fit_sample: all depths are zero");

    ProvocFit best;
    if (z.rows() < z.cols())
        best.warnings.push_back("fewer mutations (" + std::to_string(z.rows()) +
                                ") than lineages (" + std::to_string(z.cols()) +
                                "); fit may be non-identifiable");

    Rng rng(opts.seed);
    std::exponential_distribution<double> expo(1.0);
    bool have_best = false;
    for (int s = 0; s < opts.multistarts; ++s) {
        // Uniform draw over the feasible set: Dirichlet(1,...,1) over J+1
        // coordinates, dropping the slack coordinate (kept for SumEqOne too,
        // where the projection immediately restores the face).
        std::vector<double> start(z.cols());
        double total = expo(rng);  // slack
        for (auto& v : start) {
            v = expo(rng);
            total += v;
        }
        for (auto& v : start) v /= total;
        start = detail::project_feasible(std::move(start), opts.constraint);

        auto run = detail::projected_gradient_ascent(counts, depths, z, std::move(start), opts);
        detail::newton_polish(counts, depths, z, run.rho, run.loglik, opts);
        if (!have_best || run.loglik > best.loglik) {
            best.rho = run.rho;
            best.loglik = run.loglik;
            best.converged = run.converged;
            best.iterations = run.iterations;
            have_best = true;
        }
    }
    return best;
}

struct ProvocSeriesFit {
    AbundanceSeries abundance;
    std::vector<ProvocFit> fits;
    std::vector<std::string> dropped_mutations;
};

/// Fit every panel column independently.  Panel mutations missing from the
/// definitions, or belonging to no lineage, are dropped with a warning entry.
inline ProvocSeriesFit fit_series(const MutationPanel& panel, const LineageDefinitionSet& defs,
                                  const ProvocOptions& opts = {}) {
    opts.validate();
    std::map<std::string, std::size_t> defs_index;
    for (std::size_t i = 0; i < defs.mutation_universe().size(); ++i)
        defs_index[defs.mutation_universe()[i]] = i;

    std::vector<std::size_t> panel_rows;
    std::vector<std::size_t> defs_rows;
    std::vector<std::string> dropped;
    for (std::size_t i = 0; i < panel.n_mutations(); ++i) {
        const auto& label = panel.mutations()[i];
        const auto it = defs_index.find(label);
        bool keep = false;
        if (it != defs_index.end()) {
            for (std::size_t j = 0; j < defs.n_lineages() && !keep; ++j)
                keep = defs.membership()(it->second, j) != 0;
        }
        if (keep) {
            panel_rows.push_back(i);
            defs_rows.push_back(it->second);
        } else {
            dropped.push_back(label);
        }
    }
    detail::require(!panel_rows.empty(),
                    "fit_series: no panel mutation appears in any lineage definition");

    Matrix<std::uint8_t> z(panel_rows.size(), defs.n_lineages());
    std::vector<std::string> kept_labels;
    for (std::size_t r = 0; r < panel_rows.size(); ++r) {
        kept_labels.push_back(panel.mutations()[panel_rows[r]]);
        for (std::size_t j = 0; j < defs.n_lineages(); ++j)
            z(r, j) = defs.membership()(defs_rows[r], j);
    }
    const LineageDefinitionSet restricted(defs.names(), std::move(z), std::move(kept_labels));

    MatrixD values(defs.n_lineages(), panel.n_dates(), 0.0);
    std::vector<ProvocFit> fits;
    for (std::size_t t = 0; t < panel.n_dates(); ++t) {
        std::vector<int> c(panel_rows.size()), d(panel_rows.size());
        for (std::size_t r = 0; r < panel_rows.size(); ++r) {
            c[r] = panel.counts()(panel_rows[r], t);
            d[r] = panel.depths()(panel_rows[r], t);
        }
        ProvocOptions sample_opts = opts;
        sample_opts.seed = opts.seed + t;  // distinct but reproducible starts per date
        try {
            auto fit = fit_sample(c, d, restricted, sample_opts);
            for (std::size_t j = 0; j < defs.n_lineages(); ++j) values(j, t) = fit.rho[j];
            fits.push_back(std::move(fit));
        } catch (const Error& e) {
            throw Error("fit_series: date " + panel.dates()[t].iso() + ": " + e.what());
        }
    }
    return ProvocSeriesFit{
        AbundanceSeries(std::move(values), opts.constraint, panel.dates(), defs.names()),
        std::move(fits), std::move(dropped)};
}

}  // namespace wwmix

#endif  // WWMIX_PROVOC_HPP_
