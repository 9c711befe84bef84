#pragma once
#ifndef WWMIX_MCMC_HPP_
#define WWMIX_MCMC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"

namespace wwmix {

using Rng = std::mt19937_64;

/// Independent per-chain generator: chain c draws from stream (seed, c).
inline Rng chain_rng(std::uint64_t seed, int chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x9e3779b9u};
    return Rng(seq);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal01(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

struct SamplerConfig {
    int n_chains = 4;
    int n_iter = 20000;
    int n_burnin = 10000;
    int thin = 10;
    std::uint64_t seed = 1;
    int adapt_interval = 50;
    double target_accept = 0.44;  // scalar random-walk target
    bool progress = false;        // progress lines on stderr

    void validate() const {
        detail::require(n_iter > n_burnin && n_burnin >= 0,
                        "SamplerConfig: need n_iter > n_burnin >= 0");
        detail::require(thin >= 1, "SamplerConfig: thin must be >= 1");
        detail::require(n_chains >= 1, "SamplerConfig: need at least one chain");
        detail::require(adapt_interval >= 1, "SamplerConfig: adapt_interval must be >= 1");
        detail::require(target_accept > 0.0 && target_accept < 1.0,
                        "SamplerConfig: target_accept must lie in (0,1)");
    }
};

// ---------------------------------------------------------------------------
// Conditional updates
// ---------------------------------------------------------------------------

/// Exact full-conditional draw for a binary parameter: returns 1 with
/// probability sigmoid((loglik1 - loglik0) + logit(prior_p1)).
inline std::uint8_t flip_update(double loglik_at_0, double loglik_at_1, double prior_p1,
                                Rng& rng) {
    const double logit_prior = std::log(prior_p1) - std::log1p(-prior_p1);
    const double x = (loglik_at_1 - loglik_at_0) + logit_prior;
    double p1;
    if (x >= 0.0) {
        p1 = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        p1 = e / (1.0 + e);
    }
    return uniform01(rng) < p1 ? 1 : 0;
}

enum class Support { UnitInterval, Positive, SimplexBlock };

struct ScalarUpdateResult {
    double value;
    bool accepted;
};

/// Random-walk Metropolis on a transformed scale: logit for (0,1), log for
/// (0,inf). `logpost` is the log target density on the ORIGINAL scale; the
/// Jacobian of the transform is added to the acceptance ratio so detailed
/// balance holds for the original-scale target.
inline ScalarUpdateResult rw_update_scalar(double current, Support support,
                                           const std::function<double(double)>& logpost,
                                           double step, Rng& rng) {
    double lp_cur = logpost(current);
    detail::require(std::isfinite(lp_cur),
                    "rw_update: non-finite log-posterior at current state");
    double proposal, log_jacobian_delta;
    if (support == Support::UnitInterval) {
        detail::require(current > 0.0 && current < 1.0, "rw_update: state outside (0,1)");
        const double y = std::log(current) - std::log1p(-current);
        const double y_new = y + step * normal01(rng);
        proposal = 1.0 / (1.0 + std::exp(-y_new));
        if (proposal <= 0.0 || proposal >= 1.0) return {current, false};  // underflow
        log_jacobian_delta = std::log(proposal) + std::log1p(-proposal) -
                             (std::log(current) + std::log1p(-current));
    } else if (support == Support::Positive) {
        detail::require(current > 0.0, "rw_update: state outside (0,inf)");
        const double y_new = std::log(current) + step * normal01(rng);
        proposal = std::exp(y_new);
        if (proposal <= 0.0 || !std::isfinite(proposal)) return {current, false};
        log_jacobian_delta = std::log(proposal) - std::log(current);
    } else {
        throw ConfigError("rw_update_scalar: simplex blocks use rw_update_simplex");
    }
    const double lp_new = logpost(proposal);
    const double log_alpha = lp_new - lp_cur + log_jacobian_delta;
    if (std::log(uniform01(rng)) < log_alpha) return {proposal, true};
    return {current, false};
}

struct VectorUpdateResult {
    std::vector<double> value;
    bool accepted;
};

/// Random-walk Metropolis for a probability vector on the simplex, via the
/// additive log-ratio transform (last coordinate as reference). The Jacobian
/// of the inverse transform is prod_k x_k, which enters the acceptance ratio.
/// A 1-dimensional block is degenerate (the point {1}) and returns unchanged.
inline VectorUpdateResult rw_update_simplex(const std::vector<double>& current,
                                            const std::function<double(const std::vector<double>&)>& logpost,
                                            double step, Rng& rng) {
    const std::size_t k = current.size();
    if (k <= 1) return {current, false};
    const double floor = 1e-300;
    double lp_cur = logpost(current);
    detail::require(std::isfinite(lp_cur),
                    "rw_update: non-finite log-posterior at current state");
    std::vector<double> y(k - 1);
    for (std::size_t j = 0; j + 1 < k; ++j) {
        detail::require(current[j] > 0.0 && current[k - 1] > 0.0,
                        "rw_update: simplex state touching the boundary");
        y[j] = std::log(current[j]) - std::log(current[k - 1]);
    }
    for (auto& v : y) v += step * normal01(rng);

    // Back-transform with a max shift for overflow safety.
    double ymax = 0.0;
    for (double v : y) ymax = std::max(ymax, v);
    double denom = std::exp(-ymax);
    for (double v : y) denom += std::exp(v - ymax);
    std::vector<double> proposal(k);
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) {
        proposal[j] = std::exp(y[j] - ymax) / denom;
        sum += proposal[j];
    }
    proposal[k - 1] = std::exp(-ymax) / denom;
    sum += proposal[k - 1];
    for (auto& v : proposal) v /= sum;  // renormalize float drift away
    for (double v : proposal)
        if (v < floor) return {current, false};

    double log_jacobian_delta = 0.0;
    for (std::size_t j = 0; j < k; ++j)
        log_jacobian_delta += std::log(proposal[j]) - std::log(current[j]);

    const double lp_new = logpost(proposal);
    const double log_alpha = lp_new - lp_cur + log_jacobian_delta;
    if (std::log(uniform01(rng)) < log_alpha) return {proposal, true};
    return {current, false};
}

// ---------------------------------------------------------------------------
// Step adaptation
// ---------------------------------------------------------------------------

/// Multiplicative step-size update with a diminishing gain, one adaptation
/// round per call: step *= exp(+/- delta0/sqrt(round)). Intended for burn-in
/// only; freeze() makes further adapt() calls no-ops so the post-burn-in
/// chain is Markov.
class StepAdapter {
  public:
    explicit StepAdapter(double initial_step, double target = 0.44, double gain = 0.25)
        : step_{initial_step}, target_{target}, gain_{gain} {}

    double step() const { return step_; }
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    void adapt(const std::vector<std::uint8_t>& accept_window) {
        if (frozen_ || accept_window.empty()) return;
        double rate = 0.0;
        for (auto a : accept_window) rate += a;
        rate /= static_cast<double>(accept_window.size());
        ++round_;
        const double delta = gain_ / std::sqrt(static_cast<double>(round_));
        step_ *= std::exp(rate > target_ ? delta : -delta);
    }

  private:
    double step_;
    double target_;
    double gain_;
    long round_ = 0;
    bool frozen_ = false;
};

/// Free-function form used when the caller keeps its own round counter.
inline double adapt_step(const std::vector<std::uint8_t>& accept_window, double step,
                         double target, long round, double gain = 0.25) {
    if (accept_window.empty()) return step;
    double rate = 0.0;
    for (auto a : accept_window) rate += a;
    rate /= static_cast<double>(accept_window.size());
    const double delta = gain / std::sqrt(static_cast<double>(std::max(round, 1L)));
    return step * std::exp(rate > target ? delta : -delta);
}

// ---------------------------------------------------------------------------
// WAIC
// ---------------------------------------------------------------------------

struct WaicResult {
    double waic = 0.0;
    double lppd = 0.0;
    double p_waic = 0.0;
    double per_cell_pwaic_max = 0.0;
};

/// Widely applicable information criterion from an S x K matrix of per-cell
/// log-likelihoods: waic = -2 (lppd - p_waic) with lppd the log pointwise
/// predictive density (log-mean-exp per cell, max-shifted) and p_waic the sum
/// of per-cell sample variances (S-1 denominator).
inline WaicResult waic(const MatrixD& loglik_cells) {
    const std::size_t s = loglik_cells.rows();
    const std::size_t k = loglik_cells.cols();
    detail::require(s >= 2, "waic: need at least 2 samples");
    detail::require(k >= 1, "waic: need at least 1 cell");
    WaicResult out;
    for (std::size_t c = 0; c < k; ++c) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < s; ++i) {
            detail::require(std::isfinite(loglik_cells(i, c)),
                            "waic: non-finite log-likelihood in cell " + std::to_string(c));
            mx = std::max(mx, loglik_cells(i, c));
        }
        double sum_exp = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            sum_exp += std::exp(loglik_cells(i, c) - mx);
            mean += loglik_cells(i, c);
        }
        mean /= static_cast<double>(s);
        const double cell_lppd = mx + std::log(sum_exp / static_cast<double>(s));
        detail::require(std::isfinite(cell_lppd),
                        "waic: non-finite lppd in cell " + std::to_string(c));
        double var = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            const double d = loglik_cells(i, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(s - 1);
        out.lppd += cell_lppd;
        out.p_waic += var;
        out.per_cell_pwaic_max = std::max(out.per_cell_pwaic_max, var);
    }
    out.waic = -2.0 * (out.lppd - out.p_waic);
    return out;
}

}  // namespace wwmix

#endif  // WWMIX_MCMC_HPP_
