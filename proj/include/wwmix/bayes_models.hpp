#pragma once
#ifndef WWMIX_BAYES_MODELS_HPP_
#define WWMIX_BAYES_MODELS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wwmix/core.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"
#include "wwmix/mcmc.hpp"
#include "wwmix/nmf.hpp"
#include "wwmix/splines.hpp"

namespace wwmix {

/// Target acceptance for block (multi-coordinate) random-walk proposals; the
/// scalar target comes from SamplerConfig.
constexpr double kBlockTargetAccept = 0.234;

/// Test hooks: disable individual update families.  Disabled binary updates
/// leave the state as initialized; `use_likelihood = false` samples from the
/// prior while the recorded per-cell log-likelihoods stay real.
struct UpdateToggles {
    bool update_z = true;
    bool update_abundance = true;   // G* columns (BNMF) or G columns (TBNMF=1)
    bool update_phi = true;         // spline coefficients
    bool update_indicators = true;  // lineage / coefficient switches
    bool use_likelihood = true;
};

/// Optional initial state pieces; anything unset is drawn from its prior.
struct InitOverrides {
    std::optional<Matrix<std::uint8_t>> z;          // N x R
    std::optional<MatrixD> gstar;                   // R x T (BNMF G*, TBNMF=1 initial G)
    std::optional<MatrixD> phistar;                 // R x M spline coefficients
    std::optional<std::vector<std::uint8_t>> g_ind; // per-lineage switches
    std::optional<Matrix<std::uint8_t>> phi_ind;    // R x M per-coefficient switches
};

struct BayesOptions {
    UpdateToggles toggles;
    InitOverrides init;
    double clamp_eps = kProbClampEps;
    double alpha_min = 1e-3;      // Dirichlet concentration floor (TBNMF=1)
    int refresh_interval = 1000;  // full cache rebuild cadence, counters float drift
    double init_step_scalar = 0.5;
    double init_step_block = 0.3;
    /// Fraction of burn-in spent ramping the likelihood weight from ~0 to 1
    /// (quadratic schedule).  Eases the walk from the diffuse prior start into
    /// the sharply peaked posterior; the weight is pinned at 1 before burn-in
    /// ends, so stored draws come from the exact posterior kernel.  0 disables.
    /// Ignored when NMF initialization is in effect: a near-flat likelihood in
    /// early burn-in would let the chains diffuse right back off the
    /// initialization point.
    double temper_fraction = 0.5;
    /// Seed the chains near a cheap multiplicative-NMF point estimate (with
    /// per-chain jitter) instead of pure prior draws.  Plain random-walk
    /// chains started from the prior routinely stall in minor modes of this
    /// strongly multimodal posterior; explicit InitOverrides still win, and
    /// setting this false restores prior-draw initialization.
    bool smart_init = true;
};

struct BayesFit {
    PosteriorDraws draws;
    FitReport report;
    std::map<std::string, double> accept_rates;  // mean acceptance per update family
};

// ---------------------------------------------------------------------------
// Label alignment across chains
// ---------------------------------------------------------------------------

/// Undo label switching between chains: per-chain posterior means of Z are
/// matched to the first chain's by minimum total L1 column distance, and the
/// resulting column permutation is applied to every draw of that chain.
inline void relabel_chains(PosteriorDraws& draws) {
    const std::size_t r = draws.n_lineages();
    if (r <= 1 || draws.size() == 0) return;
    std::map<int, std::vector<std::size_t>> by_chain;
    for (std::size_t s = 0; s < draws.size(); ++s) by_chain[draws[s].chain].push_back(s);
    if (by_chain.size() <= 1) return;

    const std::size_t n = draws.n_mutations();
    auto chain_z_mean = [&](const std::vector<std::size_t>& idx) {
        MatrixD m(n, r, 0.0);
        for (std::size_t s : idx)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < r; ++j) m(i, j) += draws[s].z(i, j);
        for (auto& v : m.data()) v /= static_cast<double>(idx.size());
        return m;
    };

    const MatrixD ref = chain_z_mean(by_chain.begin()->second);
    for (auto it = std::next(by_chain.begin()); it != by_chain.end(); ++it) {
        const MatrixD mean = chain_z_mean(it->second);
        MatrixD score(r, r, 0.0);
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = 0; b < r; ++b) {
                double dist = 0.0;
                for (std::size_t i = 0; i < n; ++i) dist += std::abs(mean(i, a) - ref(i, b));
                score(a, b) = -dist;
            }
        const auto [perm, total] = detail::assignment_hungarian(score);
        (void)total;
        bool identity = true;
        for (std::size_t k = 0; k < r; ++k) identity = identity && perm[k] == k;
        if (identity) continue;
        for (std::size_t s : it->second) {
            Draw& d = draws.draws()[s];
            d.z = d.z.permute_cols(perm);
            d.g = d.g.permute_rows(perm);
            if (d.phi.rows() == r) d.phi = d.phi.permute_rows(perm);
            if (d.phi_ind.rows() == r) d.phi_ind = d.phi_ind.permute_rows(perm);
            if (d.g_ind.size() == r) {
                std::vector<std::uint8_t> g_ind(r);
                for (std::size_t k = 0; k < r; ++k) g_ind[k] = d.g_ind[perm[k]];
                d.g_ind = std::move(g_ind);
            }
        }
    }
}

namespace detail {

// ---------------------------------------------------------------------------
// NMF-based initialization
// ---------------------------------------------------------------------------

struct SmartInitData {
    Matrix<std::uint8_t> z;  // thresholded membership
    MatrixD g;               // R x T abundance levels in [0,1]
};

inline std::optional<SmartInitData> make_smart_init(const MutationPanel& panel, std::size_t r,
                                                    std::uint64_t seed) {
    if (r > std::min(panel.n_mutations(), panel.n_dates())) return std::nullopt;
    try {
        NmfResult res = fit_nmf(frequency_matrix(panel), r, seed + 0x9e37, 1500, 1e-8);
        res = percentile_rescale(res, 0.99);
        SmartInitData out;
        out.z = Matrix<std::uint8_t>(panel.n_mutations(), r, 0);
        for (std::size_t j = 0; j < r; ++j) {
            std::size_t best = 0;
            bool any = false;
            for (std::size_t i = 0; i < panel.n_mutations(); ++i) {
                if (res.z(i, j) > res.z(best, j)) best = i;
                if (res.z(i, j) > 0.5) {
                    out.z(i, j) = 1;
                    any = true;
                }
            }
            if (!any) out.z(best, j) = 1;
        }
        out.g = res.g;
        for (auto& v : out.g.data()) v = std::min(1.0, std::max(0.0, v));
        return out;
    } catch (const Error&) {
        return std::nullopt;  // degenerate panel; fall back to prior draws
    }
}

/// Ridge-stabilized least squares fit of basis coefficients to a curve.
inline std::vector<double> spline_ls_fit(const SplineBasis& basis, const std::vector<double>& y) {
    const std::size_t m = basis.n_basis;
    MatrixD ata(m, m, 0.0);
    std::vector<double> aty(m, 0.0);
    for (std::size_t t = 0; t < basis.n_times(); ++t)
        for (std::size_t a = 0; a < m; ++a) {
            aty[a] += basis.matrix(t, a) * y[t];
            for (std::size_t b = 0; b < m; ++b)
                ata(a, b) += basis.matrix(t, a) * basis.matrix(t, b);
        }
    for (std::size_t a = 0; a < m; ++a) ata(a, a) += 1e-8;
    return solve_linear(std::move(ata), std::move(aty));
}

// ---------------------------------------------------------------------------
// Shared chain machinery
// ---------------------------------------------------------------------------

/// Per-chain state common to the three models: Z, the effective abundance
/// matrix G, and incrementally maintained caches of the cell probabilities
/// (ZG), per-cell log-likelihoods, and their total.
class ChainCore {
  public:
    ChainCore(const MutationPanel& panel, std::size_t r, const SamplerConfig& cfg,
              const BayesOptions& opts, int chain_id, const SmartInitData* smart)
        : panel_{panel},
          opts_{opts},
          rng_{chain_rng(cfg.seed, chain_id)},
          chain_id_{chain_id},
          n_{panel.n_mutations()},
          t_{panel.n_dates()},
          r_{r},
          z_(n_, r, 0),
          g_(r, panel.n_dates(), 0.0),
          prob_(n_, panel.n_dates(), 0.0),
          ll_(n_, panel.n_dates(), 0.0) {
        if (opts.init.z) {
            require_shape(opts.init.z->rows() == n_ && opts.init.z->cols() == r_,
                          "InitOverrides: z must be N x R");
            z_ = *opts.init.z;
            for (auto v : z_.data()) require(v == 0 || v == 1, "InitOverrides: non-binary z");
        } else if (smart) {
            z_ = smart->z;
        } else {
            for (auto& v : z_.data()) v = uniform01(rng_) < 0.5 ? 1 : 0;
        }
    }

    int chain_id() const { return chain_id_; }
    double total_loglik() const { return ll_total_; }
    Rng& rng() { return rng_; }

    /// Likelihood weight for the burn-in tempering schedule (1 = exact).
    void set_likelihood_weight(double beta) { beta_ = beta; }

  protected:
    double cell_ll(std::size_t i, std::size_t t, double p) const {
        return binomial_cell_loglik(panel_.counts()(i, t), panel_.depths()(i, t), p,
                                    opts_.clamp_eps);
    }

    /// Rebuild prob = ZG, the log-likelihood cells, and the total from scratch.
    void rebuild_likelihood() {
        ll_total_ = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t t = 0; t < t_; ++t) {
                double p = 0.0;
                for (std::size_t j = 0; j < r_; ++j)
                    if (z_(i, j)) p += g_(j, t);
                prob_(i, t) = p;
                ll_(i, t) = cell_ll(i, t, p);
                ll_total_ += ll_(i, t);
            }
        require(std::isfinite(ll_total_), "sampler: non-finite likelihood");
    }

    /// Replace one column of G and refresh the dependent caches.
    void set_g_column(std::size_t t, const std::vector<double>& col) {
        for (std::size_t j = 0; j < r_; ++j) g_(j, t) = col[j];
        for (std::size_t i = 0; i < n_; ++i) {
            double p = 0.0;
            for (std::size_t j = 0; j < r_; ++j)
                if (z_(i, j)) p += g_(j, t);
            prob_(i, t) = p;
            const double nll = cell_ll(i, t, p);
            ll_total_ += nll - ll_(i, t);
            ll_(i, t) = nll;
        }
    }

    /// Exact full-conditional flips of every Z entry against the binomial
    /// likelihood (prior Bernoulli(0.5)).
    void update_z_entries() {
        std::vector<double> ll0(t_), ll1(t_);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < r_; ++j) {
                double s0 = 0.0, s1 = 0.0;
                for (std::size_t t = 0; t < t_; ++t) {
                    double base = prob_(i, t);
                    if (z_(i, j)) base -= g_(j, t);
                    if (base < 0.0) base = 0.0;
                    ll0[t] = cell_ll(i, t, base);
                    ll1[t] = cell_ll(i, t, base + g_(j, t));
                    s0 += ll0[t];
                    s1 += ll1[t];
                }
                const std::uint8_t bit = opts_.toggles.use_likelihood
                                             ? flip_update(beta_ * s0, beta_ * s1, 0.5, rng_)
                                             : (uniform01(rng_) < 0.5 ? 1 : 0);
                if (bit == z_(i, j)) continue;
                z_(i, j) = bit;
                for (std::size_t t = 0; t < t_; ++t) {
                    double base = prob_(i, t);
                    if (!bit) base -= g_(j, t);  // was 1, now 0
                    // (if bit==1 the old prob_ already lacked the contribution)
                    if (bit) {
                        prob_(i, t) += g_(j, t);
                    } else {
                        prob_(i, t) = base < 0.0 ? 0.0 : base;
                    }
                    const double nll = bit ? ll1[t] : ll0[t];
                    ll_total_ += nll - ll_(i, t);
                    ll_(i, t) = nll;
                }
            }
        }
    }

    /// The driver refreshes all caches immediately before every snapshot, so
    /// stored values are free of incremental-update drift.
    Draw snapshot_base() {
        Draw d;
        d.z = z_;
        d.g = g_;
        d.loglik_cells.assign(ll_.data().begin(), ll_.data().end());
        d.chain = chain_id_;
        return d;
    }

    const MutationPanel& panel_;
    BayesOptions opts_;
    Rng rng_;
    int chain_id_;
    std::size_t n_, t_, r_;
    Matrix<std::uint8_t> z_;
    MatrixD g_;
    MatrixD prob_;
    MatrixD ll_;
    double ll_total_ = 0.0;
    double beta_ = 1.0;
};

/// Windowed acceptance tallies feeding a StepAdapter.
struct AdaptedStep {
    StepAdapter adapter;
    std::vector<std::uint8_t> window;

    AdaptedStep(double init, double target) : adapter(init, target) {}
    void record(bool accepted) { window.push_back(accepted ? 1 : 0); }
    void adapt_round() {
        adapter.adapt(window);
        window.clear();
    }
};

struct AcceptTally {
    long accepted = 0;
    long proposed = 0;
    void record(bool a) {
        accepted += a ? 1 : 0;
        ++proposed;
    }
    double rate() const {
        return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

// ---------------------------------------------------------------------------
// BNMF (binomial NMF with Dirichlet G* and lineage switches)
// ---------------------------------------------------------------------------

class BnmfChain : public ChainCore {
  public:
    BnmfChain(const MutationPanel& panel, std::size_t r, const SamplerConfig& cfg,
              const BayesOptions& opts, int chain_id, const SmartInitData* smart)
        : ChainCore(panel, r, cfg, opts, chain_id, smart), gstar_(r, t_, 0.0), gind_(r, 1) {
        if (opts_.init.gstar) {
            require_shape(opts_.init.gstar->rows() == r_ && opts_.init.gstar->cols() == t_,
                          "InitOverrides: gstar must be R x T");
            gstar_ = *opts_.init.gstar;
            for (std::size_t t = 0; t < t_; ++t) {
                double sum = 0.0;
                for (std::size_t j = 0; j < r_; ++j) {
                    require(gstar_(j, t) > 0.0, "InitOverrides: gstar entries must be positive");
                    sum += gstar_(j, t);
                }
                require(std::abs(sum - 1.0) <= 1e-6, "InitOverrides: gstar columns must sum to 1");
                for (std::size_t j = 0; j < r_; ++j) gstar_(j, t) /= sum;
            }
        } else if (smart) {
            for (std::size_t t = 0; t < t_; ++t) {  // jittered, normalized NMF levels
                double sum = 0.0;
                for (std::size_t j = 0; j < r_; ++j) {
                    gstar_(j, t) =
                        std::max(smart->g(j, t), 1e-4) * std::exp(0.05 * normal01(rng_));
                    sum += gstar_(j, t);
                }
                for (std::size_t j = 0; j < r_; ++j) gstar_(j, t) /= sum;
            }
        } else {
            for (std::size_t t = 0; t < t_; ++t) {  // Dirichlet(1) columns
                double sum = 0.0;
                std::vector<double> e(r_);
                for (auto& v : e) {
                    v = -std::log(1.0 - uniform01(rng_));
                    v = std::max(v, 1e-12);
                    sum += v;
                }
                for (std::size_t j = 0; j < r_; ++j) gstar_(j, t) = e[j] / sum;
            }
        }
        if (opts_.init.g_ind) {
            require_shape(opts_.init.g_ind->size() == r_, "InitOverrides: g_ind must have length R");
            gind_ = *opts_.init.g_ind;
        } else if (!smart) {  // smart init keeps every lineage switched on
            for (auto& v : gind_) v = uniform01(rng_) < 0.5 ? 1 : 0;
        }
        refresh_effective();
        rebuild_likelihood();
        for (std::size_t t = 0; t < t_; ++t)
            col_steps_.emplace_back(opts_.init_step_block, kBlockTargetAccept);
    }

    void iterate() {
        if (opts_.toggles.update_z) update_z_entries();
        if (opts_.toggles.update_abundance) update_gstar_columns();
        if (opts_.toggles.update_indicators) update_gind();
    }

    void adapt_round() {
        for (auto& s : col_steps_) s.adapt_round();
    }
    void freeze() {
        for (auto& s : col_steps_) s.adapter.freeze();
    }
    void refresh() {
        refresh_effective();
        rebuild_likelihood();
    }

    Draw snapshot() {
        Draw d = snapshot_base();
        d.g_ind.assign(gind_.begin(), gind_.end());
        return d;
    }

    std::map<std::string, double> accept_rates() const {
        return {{"gstar_columns", col_tally_.rate()}};
    }

  private:
    void refresh_effective() {
        for (std::size_t j = 0; j < r_; ++j)
            for (std::size_t t = 0; t < t_; ++t) g_(j, t) = gind_[j] ? gstar_(j, t) : 0.0;
    }

    void update_gstar_columns() {
        for (std::size_t t = 0; t < t_; ++t) {
            auto current = gstar_.col(t);
            auto logpost = [&](const std::vector<double>& col) {
                if (!opts_.toggles.use_likelihood) return 0.0;  // flat Dirichlet(1) prior
                double s = 0.0;
                for (std::size_t i = 0; i < n_; ++i) {
                    double p = 0.0;
                    for (std::size_t j = 0; j < r_; ++j)
                        if (z_(i, j) && gind_[j]) p += col[j];
                    s += cell_ll(i, t, p);
                }
                return beta_ * s;
            };
            const auto res =
                rw_update_simplex(current, logpost, col_steps_[t].adapter.step(), rng_);
            if (r_ > 1) {
                col_steps_[t].record(res.accepted);
                col_tally_.record(res.accepted);
            }
            if (res.accepted) {
                gstar_.set_col(t, res.value);
                std::vector<double> eff(r_);
                for (std::size_t j = 0; j < r_; ++j) eff[j] = gind_[j] ? res.value[j] : 0.0;
                set_g_column(t, eff);
            }
        }
    }

    void update_gind() {
        for (std::size_t j = 0; j < r_; ++j) {
            // Only cells in rows carrying lineage j differ between on and off.
            double ll_off = 0.0, ll_on = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (!z_(i, j)) continue;
                for (std::size_t t = 0; t < t_; ++t) {
                    double base = prob_(i, t);
                    if (gind_[j]) base -= gstar_(j, t);
                    if (base < 0.0) base = 0.0;
                    ll_off += cell_ll(i, t, base);
                    ll_on += cell_ll(i, t, base + gstar_(j, t));
                }
            }
            const std::uint8_t bit = opts_.toggles.use_likelihood
                                         ? flip_update(beta_ * ll_off, beta_ * ll_on, 0.5, rng_)
                                         : (uniform01(rng_) < 0.5 ? 1 : 0);
            if (bit == gind_[j]) continue;
            gind_[j] = bit;
            for (std::size_t t = 0; t < t_; ++t) g_(j, t) = bit ? gstar_(j, t) : 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (!z_(i, j)) continue;
                for (std::size_t t = 0; t < t_; ++t) {
                    const double delta = bit ? gstar_(j, t) : -gstar_(j, t);
                    double p = prob_(i, t) + delta;
                    if (p < 0.0) p = 0.0;
                    prob_(i, t) = p;
                    const double nll = cell_ll(i, t, p);
                    ll_total_ += nll - ll_(i, t);
                    ll_(i, t) = nll;
                }
            }
        }
    }

    MatrixD gstar_;
    std::vector<std::uint8_t> gind_;
    std::vector<AdaptedStep> col_steps_;
    AcceptTally col_tally_;
};

// ---------------------------------------------------------------------------
// TBNMF<=1 (uniform spline coefficients, per-lineage switches, fluffmax)
// ---------------------------------------------------------------------------

class TbnmfLe1Chain : public ChainCore {
  public:
    TbnmfLe1Chain(const MutationPanel& panel, std::size_t r, const SplineBasis& basis,
                  const SamplerConfig& cfg, const BayesOptions& opts, int chain_id,
                  const SmartInitData* smart)
        : ChainCore(panel, r, cfg, opts, chain_id, smart),
          basis_{basis},
          m_{basis.n_basis},
          phistar_(r, basis.n_basis, 0.0),
          phind_(r, 1) {
        require_shape(basis_.n_times() == t_, "tbnmf: basis rows must match panel dates");
        if (opts_.init.phistar) {
            require_shape(opts_.init.phistar->rows() == r_ && opts_.init.phistar->cols() == m_,
                          "InitOverrides: phistar must be R x M");
            phistar_ = *opts_.init.phistar;
            for (auto v : phistar_.data())
                require(v > 0.0 && v < 1.0, "InitOverrides: phistar entries must lie in (0,1)");
        } else if (smart) {
            for (std::size_t j = 0; j < r_; ++j) {  // jittered LS fit to NMF levels
                std::vector<double> row(t_);
                for (std::size_t t = 0; t < t_; ++t) row[t] = smart->g(j, t);
                const auto coef = spline_ls_fit(basis_, row);
                for (std::size_t m = 0; m < m_; ++m) {
                    const double v = coef[m] * std::exp(0.05 * normal01(rng_));
                    phistar_(j, m) = std::min(1.0 - 1e-3, std::max(1e-3, v));
                }
            }
        } else {
            for (auto& v : phistar_.data())
                v = std::min(1.0 - 1e-12, std::max(1e-12, uniform01(rng_)));
        }
        if (opts_.init.g_ind) {
            require_shape(opts_.init.g_ind->size() == r_, "InitOverrides: g_ind must have length R");
            phind_ = *opts_.init.g_ind;
        } else if (!smart) {  // smart init keeps every lineage switched on
            for (auto& v : phind_) v = uniform01(rng_) < 0.5 ? 1 : 0;
        }
        rebuild_curves();
        rebuild_likelihood();
        for (std::size_t k = 0; k < r_ * m_; ++k)
            phi_steps_.emplace_back(opts_.init_step_scalar, cfg.target_accept);
    }

    void iterate() {
        if (opts_.toggles.update_z) update_z_entries();
        if (opts_.toggles.update_phi) update_phistar();
        if (opts_.toggles.update_indicators) update_phind();
    }

    void adapt_round() {
        for (auto& s : phi_steps_) s.adapt_round();
    }
    void freeze() {
        for (auto& s : phi_steps_) s.adapter.freeze();
    }
    void refresh() {
        rebuild_curves();
        rebuild_likelihood();
    }

    Draw snapshot() {
        Draw d = snapshot_base();
        d.phi = MatrixD(r_, m_, 0.0);
        for (std::size_t j = 0; j < r_; ++j)
            for (std::size_t m = 0; m < m_; ++m)
                d.phi(j, m) = phind_[j] ? phistar_(j, m) : 0.0;
        d.g_ind.assign(phind_.begin(), phind_.end());
        return d;
    }

    std::map<std::string, double> accept_rates() const {
        return {{"phistar", phi_tally_.rate()}};
    }

  private:
    /// gstar row j = basis * phi_j; G columns = fluffmax(gstar column).
    void rebuild_curves() {
        gstar_ = MatrixD(r_, t_, 0.0);
        for (std::size_t j = 0; j < r_; ++j) {
            if (!phind_[j]) continue;
            for (std::size_t t = 0; t < t_; ++t) {
                double v = 0.0;
                for (std::size_t m = 0; m < m_; ++m) v += basis_.matrix(t, m) * phistar_(j, m);
                gstar_(j, t) = v;
            }
        }
        for (std::size_t t = 0; t < t_; ++t) apply_fluffmax_column(t);
    }

    void apply_fluffmax_column(std::size_t t) {
        double sum = 0.0;
        for (std::size_t j = 0; j < r_; ++j) sum += gstar_(j, t);
        const double scale = sum > 1.0 ? 1.0 / sum : 1.0;
        for (std::size_t j = 0; j < r_; ++j) g_(j, t) = gstar_(j, t) * scale;
    }

    /// Total log-likelihood if gstar row `row` took `candidate_row` values at
    /// the columns listed in `cols` (other columns and rows unchanged).
    double candidate_total(std::size_t row, const std::vector<std::size_t>& cols,
                           const std::vector<double>& candidate_row_vals) {
        double total = ll_total_;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const std::size_t t = cols[c];
            double old_sum = 0.0;
            for (std::size_t j = 0; j < r_; ++j) old_sum += gstar_(j, t);
            const double new_entry = candidate_row_vals[c];
            const double new_sum = old_sum - gstar_(row, t) + new_entry;
            const double old_scale = old_sum > 1.0 ? 1.0 / old_sum : 1.0;
            const double new_scale = new_sum > 1.0 ? 1.0 / new_sum : 1.0;
            if (old_scale == 1.0 && new_scale == 1.0) {
                // Fast path: only row `row` changes in this column.
                const double delta = new_entry - gstar_(row, t);
                if (delta == 0.0) continue;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (!z_(i, row)) continue;
                    double p = prob_(i, t) + delta;
                    if (p < 0.0) p = 0.0;
                    total += cell_ll(i, t, p) - ll_(i, t);
                }
                continue;
            }
            for (std::size_t i = 0; i < n_; ++i) {
                double p = 0.0;
                for (std::size_t j = 0; j < r_; ++j) {
                    if (!z_(i, j)) continue;
                    p += (j == row ? new_entry : gstar_(j, t)) * new_scale;
                }
                total += cell_ll(i, t, p) - ll_(i, t);
            }
        }
        return total;
    }

    /// Recompute the caches of the listed columns after a row change.
    void apply_columns(const std::vector<std::size_t>& cols) {
        for (std::size_t t : cols) {
            apply_fluffmax_column(t);
            std::vector<double> col(r_);
            for (std::size_t j = 0; j < r_; ++j) col[j] = g_(j, t);
            set_g_column(t, col);
        }
    }

    std::vector<std::size_t> support_columns(std::size_t m) const {
        std::vector<std::size_t> cols;
        for (std::size_t t = 0; t < t_; ++t)
            if (basis_.matrix(t, m) != 0.0) cols.push_back(t);
        return cols;
    }

    void update_phistar() {
        for (std::size_t j = 0; j < r_; ++j) {
            for (std::size_t m = 0; m < m_; ++m) {
                const double cur = phistar_(j, m);
                const auto cols = support_columns(m);
                auto logpost = [&](double v) {
                    if (!opts_.toggles.use_likelihood || !phind_[j]) return 0.0;
                    if (v == cur) return beta_ * ll_total_;
                    std::vector<double> vals(cols.size());
                    for (std::size_t c = 0; c < cols.size(); ++c)
                        vals[c] = gstar_(j, cols[c]) + basis_.matrix(cols[c], m) * (v - cur);
                    return beta_ * candidate_total(j, cols, vals);
                };
                auto& st = phi_steps_[j * m_ + m];
                const auto res =
                    rw_update_scalar(cur, Support::UnitInterval, logpost, st.adapter.step(), rng_);
                st.record(res.accepted);
                phi_tally_.record(res.accepted);
                if (res.accepted && res.value != cur) {
                    phistar_(j, m) = res.value;
                    if (phind_[j]) {
                        for (std::size_t t : cols)
                            gstar_(j, t) += basis_.matrix(t, m) * (res.value - cur);
                        apply_columns(cols);
                    }
                }
            }
        }
    }

    void update_phind() {
        std::vector<std::size_t> all_cols(t_);
        std::iota(all_cols.begin(), all_cols.end(), 0);
        for (std::size_t j = 0; j < r_; ++j) {
            std::vector<double> on_row(t_), off_row(t_, 0.0);
            for (std::size_t t = 0; t < t_; ++t) {
                double v = 0.0;
                for (std::size_t m = 0; m < m_; ++m) v += basis_.matrix(t, m) * phistar_(j, m);
                on_row[t] = v;
            }
            double ll_on, ll_off;
            if (phind_[j]) {
                ll_on = ll_total_;
                ll_off = candidate_total(j, all_cols, off_row);
            } else {
                ll_off = ll_total_;
                ll_on = candidate_total(j, all_cols, on_row);
            }
            const std::uint8_t bit = opts_.toggles.use_likelihood
                                         ? flip_update(beta_ * ll_off, beta_ * ll_on, 0.5, rng_)
                                         : (uniform01(rng_) < 0.5 ? 1 : 0);
            if (bit == phind_[j]) continue;
            phind_[j] = bit;
            for (std::size_t t = 0; t < t_; ++t) gstar_(j, t) = bit ? on_row[t] : 0.0;
            apply_columns(all_cols);
        }
    }

    const SplineBasis& basis_;
    std::size_t m_;
    MatrixD phistar_;
    std::vector<std::uint8_t> phind_;
    MatrixD gstar_;
    std::vector<AdaptedStep> phi_steps_;
    AcceptTally phi_tally_;
};

// ---------------------------------------------------------------------------
// TBNMF=1 (exponential coefficients, per-coefficient switches, Dirichlet G)
// ---------------------------------------------------------------------------

class TbnmfEq1Chain : public ChainCore {
  public:
    TbnmfEq1Chain(const MutationPanel& panel, std::size_t r, const SplineBasis& basis,
                  const SamplerConfig& cfg, const BayesOptions& opts, int chain_id,
                  const SmartInitData* smart)
        : ChainCore(panel, r, cfg, opts, chain_id, smart),
          basis_{basis},
          m_{basis.n_basis},
          phistar_(r, basis.n_basis, 0.0),
          phind_(r, basis.n_basis, 0),
          alpha_raw_(r, t_, 0.0),
          alpha_(r, t_, 0.0) {
        require_shape(basis_.n_times() == t_, "tbnmf: basis rows must match panel dates");
        if (opts_.init.phistar) {
            require_shape(opts_.init.phistar->rows() == r_ && opts_.init.phistar->cols() == m_,
                          "InitOverrides: phistar must be R x M");
            phistar_ = *opts_.init.phistar;
            for (auto v : phistar_.data())
                require(v > 0.0, "InitOverrides: phistar entries must be positive");
        } else if (smart) {
            // LS fit of the basis to a moderately concentrated Dirichlet level
            // (alpha ~ 20 * mixture weight), jittered per chain.
            for (std::size_t j = 0; j < r_; ++j) {
                std::vector<double> row(t_);
                for (std::size_t t = 0; t < t_; ++t) row[t] = 20.0 * smart->g(j, t);
                const auto coef = spline_ls_fit(basis_, row);
                for (std::size_t m = 0; m < m_; ++m) {
                    const double v = coef[m] * std::exp(0.05 * normal01(rng_));
                    phistar_(j, m) = std::max(1e-3, v);
                }
            }
        } else {
            for (auto& v : phistar_.data())
                v = std::max(1e-12, -std::log(1.0 - uniform01(rng_)));  // Exp(1)
        }
        if (opts_.init.phi_ind) {
            require_shape(opts_.init.phi_ind->rows() == r_ && opts_.init.phi_ind->cols() == m_,
                          "InitOverrides: phi_ind must be R x M");
            phind_ = *opts_.init.phi_ind;
        } else if (smart) {
            for (auto& v : phind_.data()) v = 1;  // all coefficients active
        } else {
            for (auto& v : phind_.data()) v = uniform01(rng_) < 0.5 ? 1 : 0;
        }
        rebuild_alpha();
        if (opts_.init.gstar) {
            require_shape(opts_.init.gstar->rows() == r_ && opts_.init.gstar->cols() == t_,
                          "InitOverrides: gstar must be R x T");
            g_ = *opts_.init.gstar;
            for (std::size_t t = 0; t < t_; ++t) {
                double sum = 0.0;
                for (std::size_t j = 0; j < r_; ++j) {
                    require(g_(j, t) > 0.0, "InitOverrides: G entries must be positive");
                    sum += g_(j, t);
                }
                for (std::size_t j = 0; j < r_; ++j) g_(j, t) /= sum;
            }
        } else if (smart) {
            for (std::size_t t = 0; t < t_; ++t) {  // jittered, normalized NMF levels
                double sum = 0.0;
                for (std::size_t j = 0; j < r_; ++j) {
                    g_(j, t) = std::max(smart->g(j, t), 1e-4) * std::exp(0.05 * normal01(rng_));
                    sum += g_(j, t);
                }
                for (std::size_t j = 0; j < r_; ++j) g_(j, t) /= sum;
            }
        } else {
            for (std::size_t t = 0; t < t_; ++t) {  // Dirichlet(alpha) would need
                double sum = 0.0;                   // gamma draws; Dirichlet(1) start
                std::vector<double> e(r_);          // is in the support and mixes in
                for (auto& v : e) {                 // burn-in.
                    v = std::max(1e-12, -std::log(1.0 - uniform01(rng_)));
                    sum += v;
                }
                for (std::size_t j = 0; j < r_; ++j) g_(j, t) = e[j] / sum;
            }
        }
        rebuild_likelihood();
        for (std::size_t k = 0; k < r_ * m_; ++k)
            phi_steps_.emplace_back(opts_.init_step_scalar, cfg.target_accept);
        for (std::size_t t = 0; t < t_; ++t)
            col_steps_.emplace_back(opts_.init_step_block, kBlockTargetAccept);
    }

    void iterate() {
        if (opts_.toggles.update_z) update_z_entries();
        if (opts_.toggles.update_phi) update_phistar();
        if (opts_.toggles.update_indicators) update_phind();
        if (opts_.toggles.update_abundance) update_g_columns();
    }

    void adapt_round() {
        for (auto& s : phi_steps_) s.adapt_round();
        for (auto& s : col_steps_) s.adapt_round();
    }
    void freeze() {
        for (auto& s : phi_steps_) s.adapter.freeze();
        for (auto& s : col_steps_) s.adapter.freeze();
    }
    void refresh() {
        rebuild_alpha();
        rebuild_likelihood();
    }

    Draw snapshot() {
        Draw d = snapshot_base();
        d.phi = MatrixD(r_, m_, 0.0);
        for (std::size_t j = 0; j < r_; ++j)
            for (std::size_t m = 0; m < m_; ++m)
                d.phi(j, m) = phind_(j, m) ? phistar_(j, m) : 0.0;
        d.phi_ind = phind_;
        return d;
    }

    std::map<std::string, double> accept_rates() const {
        return {{"phistar", phi_tally_.rate()}, {"g_columns", col_tally_.rate()}};
    }

  private:
    void rebuild_alpha() {
        for (std::size_t j = 0; j < r_; ++j)
            for (std::size_t t = 0; t < t_; ++t) {
                double v = 0.0;
                for (std::size_t m = 0; m < m_; ++m)
                    if (phind_(j, m)) v += basis_.matrix(t, m) * phistar_(j, m);
                alpha_raw_(j, t) = v;
                alpha_(j, t) = std::max(v, opts_.alpha_min);
            }
    }

    /// Dirichlet log-density terms of column t that vary with alpha(j,t):
    /// lgamma(sum) - lgamma(alpha_j) + alpha_j * log G(j,t).
    double dirichlet_terms(std::size_t j, std::size_t t, double alpha_j) const {
        double sum = alpha_j;
        for (std::size_t k = 0; k < r_; ++k)
            if (k != j) sum += alpha_(k, t);
        return std::lgamma(sum) - std::lgamma(alpha_j) + alpha_j * std::log(g_(j, t));
    }

    void update_phistar() {
        for (std::size_t j = 0; j < r_; ++j) {
            for (std::size_t m = 0; m < m_; ++m) {
                const double cur = phistar_(j, m);
                auto logpost = [&](double v) {
                    double lp = -v;  // Exponential(1) prior
                    if (!phind_(j, m)) return lp;
                    for (std::size_t t = 0; t < t_; ++t) {
                        const double b = basis_.matrix(t, m);
                        if (b == 0.0) continue;
                        const double raw = alpha_raw_(j, t) + b * (v - cur);
                        lp += dirichlet_terms(j, t, std::max(raw, opts_.alpha_min));
                    }
                    return lp;
                };
                auto& st = phi_steps_[j * m_ + m];
                const auto res =
                    rw_update_scalar(cur, Support::Positive, logpost, st.adapter.step(), rng_);
                st.record(res.accepted);
                phi_tally_.record(res.accepted);
                if (res.accepted && res.value != cur) {
                    phistar_(j, m) = res.value;
                    if (phind_(j, m)) {
                        for (std::size_t t = 0; t < t_; ++t) {
                            const double b = basis_.matrix(t, m);
                            if (b == 0.0) continue;
                            alpha_raw_(j, t) += b * (res.value - cur);
                            alpha_(j, t) = std::max(alpha_raw_(j, t), opts_.alpha_min);
                        }
                    }
                }
            }
        }
    }

    void update_phind() {
        for (std::size_t j = 0; j < r_; ++j) {
            for (std::size_t m = 0; m < m_; ++m) {
                double ll_off = 0.0, ll_on = 0.0;
                for (std::size_t t = 0; t < t_; ++t) {
                    const double b = basis_.matrix(t, m);
                    if (b == 0.0) continue;
                    const double contrib = b * phistar_(j, m);
                    const double raw_on =
                        alpha_raw_(j, t) + (phind_(j, m) ? 0.0 : contrib);
                    const double raw_off = raw_on - contrib;
                    ll_on += dirichlet_terms(j, t, std::max(raw_on, opts_.alpha_min));
                    ll_off += dirichlet_terms(j, t, std::max(raw_off, opts_.alpha_min));
                }
                const std::uint8_t bit = flip_update(ll_off, ll_on, 0.5, rng_);
                if (bit == phind_(j, m)) continue;
                phind_(j, m) = bit;
                const double delta = (bit ? 1.0 : -1.0) * phistar_(j, m);
                for (std::size_t t = 0; t < t_; ++t) {
                    const double b = basis_.matrix(t, m);
                    if (b == 0.0) continue;
                    alpha_raw_(j, t) += b * delta;
                    alpha_(j, t) = std::max(alpha_raw_(j, t), opts_.alpha_min);
                }
            }
        }
    }

    void update_g_columns() {
        for (std::size_t t = 0; t < t_; ++t) {
            auto current = g_.col(t);
            auto logpost = [&](const std::vector<double>& col) {
                double lp = 0.0;
                for (std::size_t j = 0; j < r_; ++j)
                    lp += (alpha_(j, t) - 1.0) * std::log(col[j]);
                if (!opts_.toggles.use_likelihood) return lp;
                double s = 0.0;
                for (std::size_t i = 0; i < n_; ++i) {
                    double p = 0.0;
                    for (std::size_t j = 0; j < r_; ++j)
                        if (z_(i, j)) p += col[j];
                    s += cell_ll(i, t, p);
                }
                return lp + beta_ * s;
            };
            const auto res =
                rw_update_simplex(current, logpost, col_steps_[t].adapter.step(), rng_);
            if (r_ > 1) {
                col_steps_[t].record(res.accepted);
                col_tally_.record(res.accepted);
            }
            if (res.accepted) set_g_column(t, res.value);
        }
    }

    const SplineBasis& basis_;
    std::size_t m_;
    MatrixD phistar_;
    Matrix<std::uint8_t> phind_;
    MatrixD alpha_raw_;
    MatrixD alpha_;
    std::vector<AdaptedStep> phi_steps_;
    std::vector<AdaptedStep> col_steps_;
    AcceptTally phi_tally_;
    AcceptTally col_tally_;
};

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

template <typename MakeChain>
BayesFit run_sampler(const MutationPanel& panel, std::size_t r, const SamplerConfig& cfg,
                     const BayesOptions& opts, ModelKind kind, ConstraintKind constraint,
                     MakeChain make_chain) {
    cfg.validate();
    require(r >= 1, "sampler: rank must be >= 1");
    require(r <= panel.n_mutations(), "sampler: rank exceeds number of mutations");
    const long per_chain =
        (static_cast<long>(cfg.n_iter) - cfg.n_burnin + cfg.thin - 1) / cfg.thin;
    require(per_chain * cfg.n_chains >= 2, "sampler: configuration stores fewer than 2 draws");
    require(opts.refresh_interval >= 1, "sampler: refresh_interval must be >= 1");

    PosteriorDraws draws(panel.n_mutations(), r, panel.n_dates(), constraint);
    std::map<std::string, double> rate_sums;
    const long ramp_iters =
        static_cast<long>(opts.temper_fraction * static_cast<double>(cfg.n_burnin));
    for (int chain = 0; chain < cfg.n_chains; ++chain) {
        auto ch = make_chain(chain);
        for (long it = 0; it < cfg.n_iter; ++it) {
            if (it == cfg.n_burnin) ch.freeze();
            if (it < ramp_iters) {
                const double f = static_cast<double>(it + 1) / static_cast<double>(ramp_iters);
                ch.set_likelihood_weight(f * f);
            } else {
                ch.set_likelihood_weight(1.0);
            }
            ch.iterate();
            const bool adapting = it < cfg.n_burnin;
            if (adapting && (it + 1) % cfg.adapt_interval == 0) ch.adapt_round();
            if (it >= cfg.n_burnin && (it - cfg.n_burnin) % cfg.thin == 0) {
                ch.refresh();
                draws.append(ch.snapshot());
            } else if ((it + 1) % opts.refresh_interval == 0) {
                ch.refresh();
            }
            if (cfg.progress && (it + 1) % std::max(1L, static_cast<long>(cfg.n_iter) / 10) == 0)
                std::fprintf(stderr, "%s chain %d: %ld/%d iterations\n", to_string(kind), chain,
                             it + 1, cfg.n_iter);
        }
        for (const auto& [name, rate] : ch.accept_rates()) rate_sums[name] += rate;
    }
    for (auto& [name, sum] : rate_sums) sum /= cfg.n_chains;

    relabel_chains(draws);

    // Point estimates: entry-wise posterior mode for Z (empty columns fall
    // back to the best-supported mutation so the definition stays non-empty),
    // posterior mean for G renormalized to the model's constraint.
    const MatrixD z_mean = draws.z_mean();
    Matrix<std::uint8_t> z_mode = draws.z_mode();
    for (std::size_t j = 0; j < r; ++j) {
        bool empty = true;
        for (std::size_t i = 0; i < panel.n_mutations(); ++i) empty = empty && z_mode(i, j) == 0;
        if (!empty) continue;
        std::size_t best = 0;
        for (std::size_t i = 1; i < panel.n_mutations(); ++i)
            if (z_mean(i, j) > z_mean(best, j)) best = i;
        z_mode(best, j) = 1;
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < r; ++j) names.push_back(std::to_string(j + 1));

    MatrixD g_point = draws.g_mean();
    for (std::size_t t = 0; t < g_point.cols(); ++t) {
        double sum = 0.0;
        for (std::size_t j = 0; j < r; ++j) sum += g_point(j, t);
        if (constraint == ConstraintKind::SumEqOne) {
            require(sum > 0.0, "sampler: degenerate posterior mean column");
            for (std::size_t j = 0; j < r; ++j) g_point(j, t) /= sum;
        } else if (sum > 1.0) {
            for (std::size_t j = 0; j < r; ++j) g_point(j, t) /= sum;
        }
    }

    const WaicResult w = waic(draws.loglik_matrix());
    FitReport report{kind,
                     LineageDefinitionSet(names, z_mode, panel.mutations()),
                     AbundanceSeries(g_point, constraint, panel.dates(), names),
                     w.waic,
                     {}};
    report.config_echo["model"] = to_string(kind);
    report.config_echo["rank"] = std::to_string(r);
    report.config_echo["n_chains"] = std::to_string(cfg.n_chains);
    report.config_echo["n_iter"] = std::to_string(cfg.n_iter);
    report.config_echo["n_burnin"] = std::to_string(cfg.n_burnin);
    report.config_echo["thin"] = std::to_string(cfg.thin);
    report.config_echo["seed"] = std::to_string(cfg.seed);
    return BayesFit{std::move(draws), std::move(report), std::move(rate_sums)};
}

}  // namespace detail

namespace detail {
inline std::optional<SmartInitData> maybe_smart_init(const MutationPanel& panel, std::size_t r,
                                                     const SamplerConfig& cfg,
                                                     BayesOptions& opts) {
    if (!opts.smart_init) return std::nullopt;
    auto smart = make_smart_init(panel, r, cfg.seed);
    if (smart) opts.temper_fraction = 0.0;  // tempering would undo the init
    return smart;
}
}  // namespace detail

/// Binomial NMF: Z Bernoulli(0.5), G* columns Dirichlet(1), per-lineage
/// switches G^I Bernoulli(0.5); G = G* row-scaled by G^I, so column sums <= 1.
inline BayesFit bnmf_fit(const MutationPanel& panel, std::size_t r, const SamplerConfig& cfg,
                         BayesOptions opts = {}) {
    const auto smart = detail::maybe_smart_init(panel, r, cfg, opts);
    const detail::SmartInitData* sp = smart ? &*smart : nullptr;
    return detail::run_sampler(panel, r, cfg, opts, ModelKind::Bnmf, ConstraintKind::SumLEOne,
                               [&](int chain) {
                                   return detail::BnmfChain(panel, r, cfg, opts, chain, sp);
                               });
}

/// Spline-prior variant with column sums <= 1: uniform coefficients on (0,1),
/// per-lineage switches, deterministic G = fluffmax(basis x coefficients).
inline BayesFit tbnmf_le1_fit(const MutationPanel& panel, std::size_t r, const SplineBasis& basis,
                              const SamplerConfig& cfg, BayesOptions opts = {}) {
    const auto smart = detail::maybe_smart_init(panel, r, cfg, opts);
    const detail::SmartInitData* sp = smart ? &*smart : nullptr;
    return detail::run_sampler(
        panel, r, cfg, opts, ModelKind::TbnmfLe1, ConstraintKind::SumLEOne, [&](int chain) {
            return detail::TbnmfLe1Chain(panel, r, basis, cfg, opts, chain, sp);
        });
}

/// Spline-prior variant with exact simplex columns: exponential coefficients
/// with per-coefficient switches set the Dirichlet concentration of G.
inline BayesFit tbnmf_eq1_fit(const MutationPanel& panel, std::size_t r, const SplineBasis& basis,
                              const SamplerConfig& cfg, BayesOptions opts = {}) {
    const auto smart = detail::maybe_smart_init(panel, r, cfg, opts);
    const detail::SmartInitData* sp = smart ? &*smart : nullptr;
    return detail::run_sampler(
        panel, r, cfg, opts, ModelKind::TbnmfEq1, ConstraintKind::SumEqOne, [&](int chain) {
            return detail::TbnmfEq1Chain(panel, r, basis, cfg, opts, chain, sp);
        });
}

}  // namespace wwmix

#endif  // WWMIX_BAYES_MODELS_HPP_
