#pragma once
#ifndef WWMIX_CORE_HPP_
#define WWMIX_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wwmix/dates.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"

namespace wwmix {

/// Probability clamp guarding log(0): identity-link models legitimately reach
/// the [0,1] boundary, so likelihood code evaluates at clamp(p, eps, 1-eps).
constexpr double kProbClampEps = 1e-9;

/// Tolerance for proportion-sum constraint checks (absorbs accumulated
/// floating-point error in column sums).
constexpr double kProportionTol = 1e-9;

/// Aligned mutation count/depth time series for one site.
///
/// counts(i,t) is how often mutation i was seen on date t, depths(i,t) how
/// often its position was covered. The grid is complete: depths >= 1
/// everywhere and counts <= depths cell-wise.
class MutationPanel {
  public:
    MutationPanel(std::vector<std::string> mutations, std::vector<Date> dates, MatrixI counts,
                  MatrixI depths, std::string site = "")
        : mutations_{std::move(mutations)},
          dates_{std::move(dates)},
          counts_{std::move(counts)},
          depths_{std::move(depths)},
          site_{std::move(site)} {
        detail::require_shape(counts_.rows() == mutations_.size() &&
                                  counts_.cols() == dates_.size() && counts_.same_shape(depths_),
                              "MutationPanel: counts/depths must both be N x T");
        detail::require(strictly_increasing(dates_), "MutationPanel: dates must strictly increase");
        std::set<std::string> seen(mutations_.begin(), mutations_.end());
        detail::require(seen.size() == mutations_.size(),
                        "MutationPanel: duplicate mutation label");
        for (std::size_t i = 0; i < counts_.rows(); ++i) {
            for (std::size_t t = 0; t < counts_.cols(); ++t) {
                detail::require(depths_(i, t) >= 1, "MutationPanel: depth < 1 at " +
                                                        mutations_[i] + ", " + dates_[t].iso());
                detail::require(counts_(i, t) >= 0 && counts_(i, t) <= depths_(i, t),
                                "MutationPanel: count outside [0, depth] at " + mutations_[i] +
                                    ", " + dates_[t].iso());
            }
        }
    }

    std::size_t n_mutations() const { return mutations_.size(); }
    std::size_t n_dates() const { return dates_.size(); }
    const std::vector<std::string>& mutations() const { return mutations_; }
    const std::vector<Date>& dates() const { return dates_; }
    const MatrixI& counts() const { return counts_; }
    const MatrixI& depths() const { return depths_; }
    const std::string& site() const { return site_; }

  private:
    std::vector<std::string> mutations_;
    std::vector<Date> dates_;
    MatrixI counts_;
    MatrixI depths_;
    std::string site_;
};

/// Named binary mutation-membership matrix: one column per lineage, one row
/// per mutation of the shared vocabulary. A lineage with no mutations is
/// rejected at construction.
class LineageDefinitionSet {
  public:
    LineageDefinitionSet(std::vector<std::string> names, Matrix<std::uint8_t> membership,
                         std::vector<std::string> mutation_universe)
        : names_{std::move(names)},
          membership_{std::move(membership)},
          universe_{std::move(mutation_universe)} {
        detail::require_shape(membership_.rows() == universe_.size() &&
                                  membership_.cols() == names_.size(),
                              "LineageDefinitionSet: membership must be N x J");
        for (auto v : membership_.data())
            detail::require(v == 0 || v == 1, "LineageDefinitionSet: entries must be 0 or 1");
        for (std::size_t j = 0; j < names_.size(); ++j) {
            bool any = false;
            for (std::size_t i = 0; i < universe_.size(); ++i) any = any || membership_(i, j) != 0;
            detail::require(any, "LineageDefinitionSet: lineage '" + names_[j] +
                                     "' has no mutations");
        }
    }

    static LineageDefinitionSet from_sets(const std::map<std::string, std::set<std::string>>& defs,
                                          const std::vector<std::string>& universe) {
        Matrix<std::uint8_t> z(universe.size(), defs.size(), 0);
        std::vector<std::string> names;
        names.reserve(defs.size());
        std::size_t j = 0;
        for (const auto& [name, muts] : defs) {
            names.push_back(name);
            for (std::size_t i = 0; i < universe.size(); ++i)
                if (muts.count(universe[i])) z(i, j) = 1;
            ++j;
        }
        return LineageDefinitionSet(std::move(names), std::move(z), universe);
    }

    std::size_t n_lineages() const { return names_.size(); }
    std::size_t n_mutations() const { return universe_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const Matrix<std::uint8_t>& membership() const { return membership_; }
    const std::vector<std::string>& mutation_universe() const { return universe_; }

    std::set<std::string> mutation_set(std::size_t j) const {
        std::set<std::string> out;
        for (std::size_t i = 0; i < universe_.size(); ++i)
            if (membership_(i, j)) out.insert(universe_[i]);
        return out;
    }

    LineageDefinitionSet reorder(const std::vector<std::size_t>& column_perm) const {
        std::vector<std::string> names(names_.size());
        for (std::size_t j = 0; j < names_.size(); ++j) names[j] = names_[column_perm[j]];
        return LineageDefinitionSet(std::move(names), membership_.permute_cols(column_perm),
                                    universe_);
    }

  private:
    std::vector<std::string> names_;
    Matrix<std::uint8_t> membership_;
    std::vector<std::string> universe_;
};

enum class ConstraintKind {
    SumLEOne,  // column sums <= 1; room left for lineages not in the model
    SumEqOne,  // column sums == 1; the model accounts for everything present
};

inline const char* to_string(ConstraintKind k) {
    return k == ConstraintKind::SumLEOne ? "sum_le_one" : "sum_eq_one";
}

/// Per-lineage proportion trajectories, J rows x T dates, column-constrained
/// according to `constraint_kind`.
class AbundanceSeries {
  public:
    AbundanceSeries(MatrixD values, ConstraintKind kind, std::vector<Date> dates,
                    std::vector<std::string> lineage_names = {})
        : values_{std::move(values)}, kind_{kind}, dates_{std::move(dates)},
          names_{std::move(lineage_names)} {
        detail::require_shape(values_.cols() == dates_.size(),
                              "AbundanceSeries: one column per date required");
        if (names_.empty()) {
            for (std::size_t j = 0; j < values_.rows(); ++j)
                names_.push_back("lineage_" + std::to_string(j + 1));
        }
        detail::require_shape(names_.size() == values_.rows(),
                              "AbundanceSeries: one name per row required");
        for (std::size_t t = 0; t < values_.cols(); ++t) {
            double sum = 0.0;
            for (std::size_t j = 0; j < values_.rows(); ++j) {
                const double v = values_(j, t);
                detail::require(v >= -kProportionTol && v <= 1.0 + kProportionTol,
                                "AbundanceSeries: proportion outside [0,1] at column " +
                                    std::to_string(t));
                sum += v;
            }
            if (kind_ == ConstraintKind::SumLEOne) {
                detail::require(sum <= 1.0 + kProportionTol,
                                "AbundanceSeries: column " + std::to_string(t) +
                                    " sums to " + std::to_string(sum) + " > 1");
            } else {
                detail::require(std::abs(sum - 1.0) <= kProportionTol,
                                "AbundanceSeries: column " + std::to_string(t) +
                                    " sums to " + std::to_string(sum) + " != 1");
            }
        }
    }

    std::size_t n_lineages() const { return values_.rows(); }
    std::size_t n_dates() const { return dates_.size(); }
    const MatrixD& values() const { return values_; }
    ConstraintKind constraint_kind() const { return kind_; }
    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<std::string>& lineage_names() const { return names_; }

  private:
    MatrixD values_;
    ConstraintKind kind_;
    std::vector<Date> dates_;
    std::vector<std::string> names_;
};

/// One stored MCMC sample.
struct Draw {
    Matrix<std::uint8_t> z;           // N x R binary
    MatrixD g;                        // R x T proportions
    MatrixD phi;                      // spline coefficients, empty when not applicable
    std::vector<std::uint8_t> g_ind;  // per-lineage switches, empty when not applicable
    Matrix<std::uint8_t> phi_ind;     // per-coefficient switches, empty when not applicable
    std::vector<double> loglik_cells; // per-cell log-likelihood, length N*T
    int chain = 0;
};

/// Stored posterior samples across chains, with per-cell log-likelihoods kept
/// for WAIC. Appending validates the draw against `constraint_kind`.
class PosteriorDraws {
  public:
    PosteriorDraws(std::size_t n_mutations, std::size_t n_lineages, std::size_t n_dates,
                   ConstraintKind kind)
        : n_{n_mutations}, r_{n_lineages}, t_{n_dates}, kind_{kind} {}

    void append(Draw draw) {
        detail::require_shape(draw.z.rows() == n_ && draw.z.cols() == r_,
                              "PosteriorDraws: z draw must be N x R");
        detail::require_shape(draw.g.rows() == r_ && draw.g.cols() == t_,
                              "PosteriorDraws: g draw must be R x T");
        detail::require_shape(draw.loglik_cells.size() == n_ * t_,
                              "PosteriorDraws: loglik must have N*T cells");
        for (auto v : draw.z.data())
            detail::require(v == 0 || v == 1, "PosteriorDraws: non-binary z entry");
        for (std::size_t t = 0; t < t_; ++t) {
            double sum = 0.0;
            for (std::size_t j = 0; j < r_; ++j) sum += draw.g(j, t);
            if (kind_ == ConstraintKind::SumLEOne)
                detail::require(sum <= 1.0 + kProportionTol,
                                "PosteriorDraws: g column sum > 1");
            else
                detail::require(std::abs(sum - 1.0) <= kProportionTol,
                                "PosteriorDraws: g column sum != 1");
        }
        for (double v : draw.loglik_cells)
            detail::require(std::isfinite(v), "PosteriorDraws: non-finite log-likelihood cell");
        draws_.push_back(std::move(draw));
    }

    std::size_t size() const { return draws_.size(); }
    const Draw& operator[](std::size_t s) const { return draws_[s]; }
    const std::vector<Draw>& draws() const { return draws_; }
    std::vector<Draw>& draws() { return draws_; }

    std::size_t n_mutations() const { return n_; }
    std::size_t n_lineages() const { return r_; }
    std::size_t n_dates() const { return t_; }
    ConstraintKind constraint_kind() const { return kind_; }

    /// S x (N*T) matrix of per-cell log-likelihoods in draw order.
    MatrixD loglik_matrix() const {
        MatrixD out(draws_.size(), n_ * t_);
        for (std::size_t s = 0; s < draws_.size(); ++s)
            for (std::size_t k = 0; k < n_ * t_; ++k) out(s, k) = draws_[s].loglik_cells[k];
        return out;
    }

    /// Entry-wise posterior mean of Z.
    MatrixD z_mean() const {
        MatrixD out(n_, r_, 0.0);
        for (const auto& d : draws_)
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = 0; j < r_; ++j) out(i, j) += d.z(i, j);
        for (auto& v : out.data()) v /= static_cast<double>(draws_.size());
        return out;
    }

    /// Entry-wise posterior mode of Z (mean > 0.5).
    Matrix<std::uint8_t> z_mode() const {
        MatrixD mean = z_mean();
        Matrix<std::uint8_t> out(n_, r_, 0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < r_; ++j) out(i, j) = mean(i, j) > 0.5 ? 1 : 0;
        return out;
    }

    MatrixD g_mean() const {
        MatrixD out(r_, t_, 0.0);
        for (const auto& d : draws_)
            for (std::size_t j = 0; j < r_; ++j)
                for (std::size_t t = 0; t < t_; ++t) out(j, t) += d.g(j, t);
        for (auto& v : out.data()) v /= static_cast<double>(draws_.size());
        return out;
    }

  private:
    std::size_t n_;
    std::size_t r_;
    std::size_t t_;
    ConstraintKind kind_;
    std::vector<Draw> draws_;
};

enum class ModelKind { Provoc, Nmf, Bnmf, TbnmfLe1, TbnmfEq1 };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Provoc: return "provoc";
        case ModelKind::Nmf: return "nmf";
        case ModelKind::Bnmf: return "bnmf";
        case ModelKind::TbnmfLe1: return "tbnmf_le1";
        case ModelKind::TbnmfEq1: return "tbnmf_eq1";
    }
    return "unknown";
}

/// Point estimates plus diagnostics for one fitted model.
struct FitReport {
    ModelKind model_kind;
    LineageDefinitionSet point_definitions;
    AbundanceSeries point_abundance;
    double waic = std::numeric_limits<double>::quiet_NaN();  // NaN for non-Bayesian fits
    std::map<std::string, std::string> config_echo;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Entry-wise count/depth ratios, each in [0,1].
inline MatrixD frequency_matrix(const MutationPanel& panel) {
    MatrixD out(panel.n_mutations(), panel.n_dates());
    for (std::size_t i = 0; i < panel.n_mutations(); ++i)
        for (std::size_t t = 0; t < panel.n_dates(); ++t)
            out(i, t) = static_cast<double>(panel.counts()(i, t)) /
                        static_cast<double>(panel.depths()(i, t));
    return out;
}

/// Log-likelihood of one binomial cell with the probability clamped away from
/// {0,1}. The binomial coefficient log C(D,c) is omitted throughout the
/// library: it is constant in all parameters, so MLE locations, MCMC
/// acceptance ratios, and WAIC differences within a fixed dataset are
/// unaffected.
inline double binomial_cell_loglik(int count, int depth, double prob,
                                   double clamp_eps = kProbClampEps) {
    double p = prob;
    if (p < clamp_eps) p = clamp_eps;
    if (p > 1.0 - clamp_eps) p = 1.0 - clamp_eps;
    double ll = 0.0;
    if (count > 0) ll += count * std::log(p);
    if (depth - count > 0) ll += (depth - count) * std::log1p(-p);
    return ll;
}

/// Total binomial log-likelihood of a panel under cell-wise probabilities.
/// The combinatorial constant is omitted (see binomial_cell_loglik).
inline double binomial_loglik(const MutationPanel& panel, const MatrixD& probs,
                              double clamp_eps = kProbClampEps) {
    detail::require_shape(probs.rows() == panel.n_mutations() && probs.cols() == panel.n_dates(),
                          "binomial_loglik: probs must be N x T");
    detail::require(clamp_eps > 0.0 && clamp_eps < 0.5,
                    "binomial_loglik: clamp_eps must lie in (0, 0.5)");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t t = 0; t < probs.cols(); ++t)
            total += binomial_cell_loglik(panel.counts()(i, t), panel.depths()(i, t), probs(i, t),
                                          clamp_eps);
    return total;
}

}  // namespace wwmix

#endif  // WWMIX_CORE_HPP_
