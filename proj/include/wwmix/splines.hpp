#pragma once
#ifndef WWMIX_SPLINES_HPP_
#define WWMIX_SPLINES_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "wwmix/dates.hpp"
#include "wwmix/errors.hpp"
#include "wwmix/matrix.hpp"

namespace wwmix {

/// B-spline design matrix over the sampling dates.
///
/// Dates are mapped affinely onto [0,1] and evaluated against a clamped knot
/// vector: degree+1 repeated boundary knots at 0 and 1, uniform interior
/// knots. Rows are a partition of unity, so every basis value lies in [0,1]
/// and each coefficient vector in [0,1]^M yields a curve in [0,1].
struct SplineBasis {
    std::vector<double> times;  // T values in [0,1]
    int degree = 3;
    std::size_t n_basis = 10;   // M
    MatrixD matrix;             // T x M, entry (t, m) = b_m(times[t])
    std::vector<double> knots;

    std::size_t n_times() const { return times.size(); }
};

namespace detail {

inline std::vector<double> clamped_uniform_knots(std::size_t n_basis, int degree) {
    // Knot vector length M + degree + 1 with M - degree - 1 interior knots.
    const std::size_t m = n_basis;
    const std::size_t p = static_cast<std::size_t>(degree);
    std::vector<double> knots;
    knots.reserve(m + p + 1);
    for (std::size_t i = 0; i <= p; ++i) knots.push_back(0.0);
    const std::size_t n_interior = m - p - 1;
    for (std::size_t i = 1; i <= n_interior; ++i)
        knots.push_back(static_cast<double>(i) / static_cast<double>(n_interior + 1));
    for (std::size_t i = 0; i <= p; ++i) knots.push_back(1.0);
    return knots;
}

/// Iterative Cox-de Boor: all M basis values at one point. The right end of
/// the domain belongs to the last span so b_M(1) = 1.
inline std::vector<double> bspline_row(const std::vector<double>& knots, std::size_t n_basis,
                                       int degree, double u) {
    const std::size_t p = static_cast<std::size_t>(degree);
    std::vector<double> out(n_basis, 0.0);

    // Find the knot span [knots[k], knots[k+1]) containing u.
    std::size_t k = p;
    const std::size_t last = n_basis;  // index of the last domain knot boundary
    if (u >= knots[last]) {
        k = last - 1;
        while (k > p && knots[k] == knots[last]) --k;
    } else {
        while (k + 1 < last && u >= knots[k + 1]) ++k;
    }

    // Degree-0 seed, then raise degree in place (0/0 treated as 0).
    std::vector<double> n(p + 1, 0.0);
    n[0] = 1.0;
    for (std::size_t d = 1; d <= p; ++d) {
        double saved = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            const std::size_t left_idx = k - d + 1 + r;
            const double den = knots[left_idx + d] - knots[left_idx];
            const double term = den > 0.0 ? n[r] / den : 0.0;
            n[r] = saved + (knots[left_idx + d] - u) * term;
            saved = (u - knots[left_idx]) * term;
        }
        n[d] = saved;
    }
    for (std::size_t r = 0; r <= p; ++r) {
        const std::size_t idx = k - p + r;
        if (idx < n_basis) out[idx] = n[r];
    }
    return out;
}

}  // namespace detail

inline SplineBasis build_basis(const std::vector<double>& unit_times, std::size_t n_basis,
                               int degree = 3) {
    detail::require(degree >= 0, "build_basis: degree must be >= 0");
    detail::require(n_basis >= static_cast<std::size_t>(degree) + 1,
                    "build_basis: need at least degree+1 basis functions");
    detail::require(unit_times.size() >= n_basis,
                    "build_basis: need at least M time points (T=" +
                        std::to_string(unit_times.size()) + ", M=" + std::to_string(n_basis) + ")");
    for (std::size_t i = 1; i < unit_times.size(); ++i)
        detail::require(unit_times[i] > unit_times[i - 1],
                        "build_basis: duplicate or decreasing time point");
    detail::require(unit_times.front() >= 0.0 && unit_times.back() <= 1.0,
                    "build_basis: times must lie in [0,1]");

    SplineBasis basis;
    basis.times = unit_times;
    basis.degree = degree;
    basis.n_basis = n_basis;
    basis.knots = detail::clamped_uniform_knots(n_basis, degree);
    basis.matrix = MatrixD(unit_times.size(), n_basis);
    for (std::size_t t = 0; t < unit_times.size(); ++t) {
        auto row = detail::bspline_row(basis.knots, n_basis, degree, unit_times[t]);
        for (std::size_t m = 0; m < n_basis; ++m) basis.matrix(t, m) = row[m];
    }
    return basis;
}

inline SplineBasis build_basis(const std::vector<Date>& dates, std::size_t n_basis,
                               int degree = 3) {
    detail::require(strictly_increasing(dates), "build_basis: dates must strictly increase");
    return build_basis(unit_interval_times(dates), n_basis, degree);
}

/// Normalize a non-negative vector down to the <=1 budget: returned unchanged
/// if the entries already sum to at most one, otherwise divided by their sum
/// (making them sum to exactly one). Idempotent and ratio-preserving.
inline std::vector<double> fluffmax(const std::vector<double>& a) {
    double sum = 0.0;
    for (double v : a) {
        detail::require(v >= 0.0, "fluffmax: negative entry");
        sum += v;
    }
    if (sum <= 1.0) return a;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / sum;
    return out;
}

}  // namespace wwmix

#endif  // WWMIX_SPLINES_HPP_
