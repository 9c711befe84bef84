#pragma once
#ifndef WWMIX_MATRIX_HPP_
#define WWMIX_MATRIX_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wwmix/errors.hpp"

namespace wwmix {

/// Dense row-major matrix. Sized for panels of tens to hundreds of rows;
/// everything is by value and no expression tricks are attempted.
template <typename T>
class Matrix {
  public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_{rows}, cols_{cols}, data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<T>> init) {
        rows_ = init.size();
        cols_ = rows_ > 0 ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            detail::require_shape(row.size() == cols_, "Matrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    std::vector<T> row(std::size_t r) const {
        return std::vector<T>(data_.begin() + r * cols_, data_.begin() + (r + 1) * cols_);
    }

    std::vector<T> col(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    void set_col(std::size_t c, const std::vector<T>& v) {
        detail::require_shape(v.size() == rows_, "Matrix::set_col: length mismatch");
        for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
    }

    /// Result has this matrix's rows reordered by `perm` (new row r = old row perm[r]).
    Matrix permute_rows(const std::vector<std::size_t>& perm) const {
        detail::require_shape(perm.size() == rows_, "Matrix::permute_rows: bad permutation size");
        Matrix out(rows_, cols_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) = (*this)(perm[r], c);
        return out;
    }

    Matrix permute_cols(const std::vector<std::size_t>& perm) const {
        detail::require_shape(perm.size() == cols_, "Matrix::permute_cols: bad permutation size");
        Matrix out(rows_, cols_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) = (*this)(r, perm[c]);
        return out;
    }

    Matrix transposed() const {
        Matrix out(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
        return out;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using MatrixD = Matrix<double>;
using MatrixI = Matrix<int>;

/// Plain triple-loop product; operand sizes here never justify more.
inline MatrixD matmul(const MatrixD& a, const MatrixD& b) {
    detail::require_shape(a.cols() == b.rows(), "matmul: inner dimensions disagree (" +
                                                    std::to_string(a.cols()) + " vs " +
                                                    std::to_string(b.rows()) + ")");
    MatrixD out(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

inline double frobenius_sq(const MatrixD& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

inline double max_abs_diff(const MatrixD& a, const MatrixD& b) {
    detail::require_shape(a.same_shape(b), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.data()[i] - b.data()[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

/// Solve A x = b by Gaussian elimination with partial pivoting.  A is copied;
/// intended for the small (J ≤ tens) systems that appear in optimizer polish
/// steps.  Throws InvariantError on a (numerically) singular system.
inline std::vector<double> solve_linear(MatrixD a, std::vector<double> b) {
    detail::require_shape(a.rows() == a.cols() && a.rows() == b.size(),
                          "solve_linear: need square A matching b");
    const std::size_t n = a.rows();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(a(r, col));
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best))
            throw InvariantError("solve_linear: singular system");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= a(r, c) * x[c];
        x[r] = s / a(r, r);
    }
    return x;
}

namespace detail {

/// Best one-to-one assignment maximizing the total of score(left, right),
/// found by checking every permutation.  Returns (left index chosen for each
/// right index, total score).  Affordable up to ~9 columns.
inline std::pair<std::vector<std::size_t>, double> assignment_exhaustive(const MatrixD& score) {
    require_shape(score.rows() == score.cols() && score.rows() >= 1,
                  "assignment: need a non-empty square score matrix");
    const std::size_t n = score.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::size_t> best = perm;
    double best_total = -std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) total += score(perm[k], k);
        if (total > best_total) {
            best_total = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {best, best_total};
}

/// Hungarian algorithm in potentials form, maximizing the total score.
/// Same interface as assignment_exhaustive but O(n^3).
inline std::pair<std::vector<std::size_t>, double> assignment_hungarian(const MatrixD& score) {
    require_shape(score.rows() == score.cols() && score.rows() >= 1,
                  "assignment: need a non-empty square score matrix");
    const std::size_t n = score.rows();
    const double inf = std::numeric_limits<double>::infinity();
    // Minimize negated scores; p[j] = 1-based row assigned to 1-based column j.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> left_of_right(n, 0);
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
        left_of_right[j - 1] = p[j] - 1;
        total += score(p[j] - 1, j - 1);
    }
    return {left_of_right, total};
}

}  // namespace detail

}  // namespace wwmix

#endif  // WWMIX_MATRIX_HPP_
