#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "qsd/errors.hpp"

namespace qsd::linalg {

// Row-major square matrix, just enough for the dense code paths (N <= ~800).
struct DenseMatrix {
    int n = 0;
    std::vector<double> a;

    explicit DenseMatrix(int size = 0) : n(size), a(static_cast<size_t>(size) * size, 0.0) {}
    double& at(int i, int j) { return a[static_cast<size_t>(i) * n + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * n + j]; }
};

// Leading-minor positivity of a Z-matrix via unpivoted elimination: positive
// pivots throughout means the matrix is a nonsingular M-matrix. Early exit on
// the first nonpositive pivot.
inline bool all_pivots_positive(DenseMatrix b) {
    const int n = b.n;
    for (int k = 0; k < n; ++k) {
        double piv = b.at(k, k);
        if (!(piv > 0.0) || !std::isfinite(piv)) return false;
        for (int i = k + 1; i < n; ++i) {
            double f = b.at(i, k) / piv;
            if (f == 0.0) continue;
            for (int j = k + 1; j < n; ++j) b.at(i, j) -= f * b.at(k, j);
        }
    }
    return true;
}

// Same test for a tridiagonal Z-matrix given as (sub, diag, super); O(n).
inline bool all_pivots_positive_tridiag(const std::vector<double>& sub, std::vector<double> diag,
                                        const std::vector<double>& super) {
    const size_t n = diag.size();
    for (size_t k = 0; k < n; ++k) {
        double piv = diag[k];
        if (!(piv > 0.0) || !std::isfinite(piv)) return false;
        if (k + 1 < n) diag[k + 1] -= super[k] * (sub[k] / piv);
    }
    return true;
}

// In-place LU with partial pivoting; returns row permutation. Near-singular
// input is fine (used for inverse iteration), exact singularity gets a tiny
// pivot substituted.
inline std::vector<int> lu_factor(DenseMatrix& m) {
    const int n = m.n;
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    for (int k = 0; k < n; ++k) {
        int pivot_row = k;
        double best = std::abs(m.at(k, k));
        for (int i = k + 1; i < n; ++i) {
            double v = std::abs(m.at(i, k));
            if (v > best) {
                best = v;
                pivot_row = i;
            }
        }
        if (pivot_row != k) {
            for (int j = 0; j < n; ++j) std::swap(m.at(k, j), m.at(pivot_row, j));
            std::swap(perm[static_cast<size_t>(k)], perm[static_cast<size_t>(pivot_row)]);
        }
        double piv = m.at(k, k);
        if (piv == 0.0) piv = m.at(k, k) = std::numeric_limits<double>::min() * 1e3;
        for (int i = k + 1; i < n; ++i) {
            double f = m.at(i, k) / piv;
            m.at(i, k) = f;
            if (f == 0.0) continue;
            for (int j = k + 1; j < n; ++j) m.at(i, j) -= f * m.at(k, j);
        }
    }
    return perm;
}

inline void lu_solve(const DenseMatrix& lu, const std::vector<int>& perm, std::vector<double>& x) {
    const int n = lu.n;
    std::vector<double> b(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) b[static_cast<size_t>(i)] = x[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) b[static_cast<size_t>(i)] -= lu.at(i, j) * b[static_cast<size_t>(j)];
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) b[static_cast<size_t>(i)] -= lu.at(i, j) * b[static_cast<size_t>(j)];
        b[static_cast<size_t>(i)] /= lu.at(i, i);
    }
    x = std::move(b);
}

// Tridiagonal solve with partial pivoting (two superdiagonals of fill).
// Arrays are sub[i] = a(i+1,i), diag[i] = a(i,i), super[i] = a(i,i+1).
inline void tridiag_solve(std::vector<double> sub, std::vector<double> diag, std::vector<double> super,
                          std::vector<double>& x) {
    const size_t n = diag.size();
    if (n == 0) return;
    std::vector<double> super2(n, 0.0);  // second superdiagonal created by row swaps
    std::vector<double>& b = x;
    for (size_t k = 0; k + 1 < n; ++k) {
        if (std::abs(sub[k]) > std::abs(diag[k])) {
            std::swap(diag[k], sub[k]);
            double t = super[k];
            super[k] = diag[k + 1];
            diag[k + 1] = t;
            if (k + 2 <= n - 1) {
                super2[k] = super[k + 1];
                super[k + 1] = 0.0;
            }
            std::swap(b[k], b[k + 1]);
        }
        double piv = diag[k];
        if (piv == 0.0) piv = diag[k] = std::numeric_limits<double>::min() * 1e3;
        double f = sub[k] / piv;
        diag[k + 1] -= f * super[k];
        if (k + 2 <= n - 1) super[k + 1] -= f * super2[k];
        b[k + 1] -= f * b[k];
    }
    if (diag[n - 1] == 0.0) diag[n - 1] = std::numeric_limits<double>::min() * 1e3;
    for (size_t ii = n; ii-- > 0;) {
        double v = b[ii];
        if (ii + 1 < n) v -= super[ii] * b[ii + 1];
        if (ii + 2 < n) v -= super2[ii] * b[ii + 2];
        b[ii] = v / diag[ii];
    }
}

struct PowerResult {
    double rho = 0.0;        // point estimate of the Perron root
    double lower = 0.0;      // certified Collatz-Wielandt bounds
    double upper = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> vec; // last iterate, l1-normalized
};

// Perron root of a nonnegative irreducible operator given by apply(x, y): y = A x.
// The caller is expected to shift the diagonal (A + I) beforehand when A may
// be periodic. All iterates stay positive, so the Collatz-Wielandt ratios
// give certified two-sided bounds at every step.
inline PowerResult power_iteration(const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply,
                                   size_t n, double tol, long max_iter,
                                   const std::vector<double>* start = nullptr) {
    PowerResult out;
    std::vector<double> v(n, 1.0 / static_cast<double>(n));
    if (start) v = *start;
    std::vector<double> w(n);
    out.lower = 0.0;
    out.upper = std::numeric_limits<double>::infinity();
    double prev_rho = std::numeric_limits<double>::quiet_NaN();
    double prev_delta = std::numeric_limits<double>::quiet_NaN();

    // Components below kFloor (relative to the l1-normalized iterate) are kept
    // out of the ratio bounds: they sit at the underflow frontier of the
    // Perron vector and their ratios are roundoff. Dropping them perturbs the
    // certified root by less than n * kFloor * max entry, which is nothing at
    // the tolerances in play. Growth is only flagged when a previously
    // negligible state gains real mass (a zero-padded start vector).
    constexpr double kFloor = 1e-250;
    constexpr double kGrowth = 1e-30;
    for (long it = 1; it <= max_iter; ++it) {
        apply(v, w);
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) sum += w[i];
        out.iterations = static_cast<int>(it);
        if (sum <= 0.0 || !std::isfinite(sum)) {  // zero operator (single-state chains)
            out.rho = out.lower = out.upper = 0.0;
            out.converged = true;
            out.vec = v;
            return out;
        }
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        double ray_num = 0.0, ray_den = 0.0;
        bool support_grew = false;
        for (size_t i = 0; i < n; ++i) {
            if (v[i] > kFloor) {
                double ratio = w[i] / v[i];
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            } else if (w[i] > kGrowth * sum) {
                support_grew = true;
            }
            ray_num += v[i] * w[i];
            ray_den += v[i] * v[i];
        }
        out.lower = std::max(out.lower, lo);
        if (!support_grew) out.upper = std::min(out.upper, hi);
        double rho = ray_num / ray_den;
        for (size_t i = 0; i < n; ++i) v[i] = w[i] / sum;

        // certified interval narrow enough?
        if (out.upper - out.lower <= tol * std::max(1.0, std::abs(out.upper))) {
            out.rho = 0.5 * (out.lower + out.upper);
            out.converged = true;
            out.vec = v;
            return out;
        }
        // geometric-tail stop on the Rayleigh sequence for slow spectral gaps
        if (std::isfinite(prev_rho)) {
            double delta = rho - prev_rho;
            if (std::isfinite(prev_delta) && prev_delta != 0.0) {
                double r = delta / prev_delta;
                if (r > 0.0 && r < 1.0) {
                    double tail = delta * r / (1.0 - r);
                    if (std::abs(tail) + std::abs(delta) <= tol * std::max(1.0, std::abs(rho)) && it > 8) {
                        out.rho = rho + tail;
                        if (out.rho < out.lower) out.rho = out.lower;
                        if (out.rho > out.upper) out.rho = out.upper;
                        out.converged = true;
                        out.vec = v;
                        return out;
                    }
                }
            }
            prev_delta = delta;
        }
        prev_rho = rho;
    }
    out.rho = std::isfinite(prev_rho) ? prev_rho : 0.5 * (out.lower + out.upper);
    out.vec = v;
    return out;
}

}  // namespace qsd::linalg
