#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qsd/spectral.hpp"

namespace qsd {

// Row of taboo powers summed over n: partial[i] = sum_{n=1..n_used} HT^(n)_{origin,i}.
// All terms are nonnegative, so the partials are nondecreasing in n_used.
struct TabooSeriesResult {
    state_t origin = 0;
    std::vector<state_t> taboo;    // H, ascending
    std::vector<double> partial;   // over E
    long n_used = 0;
    bool converged = false;
    double tail_estimate = 0.0;    // geometric bound from the last two increments
    double last_increment = 0.0;   // sup-norm of the final added row
};

namespace detail {

inline std::vector<char> taboo_mask(state_t n, const std::vector<state_t>& h) {
    std::vector<char> in_h(static_cast<size_t>(n) + 1, 0);
    for (state_t s : h) in_h[static_cast<size_t>(s)] = 1;
    return in_h;
}

// geometric tail from the trailing increments; the two-step ratio first, since
// bipartite supports make consecutive sup norms oscillate
inline double geometric_tail(double last, double one_back, double two_back) {
    if (last <= 0.0) return 0.0;
    double r = 0.0;
    if (two_back > 0.0 && last < two_back)
        r = std::sqrt(last / two_back);
    else if (one_back > 0.0 && last < one_back)
        r = last / one_back;
    if (r > 0.0 && r < 1.0) return last * r / (1.0 - r);
    return std::numeric_limits<double>::infinity();
}

}  // namespace detail

// n-step taboo row ( HT^(n)_{j,i} )_{i in E}: paths j -> i of length n whose
// intermediate states avoid H. n = 0 follows the delta convention.
inline std::vector<double> taboo_power(const EmbeddedChain& t, const std::vector<state_t>& h, state_t j, long n) {
    const size_t dim = static_cast<size_t>(t.n);
    auto in_h = detail::taboo_mask(t.n, h);
    std::vector<double> row(dim, 0.0);
    if (n == 0) {
        if (!in_h[static_cast<size_t>(j)]) row[static_cast<size_t>(j) - 1] = 1.0;
        return row;
    }
    std::vector<double> cur(dim, 0.0), next(dim);
    cur[static_cast<size_t>(j) - 1] = 1.0;  // delta at the origin; first step is unrestricted
    for (long step = 1; step <= n; ++step) {
        if (step > 1)
            for (state_t s : h) cur[static_cast<size_t>(s) - 1] = 0.0;
        t.apply_left(cur, next);
        cur.swap(next);
    }
    return cur;
}

// Accumulated taboo series from one origin. Convergence is declared when the
// added row drops below tol in sup norm; otherwise the caller gets the partial
// sums as-is plus a geometric tail bound.
inline TabooSeriesResult taboo_series(const EmbeddedChain& t, const std::vector<state_t>& h, state_t j,
                                      double tol = 1e-12, long nmax = 1000000) {
    const size_t dim = static_cast<size_t>(t.n);
    auto in_h = detail::taboo_mask(t.n, h);
    TabooSeriesResult out;
    out.origin = j;
    out.taboo = h;
    std::sort(out.taboo.begin(), out.taboo.end());
    out.partial.assign(dim, 0.0);

    std::vector<double> cur(dim, 0.0), next(dim);
    cur[static_cast<size_t>(j) - 1] = 1.0;
    double back1 = 0.0, back2 = 0.0, back3 = 0.0;
    const long floor_terms = std::min<long>(nmax, static_cast<long>(dim));  // every state gets its leading term
    for (long n = 1; n <= nmax; ++n) {
        if (n > 1)
            for (state_t s : h) cur[static_cast<size_t>(s) - 1] = 0.0;
        t.apply_left(cur, next);
        cur.swap(next);
        double norm = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            out.partial[i] += cur[i];
            norm = std::max(norm, cur[i]);
        }
        out.n_used = (norm == 0.0) ? n - 1 : n;  // an exactly-zero row contributed nothing
        out.last_increment = norm;
        if (norm == 0.0 || (norm < tol && n >= floor_terms)) {
            out.converged = true;
            out.tail_estimate = detail::geometric_tail(norm, back1, back2);
            if (!std::isfinite(out.tail_estimate)) out.tail_estimate = 0.0;
            return out;
        }
        back3 = back2;
        back2 = back1;
        back1 = norm;
    }
    out.tail_estimate = detail::geometric_tail(out.last_increment, back2, back3);
    return out;
}

// Column variant: sums HT^(n) v over n for a vector v supported on H,
// giving sum_{j in H} sum_n HT^(n)_{i,j} v_j at every i.
inline TabooSeriesResult taboo_series_columns(const EmbeddedChain& t, const std::vector<state_t>& h,
                                              const std::vector<double>& v_on_h, double tol = 1e-12,
                                              long nmax = 1000000) {
    const size_t dim = static_cast<size_t>(t.n);
    TabooSeriesResult out;
    out.taboo = h;
    std::sort(out.taboo.begin(), out.taboo.end());
    out.partial.assign(dim, 0.0);

    std::vector<double> cur = v_on_h, next(dim);
    double back1 = 0.0, back2 = 0.0, back3 = 0.0;
    const long floor_terms = std::min<long>(nmax, static_cast<long>(dim));
    for (long n = 1; n <= nmax; ++n) {
        if (n > 1)
            for (state_t s : h) cur[static_cast<size_t>(s) - 1] = 0.0;
        t.apply_right(cur, next);
        cur.swap(next);
        double norm = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            out.partial[i] += cur[i];
            norm = std::max(norm, cur[i]);
        }
        out.n_used = (norm == 0.0) ? n - 1 : n;
        out.last_increment = norm;
        if (norm == 0.0 || (norm < tol && n >= floor_terms)) {
            out.converged = true;
            out.tail_estimate = detail::geometric_tail(norm, back1, back2);
            if (!std::isfinite(out.tail_estimate)) out.tail_estimate = 0.0;
            return out;
        }
        back3 = back2;
        back2 = back1;
        back1 = norm;
    }
    out.tail_estimate = detail::geometric_tail(out.last_increment, back2, back3);
    return out;
}

// Exit kernel T^H with its Perron pair. mu is the left stationary vector
// normalized to sum 1; v is the right vector with v = 1 at the smallest
// H-index. mass = sum_ij mu_i T^H_ij equals 1 exactly when the chain is
// lambda-recurrent (the mu-weighted return transform).
struct ExitStationary {
    std::vector<state_t> h;
    std::vector<double> kernel;  // |H| x |H| row-major
    std::vector<double> mu;
    std::vector<double> v;
    double perron_gap = 1.0;
    double mass = 0.0;
    bool series_converged = true;
    double tail_bound = 0.0;
    std::vector<TabooSeriesResult> origin_rows;  // per-origin series over all of E

    double kernel_at(size_t i, size_t j) const { return kernel[i * h.size() + j]; }
};

inline ExitStationary exit_kernel(const EmbeddedChain& t, const std::vector<state_t>& h_in, double tol = 1e-12,
                                  long nmax = 1000000) {
    if (h_in.empty()) raise(errc::empty_exit_set, "exit kernel needs a nonempty H");
    ExitStationary out;
    out.h = h_in;
    std::sort(out.h.begin(), out.h.end());
    const size_t m = out.h.size();
    out.kernel.assign(m * m, 0.0);
    out.origin_rows.reserve(m);
    for (size_t a = 0; a < m; ++a) {
        auto series = taboo_series(t, out.h, out.h[a], tol, nmax);
        out.series_converged = out.series_converged && series.converged;
        out.tail_bound = std::max(out.tail_bound, series.tail_estimate);
        for (size_t b = 0; b < m; ++b) out.kernel[a * m + b] = series.partial[static_cast<size_t>(out.h[b]) - 1];
        out.origin_rows.push_back(std::move(series));
    }

    if (m == 1) {
        out.mu = {1.0};
        out.v = {1.0};
        out.perron_gap = 1.0;
        out.mass = out.kernel[0];
        return out;
    }

    // Perron pair of the kernel; +I keeps periodic kernels convergent.
    auto apply_left = [&out, m](const std::vector<double>& x, std::vector<double>& y) {
        y.assign(m, 0.0);
        for (size_t i = 0; i < m; ++i) {
            y[i] += x[i];
            for (size_t j = 0; j < m; ++j) y[j] += x[i] * out.kernel[i * m + j];
        }
    };
    auto apply_right = [&out, m](const std::vector<double>& x, std::vector<double>& y) {
        y.assign(m, 0.0);
        for (size_t i = 0; i < m; ++i) {
            double acc = x[i];
            for (size_t j = 0; j < m; ++j) acc += out.kernel[i * m + j] * x[j];
            y[i] = acc;
        }
    };
    auto pl = linalg::power_iteration(apply_left, m, 1e-14, 200000);
    auto pr = linalg::power_iteration(apply_right, m, 1e-14, 200000);
    out.mu = pl.vec;
    double s = 0.0;
    for (double x : out.mu) s += x;
    for (double& x : out.mu) x /= s;
    out.v = pr.vec;
    if (const double v0 = out.v[0]; v0 != 0.0)
        for (double& x : out.v) x /= v0;
    out.perron_gap = std::max(0.0, std::min(1.0, (pl.upper > 0 ? (pl.upper - pl.lower) / pl.upper : 1.0)));
    out.perron_gap = 1.0 - out.perron_gap;  // 1 when the certified interval collapsed

    out.mass = 0.0;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < m; ++j) out.mass += out.mu[i] * out.kernel[i * m + j];
    return out;
}

// F_jj(lambda): the return-time transform at the shift baked into T, computed
// as the diagonal of the singleton taboo series.
struct ReturnTransform {
    double value = 0.0;
    bool converged = false;
    double tail_estimate = 0.0;
    long n_used = 0;
};

inline ReturnTransform return_transform(const EmbeddedChain& t, state_t j, double tol = 1e-12, long nmax = 1000000) {
    auto series = taboo_series(t, {j}, j, tol, nmax);
    ReturnTransform out;
    out.value = series.partial[static_cast<size_t>(j) - 1];
    out.converged = series.converged;
    out.tail_estimate = series.tail_estimate;
    out.n_used = series.n_used;
    return out;
}

}  // namespace qsd
