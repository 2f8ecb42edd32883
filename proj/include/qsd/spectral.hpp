#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "qsd/linalg.hpp"
#include "qsd/model.hpp"

namespace qsd {

// Embedded chain T(x): T_ij = q_ij / (q_i - x) off-diagonal, zero diagonal,
// defined for 0 <= x < min_i q_i. Stored CSR over E.
struct EmbeddedChain {
    const GeneratorModel* base = nullptr;
    double shift = 0.0;
    state_t n = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<state_t> col;
    std::vector<double> val;

    // y = v T (left action on row vectors / measures)
    void apply_left(const std::vector<double>& v, std::vector<double>& y) const {
        y.assign(static_cast<size_t>(n), 0.0);
        for (state_t i = 1; i <= n; ++i) {
            double vi = v[static_cast<size_t>(i) - 1];
            if (vi == 0.0) continue;
            for (std::size_t k = row_ptr[static_cast<size_t>(i) - 1]; k < row_ptr[static_cast<size_t>(i)]; ++k)
                y[static_cast<size_t>(col[k]) - 1] += vi * val[k];
        }
    }

    // y = T v (right action on column vectors / functions)
    void apply_right(const std::vector<double>& v, std::vector<double>& y) const {
        y.assign(static_cast<size_t>(n), 0.0);
        for (state_t i = 1; i <= n; ++i) {
            double acc = 0.0;
            for (std::size_t k = row_ptr[static_cast<size_t>(i) - 1]; k < row_ptr[static_cast<size_t>(i)]; ++k)
                acc += val[k] * v[static_cast<size_t>(col[k]) - 1];
            y[static_cast<size_t>(i) - 1] = acc;
        }
    }

    double entry(state_t i, state_t j) const {
        for (std::size_t k = row_ptr[static_cast<size_t>(i) - 1]; k < row_ptr[static_cast<size_t>(i)]; ++k)
            if (col[k] == j) return val[k];
        return 0.0;
    }
};

inline EmbeddedChain embedded_chain(const GeneratorModel& model, double x) {
    if (x < 0.0) raise(errc::invalid_argument, "shift must be nonnegative");
    if (!(x < model.min_total_rate()))
        raise(errc::shift_at_or_above_min_rate,
              "shift " + std::to_string(x) + " >= min total rate " + std::to_string(model.min_total_rate()));
    EmbeddedChain t;
    t.base = &model;
    t.shift = x;
    t.n = model.size();
    t.row_ptr.resize(static_cast<size_t>(t.n) + 1, 0);
    t.col.reserve(model.entry_count());
    t.val.reserve(model.entry_count());
    for (state_t i = 1; i <= t.n; ++i) {
        const double denom = model.total_rate(i) - x;
        for (const auto& e : model.row(i)) {
            t.col.push_back(e.target);
            t.val.push_back(e.rate / denom);
        }
        t.row_ptr[static_cast<size_t>(i)] = t.col.size();
    }
    return t;
}

struct SpectralRadiusResult {
    double rho = 0.0;
    double lower = 0.0;   // certified bounds from the Collatz-Wielandt ratios
    double upper = 0.0;
    int iterations = 0;
    std::vector<double> left_vector;  // l1-normalized left Perron iterate
};

// Perron root of T by power iteration from the uniform positive vector.
// Internally iterates on T + I so periodic supports (pure cycles, bipartite
// birth-death kernels) still converge.
inline SpectralRadiusResult spectral_radius(const EmbeddedChain& t, double tol = 1e-12, long max_iter = 2000000) {
    SpectralRadiusResult out;
    const size_t n = static_cast<size_t>(t.n);
    if (n == 1) {  // T is the 1x1 zero matrix
        out.rho = out.lower = out.upper = 0.0;
        out.left_vector = {1.0};
        out.iterations = 0;
        return out;
    }
    auto apply = [&t](const std::vector<double>& v, std::vector<double>& y) {
        t.apply_left(v, y);
        for (size_t i = 0; i < v.size(); ++i) y[i] += v[i];
    };
    auto pr = linalg::power_iteration(apply, n, tol, max_iter);
    if (!pr.converged)
        raise(errc::no_convergence, "spectral radius did not converge in " + std::to_string(max_iter) + " iterations");
    out.rho = pr.rho - 1.0;
    out.lower = pr.lower - 1.0;
    out.upper = pr.upper - 1.0;
    out.iterations = pr.iterations;
    out.left_vector = std::move(pr.vec);
    return out;
}

namespace detail {

// Decide sign(rho(T) - 1) with certified bounds; 0 means "equal within at_tol".
inline int rho_versus_one(const EmbeddedChain& t, double at_tol, long max_iter) {
    const size_t n = static_cast<size_t>(t.n);
    if (n == 1) return -1;
    std::vector<double> v(n, 1.0 / static_cast<double>(n)), w(n);
    double lower = 0.0, upper = std::numeric_limits<double>::infinity();
    constexpr double kFloor = 1e-250;   // see linalg::power_iteration
    constexpr double kGrowth = 1e-30;
    for (long it = 1; it <= max_iter; ++it) {
        t.apply_left(v, w);
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            w[i] += v[i];  // T + I
            sum += w[i];
        }
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        bool support_grew = false;
        for (size_t i = 0; i < n; ++i) {
            if (v[i] > kFloor) {
                double ratio = w[i] / v[i];
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            } else if (w[i] > kGrowth * sum) {
                support_grew = true;
            }
        }
        lower = std::max(lower, lo - 1.0);
        if (!support_grew) upper = std::min(upper, hi - 1.0);
        if (lower > 1.0) return 1;
        if (upper < 1.0) return -1;
        if (upper - lower <= at_tol) return 0;
        for (size_t i = 0; i < n; ++i) v[i] = w[i] / sum;
    }
    raise(errc::no_convergence, "rho comparison undecided after " + std::to_string(max_iter) + " iterations");
}

// sigma*I - Q_E is a nonsingular M-matrix  <=>  sigma > alpha = -lambda.
inline bool m_matrix_at(const GeneratorModel& m, double sigma) {
    const state_t n = m.size();
    if (m.bandwidth() <= 1) {
        std::vector<double> sub(static_cast<size_t>(n) - 1, 0.0), diag(static_cast<size_t>(n)),
            super(static_cast<size_t>(n) - 1, 0.0);
        for (state_t i = 1; i <= n; ++i) {
            diag[static_cast<size_t>(i) - 1] = sigma + m.total_rate(i);
            for (const auto& e : m.row(i)) {
                if (e.target == i + 1) super[static_cast<size_t>(i) - 1] = -e.rate;
                if (e.target == i - 1) sub[static_cast<size_t>(i) - 2] = -e.rate;
            }
        }
        return linalg::all_pivots_positive_tridiag(sub, std::move(diag), super);
    }
    linalg::DenseMatrix b(n);
    for (state_t i = 1; i <= n; ++i) {
        b.at(i - 1, i - 1) = sigma + m.total_rate(i);
        for (const auto& e : m.row(i)) b.at(i - 1, e.target - 1) = -e.rate;
    }
    return linalg::all_pivots_positive(std::move(b));
}

// Largest real eigenvalue of the sub-generator by bisection on the M-matrix
// pivot test; certified to atol.
inline std::pair<double, double> perron_alpha_by_pivots(const GeneratorModel& m, double atol, long max_iter) {
    double lo = -m.min_total_rate();   // predicate false here (alpha >= -min q)
    double hi = atol;                  // predicate true here (alpha <= 0 < hi)
    if (m.size() > 1 && m.bandwidth() > 1) {
        // cheap pre-bracket from Collatz-Wielandt bounds on Q_E + sI
        const double s = m.max_total_rate() + 1.0;
        auto apply = [&m, s](const std::vector<double>& v, std::vector<double>& y) {
            y.assign(v.size(), 0.0);
            for (state_t i = 1; i <= m.size(); ++i) {
                double vi = v[static_cast<size_t>(i) - 1];
                y[static_cast<size_t>(i) - 1] += vi * (s - m.total_rate(i));
                if (vi == 0.0) continue;
                for (const auto& e : m.row(i)) y[static_cast<size_t>(e.target) - 1] += vi * e.rate;
            }
        };
        auto pr = linalg::power_iteration(apply, static_cast<size_t>(m.size()), 1e-8, std::min<long>(max_iter, 5000));
        lo = std::max(lo, pr.lower - s);
        hi = std::min(hi, pr.upper - s + atol);
        if (hi < lo) hi = lo + atol;
    }
    while (hi - lo > atol) {
        double mid = 0.5 * (lo + hi);
        if (m_matrix_at(m, mid))
            hi = mid;
        else
            lo = mid;
    }
    return {0.5 * (lo + hi), hi - lo};
}

}  // namespace detail

enum class DecayMethod { automatic, finite_eigen, bisection_on_r, closed_form };

inline const char* decay_method_name(DecayMethod m) {
    switch (m) {
        case DecayMethod::automatic: return "auto";
        case DecayMethod::finite_eigen: return "finite_eigen";
        case DecayMethod::bisection_on_r: return "bisection_on_r";
        case DecayMethod::closed_form: return "closed_form";
    }
    return "?";
}

struct DecayOptions {
    DecayMethod method = DecayMethod::automatic;
    double tol = 1e-10;
    long max_iter = 2000000;
    std::vector<state_t> truncation_schedule;  // family models only: levels to sweep
    int dense_threshold = 800;
    bool extrapolate = true;
};

struct DecayResult {
    double lambda = 0.0;
    DecayMethod method = DecayMethod::finite_eigen;
    double bracket = 0.0;  // width of the final certified interval
    std::vector<std::pair<state_t, double>> truncation_curve;
    bool boundary_fallback = false;  // bisection_on_r hit the min-rate boundary
    bool extrapolated = false;       // lambda refined from the truncation curve
};

inline ModelFamilySpec family_spec_from_meta(const TruncationMeta& meta) {
    ModelFamilySpec spec{};
    if (meta.family == "feedback-chain") {
        spec.family = ModelFamily::feedback_chain;
        spec.p = meta.params.at(0);
        spec.r = meta.params.at(1);
        spec.w = meta.params.at(2);
    } else if (meta.family == "bd-line") {
        spec.family = ModelFamily::bd_line;
        spec.p = meta.params.at(0);
        spec.c = meta.params.at(1);
    } else if (meta.family == "bd-halfline") {
        spec.family = ModelFamily::bd_halfline;
        spec.p = meta.params.at(0);
        spec.c = meta.params.at(1);
    } else {
        raise(errc::bad_parameters, "model does not carry a builtin family tag");
    }
    spec.level = meta.level;
    return spec;
}

inline DecayResult decay_parameter(const GeneratorModel& model, DecayOptions opts = {});

namespace detail {

inline DecayResult decay_finite_eigen(const GeneratorModel& model, const DecayOptions& opts) {
    DecayResult out;
    out.method = DecayMethod::finite_eigen;
    if (model.size() == 1) {
        out.lambda = model.total_rate(1);
        out.bracket = 0.0;
        return out;
    }
    if (model.bandwidth() <= 1 || model.size() <= opts.dense_threshold) {
        const double atol = std::max(opts.tol * 1e-2, 32.0 * std::numeric_limits<double>::epsilon() *
                                                          std::max(1.0, model.max_total_rate()));
        auto [alpha, width] = perron_alpha_by_pivots(model, atol, opts.max_iter);
        out.lambda = std::clamp(-alpha, 0.0, model.min_total_rate());
        out.bracket = width;
        return out;
    }
    // large non-banded models: shifted power iteration, lambda = s - rho
    const double s = model.max_total_rate() + 1.0;
    auto apply = [&model, s](const std::vector<double>& v, std::vector<double>& y) {
        y.assign(v.size(), 0.0);
        for (state_t i = 1; i <= model.size(); ++i) {
            double vi = v[static_cast<size_t>(i) - 1];
            y[static_cast<size_t>(i) - 1] += vi * (s - model.total_rate(i));
            if (vi == 0.0) continue;
            for (const auto& e : model.row(i)) y[static_cast<size_t>(e.target) - 1] += vi * e.rate;
        }
    };
    auto pr = linalg::power_iteration(apply, static_cast<size_t>(model.size()), opts.tol, opts.max_iter);
    if (!pr.converged)
        raise(errc::no_convergence, "finite_eigen power iteration did not converge");
    out.lambda = std::clamp(s - pr.rho, 0.0, model.min_total_rate());
    out.bracket = std::max(0.0, pr.upper - pr.lower);
    return out;
}

inline DecayResult decay_bisection_on_r(const GeneratorModel& model, const DecayOptions& opts) {
    DecayResult out;
    out.method = DecayMethod::bisection_on_r;
    const double qmin = model.min_total_rate();
    if (model.size() == 1) {  // T is identically zero; the root sits at the boundary
        out = decay_finite_eigen(model, opts);
        out.boundary_fallback = true;
        return out;
    }
    const double at_tol = std::max(1e-13, opts.tol * 0.1);
    double lo = 0.0;
    double hi = (1.0 - 1e-9) * qmin;
    int d0 = rho_versus_one(embedded_chain(model, lo), at_tol, opts.max_iter);
    if (d0 >= 0) {  // conservative model: rho(T(0)) = 1, lambda = 0
        out.lambda = 0.0;
        out.bracket = 0.0;
        return out;
    }
    int dh = rho_versus_one(embedded_chain(model, hi), at_tol, opts.max_iter);
    if (dh < 0) {  // root is pinched against min q_i where T(x) is undefined
        out = decay_finite_eigen(model, opts);
        out.boundary_fallback = true;
        return out;
    }
    while (hi - lo > opts.tol) {
        double mid = 0.5 * (lo + hi);
        int d = rho_versus_one(embedded_chain(model, mid), at_tol, opts.max_iter);
        if (d == 0) {
            lo = hi = mid;
            break;
        }
        if (d > 0)
            hi = mid;
        else
            lo = mid;
    }
    out.lambda = 0.5 * (lo + hi);
    out.bracket = hi - lo;
    return out;
}

}  // namespace detail

inline DecayResult decay_parameter(const GeneratorModel& model, DecayOptions opts) {
    if (!opts.truncation_schedule.empty()) {
        if (!model.truncation() || model.truncation()->family.empty())
            raise(errc::bad_parameters, "truncation_schedule needs a builtin-family model");
        auto spec = family_spec_from_meta(*model.truncation());
        auto schedule = opts.truncation_schedule;
        std::sort(schedule.begin(), schedule.end());
        schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());

        DecayResult out;
        DecayOptions sub = opts;
        sub.truncation_schedule.clear();
        for (state_t level : schedule) {
            if (level < 2) continue;
            ModelFamilySpec s = spec;
            s.level = level;
            DecayResult r = decay_parameter(make_family(s), sub);
            out.truncation_curve.emplace_back(level, r.lambda);
            out.lambda = r.lambda;
            out.method = r.method;
            out.bracket = r.bracket;
            out.boundary_fallback = r.boundary_fallback;
        }
        if (out.truncation_curve.empty()) raise(errc::bad_parameters, "empty truncation schedule");
        // Richardson step assuming lambda_N ~ lambda + K/N^2; exact families
        // (exponentially converged curves) are unaffected.
        if (opts.extrapolate && out.truncation_curve.size() >= 2) {
            auto [n2, l2] = out.truncation_curve.back();
            auto [n1, l1] = out.truncation_curve[out.truncation_curve.size() - 2];
            double ratio = static_cast<double>(n2) / static_cast<double>(n1);
            double denom = ratio * ratio - 1.0;
            if (denom > 0.0 && l1 >= l2) {
                out.lambda = std::max(0.0, l2 - (l1 - l2) / denom);
                out.extrapolated = true;
            }
        }
        return out;
    }

    switch (opts.method) {
        case DecayMethod::closed_form: {
            if (!model.truncation() || model.truncation()->family.empty())
                raise(errc::bad_parameters, "closed_form needs a builtin-family model");
            DecayResult out;
            out.method = DecayMethod::closed_form;
            out.lambda = family_spec_from_meta(*model.truncation()).closed_form_lambda();
            return out;
        }
        case DecayMethod::finite_eigen:
            return detail::decay_finite_eigen(model, opts);
        case DecayMethod::bisection_on_r:
            return detail::decay_bisection_on_r(model, opts);
        case DecayMethod::automatic:
        default:
            if (model.size() == 1 || model.bandwidth() <= 1 || model.size() <= opts.dense_threshold)
                return detail::decay_finite_eigen(model, opts);
            return detail::decay_bisection_on_r(model, opts);
    }
}

// Positive left eigenvector of the sub-generator at -lambda (l1-normalized),
// by inverse iteration at the certified shift.
inline std::vector<double> perron_left_vector(const GeneratorModel& model, double lambda, int refinements = 2) {
    const state_t n = model.size();
    std::vector<double> u(static_cast<size_t>(n), 1.0 / n);
    if (n == 1) return u;

    auto normalize = [&u]() {
        double s = 0.0;
        for (double x : u) s += std::abs(x);
        for (double& x : u) x /= s;
    };

    if (model.bandwidth() <= 1) {
        // M = Q_E^T + lambda I as tridiagonal arrays
        std::vector<double> sub(static_cast<size_t>(n) - 1, 0.0), diag(static_cast<size_t>(n)),
            super(static_cast<size_t>(n) - 1, 0.0);
        for (state_t i = 1; i <= n; ++i) {
            diag[static_cast<size_t>(i) - 1] = lambda - model.total_rate(i);
            for (const auto& e : model.row(i)) {
                // transpose: entry (e.target, i)
                if (e.target == i + 1) sub[static_cast<size_t>(i) - 1] = e.rate;
                if (e.target == i - 1) super[static_cast<size_t>(i) - 2] = e.rate;
            }
        }
        for (int pass = 0; pass < refinements; ++pass) {
            linalg::tridiag_solve(sub, diag, super, u);
            normalize();
        }
    } else {
        linalg::DenseMatrix msys(n);
        for (state_t i = 1; i <= n; ++i) {
            msys.at(i - 1, i - 1) = lambda - model.total_rate(i);
            for (const auto& e : model.row(i)) msys.at(e.target - 1, i - 1) = e.rate;
        }
        auto perm = linalg::lu_factor(msys);
        for (int pass = 0; pass < refinements; ++pass) {
            linalg::lu_solve(msys, perm, u);
            normalize();
        }
    }

    double umax = *std::max_element(u.begin(), u.end());
    double umin = *std::min_element(u.begin(), u.end());
    if (umax <= 0.0 || umin < -1e-9 * umax)
        raise(errc::non_positive_eigenvector, "inverse iteration produced sign changes; shift or window too coarse");
    double s = 0.0;
    for (double& x : u) {
        if (x < 0.0) x = 0.0;
        s += x;
    }
    for (double& x : u) x /= s;
    return u;
}

}  // namespace qsd
