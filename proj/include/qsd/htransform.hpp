#pragma once

#include <cmath>
#include <vector>

#include "qsd/model.hpp"

namespace qsd {

// Hitting probabilities h_i = P_i[tau_k^+ < infinity], h_k = 1, as the minimal
// nonnegative solution of the jump-chain harmonic system. Iteration starts
// from zero; starting from one would converge to the trivial supersolution.
struct HittingVector {
    state_t target = 0;
    std::vector<double> values;
    double inf_h = 0.0;
    bool converged = false;
    long iterations = 0;
};

inline HittingVector hitting_prob(const GeneratorModel& model, state_t k, double tol = 1e-13,
                                  long max_iter = 1000000) {
    const state_t n = model.size();
    if (k < 1 || k > n) raise(errc::invalid_argument, "target state out of range");
    HittingVector out;
    out.target = k;
    std::vector<double> h(static_cast<size_t>(n), 0.0), next(static_cast<size_t>(n));
    h[static_cast<size_t>(k) - 1] = 1.0;
    const long floor_sweeps = std::min<long>(max_iter, n + 8);  // let the support reach every state
    for (long it = 1; it <= max_iter; ++it) {
        double change = 0.0;  // relative, so far states converge at their own scale
        for (state_t i = 1; i <= n; ++i) {
            if (i == k) {
                next[static_cast<size_t>(i) - 1] = 1.0;
                continue;
            }
            double acc = 0.0;
            for (const auto& e : model.row(i)) acc += e.rate * h[static_cast<size_t>(e.target) - 1];
            acc /= model.total_rate(i);
            if (acc > 0.0) change = std::max(change, (acc - h[static_cast<size_t>(i) - 1]) / acc);
            next[static_cast<size_t>(i) - 1] = acc;
        }
        h.swap(next);
        out.iterations = it;
        if (change < tol && it >= floor_sweeps) {
            out.converged = true;
            break;
        }
    }
    out.values = std::move(h);
    out.inf_h = *std::min_element(out.values.begin(), out.values.end());
    return out;
}

// h-transformed generator s_ij = q_ij h_j / h_i: killing concentrated at k,
// every other row conservative within E.
struct TransformedModel {
    GeneratorModel model;
    state_t k = 0;
    std::vector<double> h;
    double kill_at_k = 0.0;  // q_k (1 - P_k[tau_k^+ < inf])
};

inline TransformedModel h_transform(const GeneratorModel& base, state_t k, const HittingVector& h) {
    const state_t n = base.size();
    if (h.values.size() != static_cast<size_t>(n)) raise(errc::invalid_argument, "h has the wrong length");
    for (double v : h.values)
        if (!(v > 0.0)) raise(errc::degenerate_h, "h has a nonpositive component on the window");

    std::vector<std::vector<RateEntry>> rows(static_cast<size_t>(n));
    std::vector<double> kill(static_cast<size_t>(n), 0.0);
    for (state_t i = 1; i <= n; ++i) {
        const double hi = h.values[static_cast<size_t>(i) - 1];
        double srow = 0.0;
        for (const auto& e : base.row(i)) {
            double s = e.rate * h.values[static_cast<size_t>(e.target) - 1] / hi;
            rows[static_cast<size_t>(i) - 1].push_back({e.target, s});
            srow += s;
        }
        if (i == k) kill[static_cast<size_t>(i) - 1] = std::max(0.0, base.total_rate(i) - srow);
    }

    TransformedModel out;
    out.k = k;
    out.h = h.values;
    out.kill_at_k = kill[static_cast<size_t>(k) - 1];
    std::optional<TruncationMeta> meta;
    if (base.truncation()) meta = *base.truncation();
    out.model = GeneratorModel::from_rows(std::move(rows), std::move(kill), std::move(meta));
    return out;
}

// Upper bound on E_k exp(lambda tau_0) 1[no return to k]; a positive inf h
// certifies a lambda-QSD.
enum class QsdExists { yes, no, undetermined };

struct MomentBound {
    double bound_value = 0.0;  // uses the window infimum, so it over-covers the true bound
    double q_k = 0.0;
    double return_prob = 0.0;      // P_k[tau_k^+ < infinity]
    double inf_h = 0.0;            // window infimum, truncation rim included
    double inf_h_interior = 0.0;   // infimum over the first 90% of the window
    double lambda = 0.0;
    QsdExists qsd_exists = QsdExists::undetermined;
    double attained_estimate = std::numeric_limits<double>::quiet_NaN();  // lambda * sum x when available
};

inline MomentBound moment_bound(const GeneratorModel& model, state_t k, double lambda, const HittingVector& h,
                                double attained = std::numeric_limits<double>::quiet_NaN()) {
    const double qk = model.total_rate(k);
    if (!(lambda < qk)) raise(errc::boundary_shift, "lambda must be below q_k");
    MomentBound out;
    out.q_k = qk;
    out.lambda = lambda;
    out.inf_h = h.inf_h;
    out.attained_estimate = attained;

    double ret = 0.0;
    for (const auto& e : model.row(k)) ret += (e.rate / qk) * h.values[static_cast<size_t>(e.target) - 1];
    out.return_prob = ret;
    out.bound_value = out.inf_h > 0.0 ? qk * (1.0 - ret) / (out.inf_h * (qk - lambda))
                                      : std::numeric_limits<double>::infinity();

    const state_t n = model.size();
    const size_t interior_end =
        model.truncation() ? std::max<size_t>(1, static_cast<size_t>(0.9 * n)) : static_cast<size_t>(n);
    out.inf_h_interior = *std::min_element(h.values.begin(), h.values.begin() + static_cast<long>(interior_end));

    if (out.inf_h_interior <= 0.0) {
        out.qsd_exists = QsdExists::no;  // h underflowed inside the window
    } else if (!model.truncation()) {
        out.qsd_exists = QsdExists::yes;  // the window is the whole space
    } else {
        // inf over a countable space is not decidable from one window: a flat
        // interior supports existence, decay across the interior does not.
        // The rim itself is perturbed by the cut and carries no signal.
        double mid = h.values[interior_end / 2];
        double late = h.values[interior_end - 1];
        bool decaying = late < mid * 0.9;
        out.qsd_exists = decaying ? QsdExists::undetermined : QsdExists::yes;
    }
    return out;
}

}  // namespace qsd
