#pragma once

#include <vector>

#include "qsd/taboo.hpp"

namespace qsd {

// lambda-invariant measure anchored at k: x_i = (sum_n kT^(n)_{k,i}) / (q_i - lambda).
struct InvariantMeasure {
    std::vector<double> values;
    state_t anchor = 0;
    bool converged = false;
    double tail_estimate = 0.0;
    long n_used = 0;
};

inline InvariantMeasure invariant_measure(const GeneratorModel& model, double lambda, state_t k, double tol = 1e-12,
                                          long nmax = 1000000) {
    auto t = embedded_chain(model, lambda);
    auto series = taboo_series(t, {k}, k, tol, nmax);
    InvariantMeasure out;
    out.anchor = k;
    out.converged = series.converged;
    out.tail_estimate = series.tail_estimate;
    out.n_used = series.n_used;
    out.values.resize(static_cast<size_t>(model.size()));
    for (state_t i = 1; i <= model.size(); ++i)
        out.values[static_cast<size_t>(i) - 1] = series.partial[static_cast<size_t>(i) - 1] / (model.total_rate(i) - lambda);
    return out;
}

// lambda-invariant vector: y = v on H, y_i = sum_{j in H} sum_n HT^(n)_{i,j} v_j off H.
struct InvariantVector {
    std::vector<double> values;
    std::vector<state_t> h;
    bool converged = false;
    double tail_estimate = 0.0;
    long n_used = 0;
};

inline InvariantVector invariant_vector(const GeneratorModel& model, double lambda, const std::vector<state_t>& h,
                                        const std::vector<double>& v, double tol = 1e-12, long nmax = 1000000) {
    if (h.empty()) raise(errc::empty_exit_set, "invariant vector needs a nonempty H");
    if (h.size() != v.size()) raise(errc::invalid_argument, "v must match H");
    auto t = embedded_chain(model, lambda);
    std::vector<double> v_full(static_cast<size_t>(model.size()), 0.0);
    for (size_t a = 0; a < h.size(); ++a) v_full[static_cast<size_t>(h[a]) - 1] = v[a];
    auto series = taboo_series_columns(t, h, v_full, tol, nmax);
    InvariantVector out;
    out.h = h;
    out.converged = series.converged;
    out.tail_estimate = series.tail_estimate;
    out.n_used = series.n_used;
    out.values = std::move(series.partial);
    for (size_t a = 0; a < h.size(); ++a) out.values[static_cast<size_t>(h[a]) - 1] = v[a];
    return out;
}

}  // namespace qsd
