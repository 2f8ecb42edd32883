#pragma once

#include <string>
#include <vector>

#include "qsd/taboo.hpp"

namespace qsd {

enum class Recurrence { lambda_transient, lambda_null_recurrent, lambda_positive_recurrent, undetermined };

inline const char* recurrence_name(Recurrence r) {
    switch (r) {
        case Recurrence::lambda_transient: return "lambda-transient";
        case Recurrence::lambda_null_recurrent: return "lambda-null-recurrent";
        case Recurrence::lambda_positive_recurrent: return "lambda-positive-recurrent";
        case Recurrence::undetermined: return "undetermined";
    }
    return "?";
}

struct ClassifyOptions {
    double tol = 1e-2;          // half-width of the recurrent band around F = 1
    double series_tol = 1e-12;
    long nmax = 1000000;
    double xy_tail_tol = 1e-3;  // positive recurrence iff the xy mass growth stays below this
};

struct ClassificationVerdict {
    Recurrence recurrence = Recurrence::undetermined;
    double f_kk_at_lambda = 0.0;
    bool f_converged = false;
    double f_tail = 0.0;
    state_t origin = 0;
    std::vector<double> xy_partial_sums;  // per window for truncated families, per radius otherwise
    double xy_tail_ratio = 0.0;
    std::string note;
};

namespace detail {

// sum_i x_i y_i with singleton-anchored invariant measure and vector on one
// window; both sides are anchored at k so values are comparable across windows.
inline double xy_mass(const GeneratorModel& model, double lambda, state_t k, const ClassifyOptions& opts,
                      bool& converged) {
    auto t = embedded_chain(model, lambda);
    auto xs = taboo_series(t, {k}, k, opts.series_tol, opts.nmax);
    std::vector<double> vk(static_cast<size_t>(model.size()), 0.0);
    vk[static_cast<size_t>(k) - 1] = 1.0;
    auto ys = taboo_series_columns(t, {k}, vk, opts.series_tol, opts.nmax);
    converged = xs.converged && ys.converged;
    double s = 0.0;
    for (state_t i = 1; i <= model.size(); ++i) {
        double x = xs.partial[static_cast<size_t>(i) - 1] / (model.total_rate(i) - lambda);
        double y = (i == k) ? 1.0 : ys.partial[static_cast<size_t>(i) - 1];
        s += x * y;
    }
    return s;
}

inline state_t anchor_for_label(const GeneratorModel& model, std::int64_t label) {
    for (state_t i = 1; i <= model.size(); ++i)
        if (model.label(i) == label) return i;
    return (model.size() + 1) / 2;
}

}  // namespace detail

// Verdict on lambda-recurrence through the return transform F_kk(lambda), and
// null-vs-positive through the growth of sum x_i y_i. For truncated families
// the growth is measured across sub-windows; a finite model carries its whole
// sum, which settles the question outright.
inline ClassificationVerdict classify(const GeneratorModel& model, double lambda, state_t k,
                                      ClassifyOptions opts = {}) {
    ClassificationVerdict out;
    out.origin = k;

    if (model.size() == 1) {
        // p_11(t) = exp(-q_1 t): at lambda = q_1 the limit of exp(lambda t) p_11(t) is 1
        out.recurrence = Recurrence::lambda_positive_recurrent;
        out.f_kk_at_lambda = 0.0;
        out.f_converged = true;
        out.note = "single-state chain, classified in closed form";
        return out;
    }
    if (!(lambda < model.min_total_rate() * (1.0 - 1e-14))) {
        out.recurrence = Recurrence::undetermined;
        out.note = "lambda sits at the min-rate boundary; taboo series undefined";
        return out;
    }

    auto t = embedded_chain(model, lambda);
    auto f = return_transform(t, k, opts.series_tol, opts.nmax);
    out.f_kk_at_lambda = f.value;
    out.f_converged = f.converged;
    out.f_tail = f.tail_estimate;

    if (f.value < 1.0 - opts.tol) {
        if (!f.converged && f.value + f.tail_estimate >= 1.0 - opts.tol) {
            out.recurrence = Recurrence::undetermined;
            out.note = "return series unresolved at nmax";
            return out;
        }
        out.recurrence = Recurrence::lambda_transient;
        return out;
    }
    if (f.value > 1.0 + opts.tol) {
        out.recurrence = Recurrence::undetermined;
        out.note = "return series exceeded 1; lambda is above the decay parameter";
        return out;
    }

    // recurrent; decide positive vs null
    const auto& meta = model.truncation();
    if (meta && !meta->family.empty()) {
        auto spec = family_spec_from_meta(*meta);
        std::vector<state_t> windows;
        for (state_t d : {4, 2, 1}) {
            state_t lvl = spec.level / d;
            if (lvl >= 2 && (windows.empty() || lvl > windows.back())) windows.push_back(lvl);
        }
        bool all_conv = true;
        std::int64_t anchor_label = model.label(k);
        for (state_t lvl : windows) {
            ModelFamilySpec s = spec;
            s.level = lvl;
            auto sub = make_family(s);
            state_t kk = detail::anchor_for_label(sub, anchor_label);
            bool conv = false;
            out.xy_partial_sums.push_back(detail::xy_mass(sub, lambda, kk, opts, conv));
            all_conv = all_conv && conv;
        }
        double last = out.xy_partial_sums.back();
        double prev = out.xy_partial_sums.size() >= 2 ? out.xy_partial_sums[out.xy_partial_sums.size() - 2] : last;
        out.xy_tail_ratio = last > 0.0 ? (last - prev) / last : 0.0;
        if (!all_conv) out.note = "xy series reported before full convergence";
        out.recurrence = out.xy_tail_ratio < opts.xy_tail_tol ? Recurrence::lambda_positive_recurrent
                                                              : Recurrence::lambda_null_recurrent;
        return out;
    }

    // finite model: the sum over E is complete, so it is finite by definition
    bool conv = false;
    double total = detail::xy_mass(model, lambda, k, opts, conv);
    out.xy_partial_sums = {total};
    out.xy_tail_ratio = 0.0;
    out.recurrence = Recurrence::lambda_positive_recurrent;
    if (!conv) {
        out.recurrence = Recurrence::undetermined;
        out.note = "xy series unresolved at nmax";
    }
    return out;
}

}  // namespace qsd
