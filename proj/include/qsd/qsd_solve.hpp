#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "qsd/classify.hpp"
#include "qsd/invariant.hpp"
#include "qsd/taboo.hpp"

namespace qsd {

struct ResidualReport {
    double max_abs = 0.0;           // || u Q + lambda u ||_inf over all states
    double interior_max_abs = 0.0;  // same, excluding truncation-perturbed rows and their neighbors
    double sum_error = 0.0;         // sum u - 1
    double min_u = 0.0;
};

inline ResidualReport verify_qsd(const GeneratorModel& model, const std::vector<double>& u, double lambda) {
    const state_t n = model.size();
    if (u.size() != static_cast<size_t>(n)) raise(errc::invalid_argument, "u has the wrong length");
    std::vector<double> r(static_cast<size_t>(n), 0.0);
    for (state_t i = 1; i <= n; ++i) {
        double ui = u[static_cast<size_t>(i) - 1];
        r[static_cast<size_t>(i) - 1] -= (model.total_rate(i) - lambda) * ui;
        if (ui == 0.0) continue;
        for (const auto& e : model.row(i)) r[static_cast<size_t>(e.target) - 1] += ui * e.rate;
    }

    std::vector<char> boundary(static_cast<size_t>(n) + 1, 0);
    if (model.truncation()) {
        for (state_t row : model.truncation()->redirected_rows) {
            if (row < 1 || row > n) continue;
            boundary[static_cast<size_t>(row)] = 1;
            for (const auto& e : model.row(row)) boundary[static_cast<size_t>(e.target)] = 1;
        }
    }

    ResidualReport rep;
    rep.min_u = u.empty() ? 0.0 : u[0];
    double sum = 0.0;
    for (state_t i = 1; i <= n; ++i) {
        double abs_r = std::abs(r[static_cast<size_t>(i) - 1]);
        rep.max_abs = std::max(rep.max_abs, abs_r);
        if (!boundary[static_cast<size_t>(i)]) rep.interior_max_abs = std::max(rep.interior_max_abs, abs_r);
        sum += u[static_cast<size_t>(i) - 1];
        rep.min_u = std::min(rep.min_u, u[static_cast<size_t>(i) - 1]);
    }
    rep.sum_error = sum - 1.0;
    return rep;
}

// M_H = sum_{j in H} mu_j q_{j0} / (q_j - lambda), the kill-weighted moment
// that normalizes the quasi-stationary distribution.
inline double moment_mh(const GeneratorModel& model, double lambda, const ExitStationary& exit) {
    double m = 0.0;
    for (size_t a = 0; a < exit.h.size(); ++a)
        m += exit.mu[a] * model.kill(exit.h[a]) / (model.total_rate(exit.h[a]) - lambda);
    return m;
}

enum class QsdPath { exit_kernel, direct_eigen };

struct QsdResult {
    double lambda = 0.0;
    std::vector<double> u;
    std::optional<ExitStationary> exit;
    double m_h = std::numeric_limits<double>::quiet_NaN();
    std::optional<ClassificationVerdict> classification;
    ResidualReport residuals;
    QsdPath path = QsdPath::exit_kernel;
    std::vector<double> x;  // lambda-invariant measure used in the assembly (exit-anchored)
};

// Exit-kernel assembly: u = lambda * mu_i / ((q_i - lambda) M_H) on H and
// lambda * x_i / M_H off H, with x built from the mu-weighted taboo rows.
// Requires the mu-weighted kernel mass to sit at 1 (lambda-recurrence).
inline QsdResult assemble_qsd(const GeneratorModel& model, double lambda, const ExitStationary& exit,
                              double mass_gate = 1e-6) {
    if (exit.h.empty()) raise(errc::empty_exit_set, "assemble_qsd needs exit states");
    if (exit.mass < 1.0 - mass_gate)
        raise(errc::not_recurrent, "mu-weighted kernel mass " + std::to_string(exit.mass) +
                                       " < 1: not lambda-recurrent at this shift; use solve_qsd_direct");
    if (exit.mass > 1.0 + mass_gate)
        raise(errc::kernel_not_stochastic_enough,
              "mu-weighted kernel mass " + std::to_string(exit.mass) + " exceeds 1; lambda is too high");

    const state_t n = model.size();
    QsdResult out;
    out.lambda = lambda;
    out.path = QsdPath::exit_kernel;
    out.exit = exit;
    out.m_h = moment_mh(model, lambda, exit);

    std::vector<double> xbar(static_cast<size_t>(n), 0.0);
    for (size_t a = 0; a < exit.h.size(); ++a) {
        const auto& row = exit.origin_rows[a].partial;
        for (state_t i = 1; i <= n; ++i) xbar[static_cast<size_t>(i) - 1] += exit.mu[a] * row[static_cast<size_t>(i) - 1];
    }
    for (size_t a = 0; a < exit.h.size(); ++a) xbar[static_cast<size_t>(exit.h[a]) - 1] = exit.mu[a];

    out.x.resize(static_cast<size_t>(n));
    out.u.resize(static_cast<size_t>(n));
    for (state_t i = 1; i <= n; ++i) {
        double xi = xbar[static_cast<size_t>(i) - 1] / (model.total_rate(i) - lambda);
        out.x[static_cast<size_t>(i) - 1] = xi;
        out.u[static_cast<size_t>(i) - 1] = lambda * xi / out.m_h;
    }
    out.residuals = verify_qsd(model, out.u, lambda);
    return out;
}

// Direct route for the cases the exit-kernel construction does not cover
// (lambda-transient windows, boundary decay): positive left eigenvector of the
// sub-generator at -lambda by inverse iteration, normalized to a probability.
inline QsdResult solve_qsd_direct(const GeneratorModel& model, double lambda) {
    QsdResult out;
    out.lambda = lambda;
    out.path = QsdPath::direct_eigen;
    out.u = perron_left_vector(model, lambda);
    out.residuals = verify_qsd(model, out.u, lambda);
    return out;
}

// Window summability diagnostic: partial sums of x by distance from the
// anchor. A clean geometric tail certifies a normalizable measure on the
// window; growth concentrated at the rim flags a non-summable family.
struct SummabilityDiagnostic {
    std::vector<double> partial_sums;  // by radius around the anchor
    double tail_ratio = 0.0;           // mass added by the last 10% of radii
    bool summable = false;
};

inline SummabilityDiagnostic summability_diagnostic(const GeneratorModel& model, const std::vector<double>& x,
                                                    state_t anchor, double tail_tol = 1e-3) {
    const state_t n = model.size();
    std::int64_t a = model.label(anchor);
    std::int64_t max_r = 0;
    for (state_t i = 1; i <= n; ++i) max_r = std::max(max_r, std::abs(model.label(i) - a));
    SummabilityDiagnostic d;
    d.partial_sums.assign(static_cast<size_t>(max_r) + 1, 0.0);
    for (state_t i = 1; i <= n; ++i)
        d.partial_sums[static_cast<size_t>(std::abs(model.label(i) - a))] += x[static_cast<size_t>(i) - 1];
    for (size_t r = 1; r < d.partial_sums.size(); ++r) d.partial_sums[r] += d.partial_sums[r - 1];
    double total = d.partial_sums.back();
    size_t idx90 = static_cast<size_t>(0.9 * static_cast<double>(d.partial_sums.size() - 1));
    d.tail_ratio = total > 0.0 ? (total - d.partial_sums[idx90]) / total : 0.0;
    d.summable = d.tail_ratio < tail_tol;
    return d;
}

}  // namespace qsd
