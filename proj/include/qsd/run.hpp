#pragma once

#include <chrono>
#include <cmath>

#include "qsd/htransform.hpp"
#include "qsd/model_io.hpp"
#include "qsd/qsd_solve.hpp"
#include "qsd/result.hpp"
#include "qsd/simulate.hpp"

namespace qsd {

namespace detail {

inline GeneratorModel acquire_model(const RunConfig& cfg) {
    if (!cfg.model_path.empty()) {
        GeneratorModel m = load_model(cfg.model_path);
        if (cfg.trunc > 0 && cfg.trunc < m.size()) m = truncate(m, cfg.trunc);
        return m;
    }
    ModelFamilySpec spec{};
    if (cfg.family == "feedback-chain") {
        spec.family = ModelFamily::feedback_chain;
        spec.p = cfg.p;
        spec.r = cfg.r;
        spec.w = cfg.w;
    } else if (cfg.family == "bd-line") {
        spec.family = ModelFamily::bd_line;
        spec.p = cfg.p;
        spec.c = cfg.c;
    } else if (cfg.family == "bd-halfline") {
        spec.family = ModelFamily::bd_halfline;
        spec.p = cfg.p;
        spec.c = cfg.c;
    } else {
        raise(errc::invalid_argument, "unknown family '" + cfg.family + "'");
    }
    if (cfg.trunc < 2) raise(errc::invalid_argument, "family models need --trunc N (N >= 2)");
    spec.level = cfg.trunc;
    return make_family(spec);
}

inline bool is_family(const GeneratorModel& m) { return m.truncation() && !m.truncation()->family.empty(); }

// headline decay parameter: truncation-curve sweep with a Richardson step for
// family models, plain solve otherwise
inline DecayResult headline_decay(const GeneratorModel& model, const RunConfig& cfg) {
    DecayOptions opts;
    opts.tol = cfg.tol;
    if (is_family(model)) {
        state_t level = model.truncation()->level;
        for (state_t d : {4, 2, 1}) {
            state_t l = level / d;
            if (l >= 2 && (opts.truncation_schedule.empty() || l > opts.truncation_schedule.back()))
                opts.truncation_schedule.push_back(l);
        }
    }
    return decay_parameter(model, opts);
}

inline state_t default_anchor(const GeneratorModel& model, const ExitSet& h) {
    if (!h.members.empty()) return h.members.front();
    if (model.truncation() && !model.truncation()->labels.empty()) {
        for (state_t i = 1; i <= model.size(); ++i)
            if (model.label(i) == 0) return i;
    }
    if (!h.boundary.empty() && h.boundary.front() > 1) return 1;
    return (model.size() + 1) / 2;
}

inline nlohmann::json residuals_json(const ResidualReport& r) {
    return {{"max_abs", r.max_abs},
            {"interior_max_abs", r.interior_max_abs},
            {"sum_error", r.sum_error},
            {"min_u", r.min_u}};
}

inline nlohmann::json classification_json(const ClassificationVerdict& v) {
    nlohmann::json j;
    j["recurrence"] = recurrence_name(v.recurrence);
    j["f_kk_at_lambda"] = v.f_kk_at_lambda;
    j["f_converged"] = v.f_converged;
    j["f_origin"] = v.origin;
    j["xy_partial_sums"] = v.xy_partial_sums;
    j["xy_tail_ratio"] = v.xy_tail_ratio;
    if (!v.note.empty()) j["note"] = v.note;
    return j;
}

inline nlohmann::json decay_json(const DecayResult& d) {
    nlohmann::json j;
    j["lambda"] = d.lambda;
    j["method"] = decay_method_name(d.method);
    j["bracket"] = d.bracket;
    j["extrapolated"] = d.extrapolated;
    if (d.boundary_fallback) j["boundary_fallback"] = true;
    if (!d.truncation_curve.empty()) {
        nlohmann::json curve = nlohmann::json::array();
        for (auto [n, l] : d.truncation_curve) curve.push_back({n, l});
        j["truncation_curve"] = curve;
    }
    return j;
}

struct AnalyticResult {
    DecayResult decay;         // headline (family-extrapolated when possible)
    double lambda_window = 0;  // decay parameter of the window model itself
    state_t anchor = 0;
    ExitSet exits;
    ClassificationVerdict classification;
    std::string qsd_status;  // qsd | qsd-direct | no-qsd-nonsummable | stationary-no-killing | undetermined
    std::optional<QsdResult> qsd;
    std::optional<InvariantVector> y;  // exit-kernel route only
    std::optional<SummabilityDiagnostic> summability;
};

inline AnalyticResult analytic_pipeline(const GeneratorModel& model, const RunConfig& cfg) {
    AnalyticResult out;
    out.decay = headline_decay(model, cfg);
    out.lambda_window =
        out.decay.truncation_curve.empty() ? out.decay.lambda : out.decay.truncation_curve.back().second;
    out.exits = exit_states(model);
    out.anchor = cfg.k > 0 ? cfg.k : default_anchor(model, out.exits);

    ClassifyOptions copts;
    copts.series_tol = cfg.series_tol;
    copts.nmax = cfg.nmax;
    out.classification = classify(model, out.decay.lambda, out.anchor, copts);

    auto h_all = out.exits.all();
    if (h_all.empty()) {
        // conservative model: no killing, lambda = 0, u is the stationary law
        out.qsd_status = "stationary-no-killing";
        out.qsd = solve_qsd_direct(model, out.lambda_window);
        out.qsd->classification = out.classification;
        return out;
    }

    const bool boundary = !(out.lambda_window < model.min_total_rate() * (1.0 - 1e-14));
    const bool recurrent = out.classification.recurrence == Recurrence::lambda_null_recurrent ||
                           out.classification.recurrence == Recurrence::lambda_positive_recurrent;
    if (boundary || !recurrent) {
        out.qsd_status = "qsd-direct";
        out.qsd = solve_qsd_direct(model, out.lambda_window);
        out.qsd->classification = out.classification;
        return out;
    }

    // Null-recurrent families: check summability of the anchored invariant
    // measure first. A non-summable measure rules the QSD out, and the
    // exit-kernel series would crawl anyway (the rim return rate sits at the
    // edge of the spectrum).
    if (is_family(model) && out.classification.recurrence == Recurrence::lambda_null_recurrent) {
        auto x = invariant_measure(model, out.decay.lambda, out.anchor, cfg.series_tol, cfg.nmax);
        out.summability = summability_diagnostic(model, x.values, out.anchor);
        if (!out.summability->summable) {
            out.qsd_status = "no-qsd-nonsummable";
            return out;
        }
    }

    auto t_window = embedded_chain(model, out.lambda_window);
    auto exit = exit_kernel(t_window, h_all, cfg.series_tol, cfg.nmax);
    out.qsd = assemble_qsd(model, out.lambda_window, exit);
    out.qsd->classification = out.classification;
    out.qsd_status = "qsd";
    out.y = invariant_vector(model, out.lambda_window, exit.h, exit.v, cfg.series_tol, cfg.nmax);

    if (is_family(model)) {
        out.summability = summability_diagnostic(model, out.qsd->x, out.anchor);
        if (!out.summability->summable) out.qsd_status = "no-qsd-nonsummable";
    }
    return out;
}

inline void attach_analytic(nlohmann::json& outputs, const AnalyticResult& r, const GeneratorModel& model) {
    outputs["lambda"] = r.decay.lambda;
    outputs["lambda_window"] = r.lambda_window;
    nlohmann::json dj = decay_json(r.decay);
    for (auto& [k, v] : dj.items())
        if (k != "lambda") outputs[k] = v;
    outputs["classification"] = recurrence_name(r.classification.recurrence);
    outputs["classify"] = classification_json(r.classification);
    outputs["exit_states"] = r.exits.members;
    if (!r.exits.boundary.empty()) outputs["exit_states_boundary"] = r.exits.boundary;
    outputs["qsd_status"] = r.qsd_status;
    if (r.qsd_status == "no-qsd-nonsummable")
        outputs["qsd_verdict"] = "no QSD: invariant measure non-summable (partial sums diverge)";
    if (r.qsd && r.qsd_status != "no-qsd-nonsummable") {
        outputs["u"] = r.qsd->u;
        outputs["u_window"] = model.size();  // vectors are emitted up to the window, never extrapolated
        outputs["residuals"] = residuals_json(r.qsd->residuals);
        if (std::isfinite(r.qsd->m_h)) outputs["m_h"] = r.qsd->m_h;
        if (r.qsd->exit) outputs["mu"] = r.qsd->exit->mu;
        if (!r.qsd->x.empty()) outputs["x"] = r.qsd->x;
        if (r.y) outputs["y"] = r.y->values;
        outputs["qsd_path"] = r.qsd->path == QsdPath::exit_kernel ? "exit-kernel" : "direct-eigen";
    }
    if (r.summability) {
        outputs["x_tail_ratio"] = r.summability->tail_ratio;
        outputs["x_summable"] = r.summability->summable;
    }
}

inline std::pair<std::vector<double>, double> load_qsd_input(const std::string& path, const GeneratorModel& model) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        raise(errc::parse_error, path + ": " + e.what());
    }
    const nlohmann::json* node = &doc;
    if (doc.contains("outputs")) node = &doc["outputs"];
    if (!node->contains("u") || !node->contains("lambda"))
        raise(errc::parse_error, path + ": expected fields 'u' and 'lambda'");
    std::vector<double> u = (*node)["u"].get<std::vector<double>>();
    if (u.size() != static_cast<size_t>(model.size()))
        raise(errc::invalid_argument, path + ": u length does not match the model");
    return {u, (*node)["lambda"].get<double>()};
}

}  // namespace detail

// Orchestrates one CLI command over the analytic and simulation pipelines.
inline ResultDocument run(const RunConfig& cfg) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    GeneratorModel model = detail::acquire_model(cfg);

    ResultDocument doc;
    doc.body["schema"] = kResultSchema;
    doc.body["tool_version"] = kVersion;
    doc.body["command"] = cfg.command;
    doc.body["input_digest"] = model_digest(model);
    doc.body["config"] = config_echo(cfg);
    nlohmann::json outputs;

    if (cfg.command == "compute" || cfg.command == "classify") {
        auto r = detail::analytic_pipeline(model, cfg);
        detail::attach_analytic(outputs, r, model);
        if (cfg.command == "classify") {
            outputs.erase("u");
            outputs.erase("x");
            outputs.erase("y");
            outputs.erase("residuals");
            outputs.erase("mu");
            outputs.erase("m_h");
            outputs.erase("qsd_path");
        }
    } else if (cfg.command == "bound") {
        auto decay = detail::headline_decay(model, cfg);
        auto exits = exit_states(model);
        state_t k = cfg.k > 0 ? cfg.k : detail::default_anchor(model, exits);
        auto h = hitting_prob(model, k, cfg.series_tol, cfg.nmax);
        double attained = std::numeric_limits<double>::quiet_NaN();
        if (decay.lambda < model.min_total_rate() * (1.0 - 1e-14)) {
            auto x = invariant_measure(model, decay.lambda, k, cfg.series_tol, cfg.nmax);
            if (x.converged) {
                double s = 0.0;
                for (double v : x.values) s += v;
                attained = decay.lambda * s;
            }
        }
        auto b = moment_bound(model, k, decay.lambda, h, attained);
        outputs["lambda"] = decay.lambda;
        outputs["method"] = decay_method_name(decay.method);
        outputs["k"] = k;
        outputs["bound_value"] = b.bound_value;
        outputs["q_k"] = b.q_k;
        outputs["return_prob"] = b.return_prob;
        outputs["inf_h"] = b.inf_h;
        outputs["inf_h_interior"] = b.inf_h_interior;
        outputs["h"] = h.values;
        outputs["h_converged"] = h.converged;
        if (std::isfinite(b.attained_estimate)) outputs["attained_estimate"] = b.attained_estimate;
        outputs["qsd_exists"] =
            b.qsd_exists == QsdExists::yes ? "true" : (b.qsd_exists == QsdExists::no ? "false" : "undetermined");
    } else if (cfg.command == "simulate") {
        SimConfig sim;
        sim.paths = cfg.paths;
        sim.horizon = cfg.horizon;
        sim.seed = cfg.seed;
        sim.workers = cfg.workers;
        sim.time_grid = cfg.time_grid;
        state_t i0 = cfg.i0 > 0 ? cfg.i0 : 1;
        outputs["i0"] = i0;
        auto exits = exit_states(model);
        if (exits.empty()) {
            outputs["lambda0_skipped"] = "no killing: survival does not decay";
        } else {
            auto est = estimate_lambda0(model, i0, sim);
            nlohmann::json e;
            e["lambda0"] = est.lambda0;
            e["std_error"] = est.std_error;
            e["censored_fraction"] = est.censored_fraction;
            e["survivors_at_end"] = est.survivors_at_end;
            e["curvature_corrected"] = est.curvature_corrected;
            if (est.curvature_corrected) {
                e["curvature"] = est.curvature;
                e["plain_lambda0"] = est.plain_lambda0;
            }
            e["fit_window"] = {est.fit_window.first, est.fit_window.second};
            nlohmann::json curve = nlohmann::json::array();
            for (auto [t, s] : est.survival) curve.push_back({t, s});
            e["survival"] = curve;
            outputs["lambda0"] = e;
        }
        if (cfg.t > 0.0) {
            auto y = yaglom_estimate(model, i0, cfg.t, sim);
            nlohmann::json e;
            e["t"] = y.t;
            e["survivors"] = y.survivors;
            e["freq"] = y.freq;
            e["max_std_error"] = y.max_std_error;
            outputs["yaglom"] = e;
        }
        if (!cfg.qsd_path.empty()) {
            auto [u, lambda_in] = detail::load_qsd_input(cfg.qsd_path, model);
            double t = cfg.t > 0.0 ? cfg.t : cfg.horizon / 2.0;
            auto chk = qsd_invariance_check(model, u, t, sim);
            nlohmann::json e;
            e["t"] = t;
            e["tv"] = chk.tv;
            e["ci95"] = chk.ci95;
            e["survivors"] = chk.survivors;
            e["lambda_supplied"] = lambda_in;
            outputs["invariance"] = e;
        }
        if (!cfg.trace_path.empty()) {
            JumpTable table(model);
            std::string csv = "path_id,time,state\n";
            for (long p = 0; p < cfg.paths; ++p) {
                auto sample = sample_path(table, i0, path_rng(cfg.seed, static_cast<std::uint64_t>(p)),
                                          cfg.horizon);
                csv += std::to_string(p) + ",0," + std::to_string(i0) + "\n";
                for (size_t j = 0; j < sample.jump_times.size(); ++j)
                    csv += std::to_string(p) + "," + format_rate(sample.jump_times[j]) + "," +
                           std::to_string(sample.states[j]) + "\n";
            }
            write_file(cfg.trace_path, csv);
            outputs["trace"] = cfg.trace_path;
        }
    } else if (cfg.command == "verify") {
        if (cfg.qsd_path.empty()) raise(errc::invalid_argument, "verify needs --qsd <result.json>");
        auto [u, lambda_in] = detail::load_qsd_input(cfg.qsd_path, model);
        auto rep = verify_qsd(model, u, lambda_in);
        outputs["lambda"] = lambda_in;
        outputs["residuals"] = detail::residuals_json(rep);
        outputs["residual_gate"] = cfg.residual_gate * model.max_total_rate();
        outputs["pass"] = rep.max_abs <= cfg.residual_gate * model.max_total_rate();
    } else {
        raise(errc::invalid_argument, "unknown command '" + cfg.command + "'");
    }

    doc.body["outputs"] = outputs;
    if (cfg.timing) {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
        doc.body["timing_ms"] = ms.count();
    }
    return doc;
}

inline void save_result(const ResultDocument& doc, const std::string& path, const std::string& format = "json") {
    write_file(path, doc.serialize(format));
}

}  // namespace qsd
