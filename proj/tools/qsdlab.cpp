// qsdlab: quasi-stationary analysis of killed jump processes from the command
// line. See README.md for the file formats and the output schema.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qsd/run.hpp"

namespace {

void add_model_options(CLI::App* cmd, qsd::RunConfig& cfg) {
    cmd->add_option("--model", cfg.model_path, "Q-matrix file (triplets or JSON manifest)");
    cmd->add_option("--family", cfg.family, "builtin family: feedback-chain | bd-line | bd-halfline");
    cmd->add_option("--p", cfg.p, "family parameter p");
    cmd->add_option("--r", cfg.r, "feedback-chain parameter r");
    cmd->add_option("--w", cfg.w, "feedback-chain parameter w");
    cmd->add_option("--c", cfg.c, "birth-death rate scale c");
    cmd->add_option("--trunc", cfg.trunc, "truncation level N");
    cmd->add_option("--tol", cfg.tol, "decay-parameter tolerance");
    cmd->add_option("--series-tol", cfg.series_tol, "taboo series cutoff");
    cmd->add_option("--nmax", cfg.nmax, "taboo series term cap");
    cmd->add_option("--k", cfg.k, "anchor / target state");
    cmd->add_option("--out", cfg.out_path, "write the result document here instead of stdout");
    cmd->add_option("--format", cfg.format, "json | csv");
    cmd->add_flag("--timing", cfg.timing, "include wall-clock timing in the document");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-stationary distribution solver for killed jump processes"};
    app.require_subcommand(1);

    qsd::RunConfig cfg;

    auto* compute = app.add_subcommand("compute", "decay parameter, classification and QSD");
    add_model_options(compute, cfg);

    auto* classify = app.add_subcommand("classify", "lambda-recurrence classification only");
    add_model_options(classify, cfg);

    auto* bound = app.add_subcommand("bound", "hitting probabilities and the moment bound");
    add_model_options(bound, cfg);

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimators");
    add_model_options(simulate, cfg);
    simulate->add_option("--seed", cfg.seed, "master seed");
    simulate->add_option("--paths", cfg.paths, "number of paths");
    simulate->add_option("--t", cfg.t, "observation time for the conditional law");
    simulate->add_option("--horizon", cfg.horizon, "censoring horizon");
    simulate->add_option("--workers", cfg.workers, "worker threads (outputs do not depend on this)");
    simulate->add_option("--i0", cfg.i0, "initial state");
    simulate->add_option("--grid", cfg.time_grid, "survival time grid")->expected(-1);
    simulate->add_option("--qsd", cfg.qsd_path, "result document with (u, lambda) for the invariance check");
    simulate->add_option("--trace", cfg.trace_path, "CSV path trace export: path_id,time,state");

    auto* verify = app.add_subcommand("verify", "residual report for a supplied (u, lambda)");
    add_model_options(verify, cfg);
    verify->add_option("--qsd", cfg.qsd_path, "result document with (u, lambda)")->required();

    CLI11_PARSE(app, argc, argv);

    for (auto* sub : {compute, classify, bound, simulate, verify})
        if (sub->parsed()) cfg.command = sub->get_name();

    try {
        qsd::ResultDocument doc = qsd::run(cfg);
        if (cfg.out_path.empty())
            std::cout << doc.serialize(cfg.format);
        else
            qsd::save_result(doc, cfg.out_path, cfg.format);
        return 0;
    } catch (const qsd::error& e) {
        nlohmann::json err{{"error", {{"code", e.code_name()}, {"message", e.what()}}}};
        std::cerr << err.dump(2) << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", {{"code", "Internal"}, {"message", e.what()}}}};
        std::cerr << err.dump(2) << "\n";
        return 2;
    }
}
