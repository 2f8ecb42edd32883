#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsd/model.hpp"
#include "qsd/version.hpp"

namespace qsd {

struct RunConfig {
    std::string command;      // compute | classify | bound | simulate | verify
    std::string model_path;   // exclusive with family
    std::string family;       // feedback-chain | bd-line | bd-halfline
    double p = 0.0, r = 0.0, w = 0.0, c = 0.0;
    state_t trunc = 0;

    double tol = 1e-10;           // decay-parameter bisection
    double series_tol = 1e-12;    // taboo series cutoff
    double residual_gate = 1e-8;  // relative residual gate on ||uQ + lambda u||
    long nmax = 1000000;

    std::uint64_t seed = 1;
    long paths = 100000;
    double t = 0.0;
    double horizon = 20.0;
    int workers = 1;  // execution detail; never echoed into documents
    state_t i0 = 0;
    state_t k = 0;
    std::vector<double> time_grid;

    std::string out_path;
    std::string format = "json";  // json | csv
    std::string qsd_path;         // documents supplying (u, lambda) to verify/simulate
    std::string trace_path;
    bool timing = false;

    void validate() const {
        if (model_path.empty() == family.empty())
            raise(errc::invalid_argument, "exactly one model source: --model or --family");
        if (!(tol > 0.0) || !(series_tol > 0.0) || !(residual_gate > 0.0))
            raise(errc::invalid_argument, "tolerances must be positive");
        if (format != "json" && format != "csv") raise(errc::unsupported_format, "format must be json or csv");
    }
};

// The reproducibility contract: for analytic commands and fixed-seed
// simulations the serialized document is byte-identical across runs and worker
// counts. Wall-clock timing therefore only enters when asked for.
struct ResultDocument {
    nlohmann::json body;

    std::string to_json() const { return body.dump(2) + "\n"; }

    std::string to_csv() const {
        std::string out;
        out += "# " + std::string(kResultSchema) + "," + body.value("command", "") + "\n";
        out += "key,value\n";
        std::function<void(const std::string&, const nlohmann::json&)> scalars =
            [&](const std::string& prefix, const nlohmann::json& node) {
                for (auto it = node.begin(); it != node.end(); ++it) {
                    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
                    if (it->is_object())
                        scalars(key, *it);
                    else if (!it->is_array())
                        out += key + "," + it->dump() + "\n";
                }
            };
        scalars("", body);
        std::function<void(const std::string&, const nlohmann::json&)> vectors =
            [&](const std::string& prefix, const nlohmann::json& node) {
                for (auto it = node.begin(); it != node.end(); ++it) {
                    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
                    if (it->is_object()) {
                        vectors(key, *it);
                    } else if (it->is_array() && !it->empty()) {
                        if (out.find("\nvector,index,value\n") == std::string::npos) out += "vector,index,value\n";
                        long idx = 1;
                        for (const auto& v : *it) out += key + "," + std::to_string(idx++) + "," + v.dump() + "\n";
                    }
                }
            };
        vectors("", body);
        return out;
    }

    std::string serialize(const std::string& format) const { return format == "csv" ? to_csv() : to_json(); }
};

inline nlohmann::json config_echo(const RunConfig& cfg) {
    nlohmann::json j;
    j["command"] = cfg.command;
    if (!cfg.model_path.empty()) j["model"] = cfg.model_path;
    if (!cfg.family.empty()) {
        j["family"] = cfg.family;
        nlohmann::json params;
        if (cfg.family == "feedback-chain") {
            params["p"] = cfg.p;
            params["r"] = cfg.r;
            params["w"] = cfg.w;
        } else {
            params["p"] = cfg.p;
            params["c"] = cfg.c;
        }
        j["params"] = params;
    }
    if (cfg.trunc > 0) j["trunc"] = cfg.trunc;
    j["tol"] = cfg.tol;
    j["series_tol"] = cfg.series_tol;
    if (cfg.command == "simulate") {
        j["seed"] = cfg.seed;
        j["paths"] = cfg.paths;
        j["horizon"] = cfg.horizon;
        if (cfg.t > 0.0) j["t"] = cfg.t;
        if (cfg.i0 > 0) j["i0"] = cfg.i0;
    }
    if (cfg.k > 0) j["k"] = cfg.k;
    return j;
}

}  // namespace qsd
