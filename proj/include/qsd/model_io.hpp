#pragma once

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsd/model.hpp"

namespace qsd {

// One entry per line: "<i> <j> <rate>", j = 0 meaning killing; '#' starts a
// comment. Rates travel as decimal text, never as binary floats.

inline std::string format_rate(double r) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", r);
    // trim to the shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof probe, "%.*g", prec, r);
        if (std::strtod(probe, nullptr) == r) return probe;
    }
    return buf;
}

inline std::vector<std::tuple<state_t, state_t, double>> parse_triplets(std::istream& in,
                                                                        const std::string& origin = "<input>") {
    std::vector<std::tuple<state_t, state_t, double>> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        long long i, j;
        std::string rate_text;
        if (!(ls >> i)) continue;  // blank line
        if (!(ls >> j >> rate_text))
            raise(errc::parse_error, origin + ":" + std::to_string(lineno) + ": expected '<i> <j> <rate>'");
        char* end = nullptr;
        double rate = std::strtod(rate_text.c_str(), &end);
        if (end == rate_text.c_str() || *end != '\0')
            raise(errc::parse_error, origin + ":" + std::to_string(lineno) + ": bad rate '" + rate_text + "'");
        std::string trailing;
        if (ls >> trailing)
            raise(errc::parse_error, origin + ":" + std::to_string(lineno) + ": trailing tokens");
        if (i < 1 || i > INT32_MAX || j < 0 || j > INT32_MAX)
            raise(errc::parse_error, origin + ":" + std::to_string(lineno) + ": state index out of range");
        entries.emplace_back(static_cast<state_t>(i), static_cast<state_t>(j), rate);
    }
    return entries;
}

inline std::vector<std::tuple<state_t, state_t, double>> model_triplets(const GeneratorModel& m) {
    std::vector<std::tuple<state_t, state_t, double>> out;
    for (state_t i = 1; i <= m.size(); ++i) {
        for (const auto& e : m.row(i)) out.emplace_back(i, e.target, e.rate);
        if (m.kill(i) > 0.0) out.emplace_back(i, 0, m.kill(i));
    }
    return out;
}

inline std::string serialize_triplets(const GeneratorModel& m) {
    std::ostringstream out;
    out << "# qmatrix-triplets-v1  states=" << m.size() << "\n";
    for (const auto& [i, j, rate] : model_triplets(m)) out << i << " " << j << " " << format_rate(rate) << "\n";
    return out.str();
}

// FNV-1a 64 over the canonical triplet listing; stable across platforms.
inline std::string model_digest(const GeneratorModel& m) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    mix("qmatrix-triplets-v1\n");
    for (const auto& [i, j, rate] : model_triplets(m))
        mix(std::to_string(i) + " " + std::to_string(j) + " " + format_rate(rate) + "\n");
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016" PRIx64, h);
    return buf;
}

inline GeneratorModel model_from_triplet_text(const std::string& text, const std::string& origin = "<input>") {
    std::istringstream in(text);
    auto entries = parse_triplets(in, origin);
    if (entries.empty()) raise(errc::parse_error, origin + ": no entries");
    return build_model(entries);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(errc::io_error, "cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
    out << content;
    if (!out) raise(errc::io_error, "short write to " + path);
}

// Loads either the bare triplet format or a JSON manifest
//   { "format": "qmatrix-triplets-v1", "states": N, "entries": <path or [[i,j,rate],...]> }
// where rate may be a number or decimal string.
inline GeneratorModel load_model(const std::string& path) {
    std::string text = read_file(path);
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            raise(errc::parse_error, path + ": " + e.what());
        }
        if (!doc.contains("format") || doc["format"] != "qmatrix-triplets-v1")
            raise(errc::unsupported_format, path + ": expected format qmatrix-triplets-v1");
        if (!doc.contains("entries")) raise(errc::parse_error, path + ": manifest lacks 'entries'");

        std::vector<std::tuple<state_t, state_t, double>> entries;
        if (doc["entries"].is_string()) {
            std::string epath = doc["entries"].get<std::string>();
            if (!epath.empty() && epath[0] != '/') {
                auto slash = path.find_last_of('/');
                if (slash != std::string::npos) epath = path.substr(0, slash + 1) + epath;
            }
            std::istringstream in(read_file(epath));
            entries = parse_triplets(in, epath);
        } else if (doc["entries"].is_array()) {
            for (const auto& row : doc["entries"]) {
                if (!row.is_array() || row.size() != 3) raise(errc::parse_error, path + ": entry rows need 3 fields");
                double rate;
                if (row[2].is_string()) {
                    const std::string& s = row[2].get_ref<const std::string&>();
                    char* end = nullptr;
                    rate = std::strtod(s.c_str(), &end);
                    if (end == s.c_str() || *end != '\0') raise(errc::parse_error, path + ": bad rate '" + s + "'");
                } else if (row[2].is_number()) {
                    rate = row[2].get<double>();
                } else {
                    raise(errc::parse_error, path + ": rate must be number or decimal string");
                }
                entries.emplace_back(row[0].get<state_t>(), row[1].get<state_t>(), rate);
            }
        } else {
            raise(errc::parse_error, path + ": 'entries' must be a path or a list");
        }
        if (entries.empty()) raise(errc::parse_error, path + ": no entries");
        auto model = build_model(entries);
        if (doc.contains("states") && doc["states"].get<state_t>() != model.size())
            raise(errc::parse_error, path + ": manifest 'states' does not match the entry list");
        return model;
    }
    return model_from_triplet_text(text, path);
}

inline void save_model(const GeneratorModel& m, const std::string& path) { write_file(path, serialize_triplets(m)); }

}  // namespace qsd
