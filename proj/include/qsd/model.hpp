#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qsd/errors.hpp"

namespace qsd {

using state_t = std::int32_t;  // states of E are 1..N; 0 is the absorbing cemetery

struct RateEntry {
    state_t target = 0;  // in E (never 0 here; killing is stored separately)
    double rate = 0.0;
};

// Provenance of a truncated model: which family it came from and which rows
// had outgoing mass redirected to killing by the truncation window.
struct TruncationMeta {
    std::string family;                   // "feedback_chain", "bd_line", "bd_halfline" or "" for generic cuts
    std::vector<double> params;           // family parameters in declaration order
    state_t level = 0;                    // truncation level N
    std::vector<state_t> redirected_rows; // rows perturbed by the cut
    std::vector<std::int64_t> labels;     // labels[i-1] = external label of state i (bd_line: Z)
};

// Conservative Q-matrix over E = {1..N} with an implicit absorbing state 0.
// Immutable after construction; safe to share across threads.
class GeneratorModel {
public:
    GeneratorModel() = default;

    state_t size() const { return n_; }
    const std::vector<RateEntry>& row(state_t i) const { return rows_[static_cast<size_t>(i) - 1]; }
    double kill(state_t i) const { return kill_[static_cast<size_t>(i) - 1]; }
    double total_rate(state_t i) const { return total_[static_cast<size_t>(i) - 1]; }
    double min_total_rate() const { return min_total_; }
    double max_total_rate() const { return max_total_; }
    const std::optional<TruncationMeta>& truncation() const { return trunc_; }

    std::int64_t label(state_t i) const {
        if (trunc_ && !trunc_->labels.empty()) return trunc_->labels[static_cast<size_t>(i) - 1];
        return i;
    }

    // Max |i-j| over stored entries; 1 for birth-death chains.
    state_t bandwidth() const { return bandwidth_; }

    std::size_t entry_count() const { return entry_count_; }

    // Conservativeness defect q_i - sum_j q_ij - q_i0; zero up to summation rounding.
    double row_defect(state_t i) const {
        double s = kill(i);
        for (const auto& e : row(i)) s += e.rate;
        return total_rate(i) - s;
    }

    static GeneratorModel from_rows(std::vector<std::vector<RateEntry>> rows, std::vector<double> kill,
                                    std::optional<TruncationMeta> meta = std::nullopt);

private:
    state_t n_ = 0;
    std::vector<std::vector<RateEntry>> rows_;
    std::vector<double> kill_;
    std::vector<double> total_;
    double min_total_ = 0.0;
    double max_total_ = 0.0;
    state_t bandwidth_ = 0;
    std::size_t entry_count_ = 0;
    std::optional<TruncationMeta> trunc_;
};

// Exit states H = {i : q_i0 > 0}. Members created by a truncation cut are kept
// apart from the model's own ones so callers can see which part of H is an
// artifact of the window.
struct ExitSet {
    std::vector<state_t> members;         // natural exit states, ascending
    std::vector<state_t> boundary;        // exit states introduced by truncation, ascending
    bool boundary_artifacts = false;      // true iff boundary is nonempty

    std::vector<state_t> all() const {
        std::vector<state_t> out;
        out.reserve(members.size() + boundary.size());
        std::merge(members.begin(), members.end(), boundary.begin(), boundary.end(), std::back_inserter(out));
        return out;
    }
    bool empty() const { return members.empty() && boundary.empty(); }
};

enum class ModelFamily { feedback_chain, bd_line, bd_halfline };

struct ModelFamilySpec {
    ModelFamily family;
    double p = 0.0;
    double r = 0.0;  // feedback_chain only
    double w = 0.0;  // feedback_chain only
    double c = 0.0;  // bd families only
    state_t level = 0;

    void validate() const {
        if (level < 2) raise(errc::bad_parameters, "truncation level must be >= 2");
        if (!(p > 0.0 && p < 1.0)) raise(errc::bad_parameters, "need 0 < p < 1");
        switch (family) {
            case ModelFamily::feedback_chain:
                if (!(w > 0.0)) raise(errc::bad_parameters, "need w > 0");
                if (r < 0.0) raise(errc::bad_parameters, "need r >= 0");
                if (std::abs(p + r + w - 1.0) > 1e-12) raise(errc::bad_parameters, "need p + r + w = 1");
                break;
            case ModelFamily::bd_line:
            case ModelFamily::bd_halfline:
                if (!(c > 0.0)) raise(errc::bad_parameters, "need c > 0");
                break;
        }
    }

    // Decay parameter of the untruncated family.
    double closed_form_lambda() const {
        const double q = 1.0 - p;
        switch (family) {
            case ModelFamily::feedback_chain:
                return 2.0 * q * w / (1.0 + w + std::sqrt((1.0 - w) * (1.0 - w) + 4.0 * p * w));
            case ModelFamily::bd_line:
            case ModelFamily::bd_halfline:
                return (1.0 - 2.0 * std::sqrt(p * q)) * c;
        }
        return 0.0;
    }
};

inline const char* family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::feedback_chain: return "feedback-chain";
        case ModelFamily::bd_line: return "bd-line";
        case ModelFamily::bd_halfline: return "bd-halfline";
    }
    return "?";
}

namespace detail {

// Strong connectivity of the support graph on E: every state reachable from 1
// and 1 reachable from every state.
inline bool strongly_connected(const std::vector<std::vector<RateEntry>>& rows) {
    const state_t n = static_cast<state_t>(rows.size());
    if (n <= 1) return true;
    std::vector<std::vector<state_t>> rev(static_cast<size_t>(n));
    for (state_t i = 1; i <= n; ++i)
        for (const auto& e : rows[static_cast<size_t>(i) - 1])
            if (e.rate > 0.0) rev[static_cast<size_t>(e.target) - 1].push_back(i);

    auto bfs = [n](auto&& neighbors) {
        std::vector<char> seen(static_cast<size_t>(n), 0);
        std::vector<state_t> stack{1};
        seen[0] = 1;
        state_t count = 1;
        while (!stack.empty()) {
            state_t v = stack.back();
            stack.pop_back();
            for (state_t w : neighbors(v)) {
                if (!seen[static_cast<size_t>(w) - 1]) {
                    seen[static_cast<size_t>(w) - 1] = 1;
                    ++count;
                    stack.push_back(w);
                }
            }
        }
        return count == n;
    };

    bool fwd = bfs([&rows](state_t v) {
        std::vector<state_t> out;
        for (const auto& e : rows[static_cast<size_t>(v) - 1])
            if (e.rate > 0.0) out.push_back(e.target);
        return out;
    });
    if (!fwd) return false;
    return bfs([&rev](state_t v) { return rev[static_cast<size_t>(v) - 1]; });
}

}  // namespace detail

inline GeneratorModel GeneratorModel::from_rows(std::vector<std::vector<RateEntry>> rows, std::vector<double> kill,
                                                std::optional<TruncationMeta> meta) {
    GeneratorModel m;
    m.n_ = static_cast<state_t>(rows.size());
    if (m.n_ == 0) raise(errc::bad_parameters, "model has no states");
    if (kill.size() != rows.size()) raise(errc::bad_parameters, "kill vector size mismatch");

    for (state_t i = 1; i <= m.n_; ++i) {
        auto& row = rows[static_cast<size_t>(i) - 1];
        std::sort(row.begin(), row.end(), [](const RateEntry& a, const RateEntry& b) { return a.target < b.target; });
        for (size_t k = 0; k < row.size(); ++k) {
            const auto& e = row[k];
            if (e.target < 1 || e.target > m.n_)
                raise(errc::bad_parameters, "entry target out of range at state " + std::to_string(i));
            if (e.target == i) raise(errc::self_loop, "self loop at state " + std::to_string(i));
            if (e.rate < 0.0) raise(errc::negative_rate, "negative rate at state " + std::to_string(i));
            if (k > 0 && row[k - 1].target == e.target)
                raise(errc::duplicate_entry, "duplicate entry (" + std::to_string(i) + "," + std::to_string(e.target) + ")");
            m.bandwidth_ = std::max(m.bandwidth_, static_cast<state_t>(std::abs(e.target - i)));
            m.entry_count_++;
        }
        if (kill[static_cast<size_t>(i) - 1] < 0.0)
            raise(errc::negative_rate, "negative kill rate at state " + std::to_string(i));
    }
    if (!detail::strongly_connected(rows))
        raise(errc::not_irreducible, "support graph of E is not strongly connected");

    m.rows_ = std::move(rows);
    m.kill_ = std::move(kill);
    m.total_.resize(static_cast<size_t>(m.n_));
    for (state_t i = 1; i <= m.n_; ++i) {
        double q = m.kill_[static_cast<size_t>(i) - 1];
        for (const auto& e : m.rows_[static_cast<size_t>(i) - 1]) q += e.rate;
        m.total_[static_cast<size_t>(i) - 1] = q;
    }
    m.min_total_ = *std::min_element(m.total_.begin(), m.total_.end());
    m.max_total_ = *std::max_element(m.total_.begin(), m.total_.end());
    if (m.min_total_ <= 0.0) raise(errc::bad_parameters, "every state needs a positive total rate");
    m.trunc_ = std::move(meta);
    return m;
}

// Build from a triplet list; j = 0 marks a killing rate.
inline GeneratorModel build_model(const std::vector<std::tuple<state_t, state_t, double>>& entries,
                                  std::optional<TruncationMeta> meta = std::nullopt) {
    state_t n = 0;
    for (const auto& [i, j, rate] : entries) {
        if (i < 1) raise(errc::bad_parameters, "source state must be >= 1");
        if (j < 0) raise(errc::bad_parameters, "target state must be >= 0");
        n = std::max(n, std::max(i, j));
    }
    if (n == 0) raise(errc::bad_parameters, "empty entry list");

    std::vector<std::vector<RateEntry>> rows(static_cast<size_t>(n));
    std::vector<double> kill(static_cast<size_t>(n), 0.0);
    std::vector<char> kill_seen(static_cast<size_t>(n), 0);
    for (const auto& [i, j, rate] : entries) {
        if (rate < 0.0)
            raise(errc::negative_rate, "negative rate on (" + std::to_string(i) + "," + std::to_string(j) + ")");
        if (j == 0) {
            if (kill_seen[static_cast<size_t>(i) - 1])
                raise(errc::duplicate_entry, "duplicate kill entry at state " + std::to_string(i));
            kill_seen[static_cast<size_t>(i) - 1] = 1;
            kill[static_cast<size_t>(i) - 1] = rate;
        } else {
            rows[static_cast<size_t>(i) - 1].push_back({j, rate});
        }
    }
    return GeneratorModel::from_rows(std::move(rows), std::move(kill), std::move(meta));
}

inline ExitSet exit_states(const GeneratorModel& model) {
    ExitSet h;
    std::vector<state_t> redirected;
    if (model.truncation()) redirected = model.truncation()->redirected_rows;
    std::sort(redirected.begin(), redirected.end());
    for (state_t i = 1; i <= model.size(); ++i) {
        if (model.kill(i) > 0.0) {
            if (std::binary_search(redirected.begin(), redirected.end(), i))
                h.boundary.push_back(i);
            else
                h.members.push_back(i);
        }
    }
    h.boundary_artifacts = !h.boundary.empty();
    return h;
}

// The three builtin families from the worked examples, truncated to a finite
// window with all mass leaving the window redirected to killing. That keeps Q
// conservative, so the truncated decay parameter decreases toward the family
// value as the window grows.
inline GeneratorModel make_family(const ModelFamilySpec& spec) {
    spec.validate();
    const double q = 1.0 - spec.p;
    TruncationMeta meta;
    meta.family = family_name(spec.family);
    meta.level = spec.level;

    switch (spec.family) {
        case ModelFamily::feedback_chain: {
            meta.params = {spec.p, spec.r, spec.w};
            const state_t n = spec.level;
            std::vector<std::vector<RateEntry>> rows(static_cast<size_t>(n));
            std::vector<double> kill(static_cast<size_t>(n), 0.0);
            rows[0].push_back({2, spec.p});
            kill[0] = spec.w;
            for (state_t i = 2; i <= n; ++i) {
                rows[static_cast<size_t>(i) - 1].push_back({1, q});
                if (i < n)
                    rows[static_cast<size_t>(i) - 1].push_back({i + 1, spec.p});
                else
                    kill[static_cast<size_t>(i) - 1] = spec.p;  // redirected birth rate
            }
            meta.redirected_rows = {n};
            return GeneratorModel::from_rows(std::move(rows), std::move(kill), meta);
        }
        case ModelFamily::bd_halfline: {
            meta.params = {spec.p, spec.c};
            const state_t n = spec.level;
            std::vector<std::vector<RateEntry>> rows(static_cast<size_t>(n));
            std::vector<double> kill(static_cast<size_t>(n), 0.0);
            for (state_t i = 1; i <= n; ++i) {
                if (i > 1) rows[static_cast<size_t>(i) - 1].push_back({i - 1, q * spec.c});
                if (i < n) rows[static_cast<size_t>(i) - 1].push_back({i + 1, spec.p * spec.c});
            }
            kill[0] = q * spec.c;
            kill[static_cast<size_t>(n) - 1] += spec.p * spec.c;  // redirected birth rate
            meta.redirected_rows = {n};
            return GeneratorModel::from_rows(std::move(rows), std::move(kill), meta);
        }
        case ModelFamily::bd_line: {
            meta.params = {spec.p, spec.c};
            const state_t n = 2 * spec.level + 1;  // labels -N..N mapped to 1..2N+1
            std::vector<std::vector<RateEntry>> rows(static_cast<size_t>(n));
            std::vector<double> kill(static_cast<size_t>(n), 0.0);
            for (state_t i = 1; i <= n; ++i) {
                if (i > 1) rows[static_cast<size_t>(i) - 1].push_back({i - 1, q * spec.c});
                if (i < n) rows[static_cast<size_t>(i) - 1].push_back({i + 1, spec.p * spec.c});
            }
            kill[0] = q * spec.c;                                 // mass leaving through -N
            kill[static_cast<size_t>(n) - 1] = spec.p * spec.c;   // mass leaving through +N
            meta.redirected_rows = {1, n};
            meta.labels.resize(static_cast<size_t>(n));
            for (state_t i = 1; i <= n; ++i) meta.labels[static_cast<size_t>(i) - 1] = i - spec.level - 1;
            return GeneratorModel::from_rows(std::move(rows), std::move(kill), meta);
        }
    }
    raise(errc::bad_parameters, "unknown family");
}

// Cut states > n, redirecting the removed outgoing mass to killing.
inline GeneratorModel truncate(const GeneratorModel& model, state_t n) {
    if (n < 2) raise(errc::bad_parameters, "truncation level must be >= 2");
    if (n >= model.size()) return model;

    std::vector<std::vector<RateEntry>> rows(static_cast<size_t>(n));
    std::vector<double> kill(static_cast<size_t>(n), 0.0);
    std::vector<state_t> redirected;
    for (state_t i = 1; i <= n; ++i) {
        double extra = 0.0;
        for (const auto& e : model.row(i)) {
            if (e.target <= n)
                rows[static_cast<size_t>(i) - 1].push_back(e);
            else
                extra += e.rate;
        }
        kill[static_cast<size_t>(i) - 1] = model.kill(i) + extra;
        if (extra > 0.0) redirected.push_back(i);
    }
    if (!detail::strongly_connected(rows))
        raise(errc::truncation_breaks_irreducibility, "window 1.." + std::to_string(n) + " is not irreducible");

    TruncationMeta meta;
    if (model.truncation()) {
        meta = *model.truncation();
        if (!meta.labels.empty()) meta.labels.resize(static_cast<size_t>(n));
        for (state_t r : meta.redirected_rows)
            if (r <= n) redirected.push_back(r);
        std::sort(redirected.begin(), redirected.end());
        redirected.erase(std::unique(redirected.begin(), redirected.end()), redirected.end());
    }
    meta.level = n;
    meta.redirected_rows = std::move(redirected);
    return GeneratorModel::from_rows(std::move(rows), std::move(kill), meta);
}

}  // namespace qsd
