#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "qsd/model.hpp"

namespace qsd {

struct SimConfig {
    long paths = 100000;
    double horizon = 50.0;
    std::uint64_t seed = 1;
    int workers = 1;
    std::vector<double> time_grid;  // default derived from horizon
};

// splitmix64: per-path streams are derived by hashing (seed, path index), so
// the ensemble is a pure function of (seed, paths) no matter how many workers
// run or how batches are scheduled.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) : s_(state) {}

    std::uint64_t next() {
        std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log1p(-u01()) / rate; }

private:
    std::uint64_t s_;
};

inline SplitMix64 path_rng(std::uint64_t seed, std::uint64_t path_id) {
    SplitMix64 g(seed ^ (0xA0761D6478BD642Full * (path_id + 1)));
    std::uint64_t s0 = g.next();
    std::uint64_t s1 = g.next();
    return SplitMix64(s0 ^ (s1 << 1));
}

// Per-state cumulative jump tables for the categorical draw; kill occupies the
// tail of [0, q_i).
struct JumpTable {
    state_t n = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<double> cum;
    std::vector<state_t> target;
    std::vector<double> total;

    explicit JumpTable(const GeneratorModel& m) {
        n = m.size();
        row_ptr.assign(static_cast<size_t>(n) + 1, 0);
        total.resize(static_cast<size_t>(n));
        for (state_t i = 1; i <= n; ++i) {
            double acc = 0.0;
            for (const auto& e : m.row(i)) {
                acc += e.rate;
                cum.push_back(acc);
                target.push_back(e.target);
            }
            row_ptr[static_cast<size_t>(i)] = cum.size();
            total[static_cast<size_t>(i) - 1] = m.total_rate(i);
        }
    }

    // next state, 0 meaning absorbed
    state_t step(SplitMix64& rng, state_t s) const {
        double r = rng.u01() * total[static_cast<size_t>(s) - 1];
        std::size_t b = row_ptr[static_cast<size_t>(s) - 1];
        std::size_t e = row_ptr[static_cast<size_t>(s)];
        for (std::size_t k = b; k < e; ++k)
            if (r < cum[k]) return target[k];
        return 0;  // the kill tail (or a rounding sliver when kill = 0 is impossible here: cum ends at q_i only for kill-free rows)
    }
};

struct PathSample {
    state_t initial = 0;
    std::vector<double> jump_times;
    std::vector<state_t> states;  // states entered at the matching jump times
    double absorption_time = 0.0;
    bool censored = false;
};

inline PathSample sample_path(const JumpTable& table, state_t i0, SplitMix64 rng,
                              double horizon) {
    PathSample p;
    p.initial = i0;
    double t = 0.0;
    state_t s = i0;
    for (;;) {
        double dt = rng.exponential(table.total[static_cast<size_t>(s) - 1]);
        if (t + dt > horizon) {
            p.absorption_time = horizon;
            p.censored = true;
            return p;
        }
        t += dt;
        state_t nxt = table.step(rng, s);
        p.jump_times.push_back(t);
        p.states.push_back(nxt);
        if (nxt == 0) {
            p.absorption_time = t;
            return p;
        }
        s = nxt;
    }
}

namespace detail {

// state at time t (0 if absorbed by then); shares the walk logic of sample_path
// without storing the trajectory
inline state_t state_at_time(const JumpTable& table, state_t i0, SplitMix64& rng, double t) {
    double clock = 0.0;
    state_t s = i0;
    for (;;) {
        clock += rng.exponential(table.total[static_cast<size_t>(s) - 1]);
        if (clock > t) return s;
        s = table.step(rng, s);
        if (s == 0) return 0;
    }
}

inline std::pair<double, bool> absorption_time(const JumpTable& table, state_t i0, SplitMix64& rng, double horizon) {
    double clock = 0.0;
    state_t s = i0;
    for (;;) {
        clock += rng.exponential(table.total[static_cast<size_t>(s) - 1]);
        if (clock > horizon) return {horizon, true};
        s = table.step(rng, s);
        if (s == 0) return {clock, false};
    }
}

constexpr int kBatches = 32;  // fixed batch count keeps reduction order independent of workers

// run fn(batch_index, path_begin, path_end) over all batches on cfg.workers threads
template <typename Fn>
void run_batches(const SimConfig& cfg, Fn&& fn) {
    const long per = (cfg.paths + kBatches - 1) / kBatches;
    std::atomic<int> next{0};
    auto work = [&]() {
        for (;;) {
            int b = next.fetch_add(1);
            if (b >= kBatches) return;
            long begin = static_cast<long>(b) * per;
            long end = std::min(cfg.paths, begin + per);
            if (begin < end) fn(b, begin, end);
        }
    };
    int w = std::max(1, cfg.workers);
    if (w == 1) {
        work();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(w));
    for (int i = 0; i < w; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
}

}  // namespace detail

struct Lambda0Estimate {
    double lambda0 = 0.0;
    double std_error = 0.0;
    double censored_fraction = 0.0;
    std::vector<std::pair<double, double>> survival;  // (t, S(t))
    std::pair<double, double> fit_window{0.0, 0.0};
    long survivors_at_end = 0;
    bool curvature_corrected = false;  // log S fitted with an extra ln(t) term
    double curvature = 0.0;            // fitted ln(t) coefficient when corrected
    double plain_lambda0 = 0.0;        // the uncorrected slope, always reported
};

namespace detail {

// least squares of y on (1, t) or (1, t, ln t); returns {-slope, c, rss}
struct SurvivalFit {
    double lambda = 0.0;
    double c = 0.0;
    double rss = 0.0;
    bool ok = false;
};

inline SurvivalFit fit_log_survival(const std::vector<double>& grid, const std::vector<double>& logS,
                                    const std::vector<size_t>& idx, bool with_curvature) {
    SurvivalFit out;
    const size_t k = with_curvature ? 3 : 2;
    if (idx.size() < k + 1) return out;
    double xtx[9] = {0}, xty[3] = {0};
    for (size_t g : idx) {
        double x[3] = {1.0, grid[g], std::log(grid[g])};
        for (size_t a = 0; a < k; ++a) {
            for (size_t b = 0; b < k; ++b) xtx[a * 3 + b] += x[a] * x[b];
            xty[a] += x[a] * logS[g];
        }
    }
    // solve the k x k normal equations by Gaussian elimination with pivoting
    double m[3][4];
    for (size_t a = 0; a < k; ++a) {
        for (size_t b = 0; b < k; ++b) m[a][b] = xtx[a * 3 + b];
        m[a][k] = xty[a];
    }
    for (size_t col = 0; col < k; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < k; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (m[piv][col] == 0.0) return out;
        if (piv != col)
            for (size_t b = 0; b <= k; ++b) std::swap(m[piv][b], m[col][b]);
        for (size_t r = 0; r < k; ++r) {
            if (r == col) continue;
            double f = m[r][col] / m[col][col];
            for (size_t b = col; b <= k; ++b) m[r][b] -= f * m[col][b];
        }
    }
    double beta[3] = {0, 0, 0};
    for (size_t a = 0; a < k; ++a) beta[a] = m[a][k] / m[a][a];
    out.lambda = -beta[1];
    out.c = with_curvature ? -beta[2] : 0.0;
    for (size_t g : idx) {
        double fitted = 0.0;
        double x[3] = {1.0, grid[g], std::log(grid[g])};
        for (size_t a = 0; a < k; ++a) fitted += beta[a] * x[a];
        out.rss += (logS[g] - fitted) * (logS[g] - fitted);
    }
    out.ok = true;
    return out;
}

}  // namespace detail

// Exponential decay rate of the survival curve: least-squares fit of log S(t)
// over the latter half of the grid (the pre-asymptotic head is discarded),
// standard error by batch means. Survival curves of transient or null windows
// carry an algebraic t^-c prefactor on top of exp(-lambda t); an ln(t) term is
// added to the fit when it clearly earns its keep, otherwise the plain slope
// is reported.
inline Lambda0Estimate estimate_lambda0(const GeneratorModel& model, state_t i0, const SimConfig& cfg) {
    ExitSet h = exit_states(model);
    if (h.empty()) raise(errc::bad_parameters, "no killing: survival does not decay");
    std::vector<double> grid = cfg.time_grid;
    if (grid.empty()) {
        for (int g = 1; g <= 16; ++g) grid.push_back(cfg.horizon * static_cast<double>(g) / 16.0);
    }
    if (!(grid.front() > 0.0) || !std::is_sorted(grid.begin(), grid.end()))
        raise(errc::invalid_argument, "time grid must be positive and ascending");
    const size_t G = grid.size();
    JumpTable table(model);

    std::vector<std::vector<long>> surv(detail::kBatches, std::vector<long>(G, 0));
    std::vector<long> censored(detail::kBatches, 0);
    detail::run_batches(cfg, [&](int b, long begin, long end) {
        for (long p = begin; p < end; ++p) {
            SplitMix64 rng = path_rng(cfg.seed, static_cast<std::uint64_t>(p));
            auto [tau, cens] = detail::absorption_time(table, i0, rng, cfg.horizon);
            if (cens) censored[static_cast<size_t>(b)]++;
            for (size_t g = 0; g < G; ++g)
                if (cens || tau > grid[g]) surv[static_cast<size_t>(b)][g]++;
        }
    });

    Lambda0Estimate out;
    std::vector<long> total(G, 0);
    long cens_total = 0;
    for (int b = 0; b < detail::kBatches; ++b) {
        cens_total += censored[static_cast<size_t>(b)];
        for (size_t g = 0; g < G; ++g) total[g] += surv[static_cast<size_t>(b)][g];
    }
    out.censored_fraction = static_cast<double>(cens_total) / static_cast<double>(cfg.paths);
    out.survivors_at_end = total[G - 1];
    for (size_t g = 0; g < G; ++g)
        out.survival.emplace_back(grid[g], static_cast<double>(total[g]) / static_cast<double>(cfg.paths));

    const size_t g0 = G / 2;
    std::vector<size_t> usable;
    for (size_t g = g0; g < G; ++g)
        if (total[g] > 0) usable.push_back(g);
    if (usable.size() < 3 || total[usable.back()] < 10)
        raise(errc::too_few_survivors, "survival grid extends beyond the usable sample");
    out.fit_window = {grid[usable.front()], grid[usable.back()]};

    std::vector<double> logS(G, 0.0);
    for (size_t g = 0; g < G; ++g)
        logS[g] = total[g] > 0 ? std::log(static_cast<double>(total[g]) / static_cast<double>(cfg.paths)) : 0.0;
    auto plain = detail::fit_log_survival(grid, logS, usable, false);
    auto curved = detail::fit_log_survival(grid, logS, usable, true);
    out.plain_lambda0 = plain.lambda;
    // the ln(t) term must cut the residual in half and be a real power to count
    out.curvature_corrected = curved.ok && plain.ok && curved.rss < 0.5 * plain.rss && std::abs(curved.c) >= 0.5;
    out.lambda0 = out.curvature_corrected ? curved.lambda : plain.lambda;
    out.curvature = out.curvature_corrected ? curved.c : 0.0;

    // batch means for the standard error of the selected estimator
    std::vector<double> batch_lambdas;
    const long per = (cfg.paths + detail::kBatches - 1) / detail::kBatches;
    for (int b = 0; b < detail::kBatches; ++b) {
        long begin = static_cast<long>(b) * per;
        long count = std::min(cfg.paths, begin + per) - begin;
        if (count <= 0) continue;
        std::vector<double> ls(G, 0.0);
        std::vector<size_t> idx;
        for (size_t g : usable) {
            long c = surv[static_cast<size_t>(b)][g];
            if (c > 0) {
                ls[g] = std::log(static_cast<double>(c) / static_cast<double>(count));
                idx.push_back(g);
            }
        }
        auto fit = detail::fit_log_survival(grid, ls, idx, out.curvature_corrected);
        if (fit.ok) batch_lambdas.push_back(fit.lambda);
    }
    if (batch_lambdas.size() >= 4) {
        double mean = 0.0;
        for (double s : batch_lambdas) mean += s;
        mean /= static_cast<double>(batch_lambdas.size());
        double var = 0.0;
        for (double s : batch_lambdas) var += (s - mean) * (s - mean);
        var /= static_cast<double>(batch_lambdas.size() - 1);
        out.std_error = std::sqrt(var / static_cast<double>(batch_lambdas.size()));
    } else {
        out.std_error = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

struct EmpiricalDistribution {
    double t = 0.0;
    std::vector<double> freq;  // over E, sums to 1 among survivors
    long survivors = 0;
    long paths = 0;
    double max_std_error = 0.0;
};

// Conditional law of X_t given survival, from i0.
inline EmpiricalDistribution yaglom_estimate(const GeneratorModel& model, state_t i0, double t, const SimConfig& cfg) {
    if (!(t > 0.0) || t > cfg.horizon) raise(errc::invalid_argument, "need 0 < t <= horizon");
    JumpTable table(model);
    const size_t n = static_cast<size_t>(model.size());
    std::vector<std::vector<long>> counts(detail::kBatches, std::vector<long>(n, 0));
    detail::run_batches(cfg, [&](int b, long begin, long end) {
        for (long p = begin; p < end; ++p) {
            SplitMix64 rng = path_rng(cfg.seed, static_cast<std::uint64_t>(p));
            state_t s = detail::state_at_time(table, i0, rng, t);
            if (s != 0) counts[static_cast<size_t>(b)][static_cast<size_t>(s) - 1]++;
        }
    });

    EmpiricalDistribution out;
    out.t = t;
    out.paths = cfg.paths;
    out.freq.assign(n, 0.0);
    std::vector<long> total(n, 0);
    for (int b = 0; b < detail::kBatches; ++b)
        for (size_t i = 0; i < n; ++i) total[i] += counts[static_cast<size_t>(b)][i];
    for (size_t i = 0; i < n; ++i) out.survivors += total[i];
    if (out.survivors < 25) raise(errc::too_few_survivors, "fewer than 25 paths alive at t");
    for (size_t i = 0; i < n; ++i) {
        out.freq[i] = static_cast<double>(total[i]) / static_cast<double>(out.survivors);
        double se = std::sqrt(out.freq[i] * (1.0 - out.freq[i]) / static_cast<double>(out.survivors));
        out.max_std_error = std::max(out.max_std_error, se);
    }
    return out;
}

struct InvarianceCheck {
    double tv = 0.0;
    double ci95 = 0.0;
    long survivors = 0;
    long paths = 0;
};

// Start from u itself; the survivor law at any t should reproduce u. TV with a
// binomial-sampling confidence half-width.
inline InvarianceCheck qsd_invariance_check(const GeneratorModel& model, const std::vector<double>& u, double t,
                                            const SimConfig& cfg) {
    const size_t n = static_cast<size_t>(model.size());
    if (u.size() != n) raise(errc::invalid_argument, "u has the wrong length");
    double su = 0.0;
    for (double x : u) su += x;
    if (std::abs(su - 1.0) > 1e-6) raise(errc::invalid_argument, "u must sum to 1");
    std::vector<double> ucum(n, 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        acc += u[i] / su;
        ucum[i] = acc;
    }
    JumpTable table(model);
    std::vector<std::vector<long>> counts(detail::kBatches, std::vector<long>(n, 0));
    detail::run_batches(cfg, [&](int b, long begin, long end) {
        for (long p = begin; p < end; ++p) {
            SplitMix64 rng = path_rng(cfg.seed, static_cast<std::uint64_t>(p));
            double r = rng.u01();
            size_t lo = 0, hi = n - 1;
            while (lo < hi) {
                size_t mid = (lo + hi) / 2;
                if (r < ucum[mid])
                    hi = mid;
                else
                    lo = mid + 1;
            }
            state_t s = detail::state_at_time(table, static_cast<state_t>(lo + 1), rng, t);
            if (s != 0) counts[static_cast<size_t>(b)][static_cast<size_t>(s) - 1]++;
        }
    });

    InvarianceCheck out;
    out.paths = cfg.paths;
    std::vector<long> total(n, 0);
    for (int b = 0; b < detail::kBatches; ++b)
        for (size_t i = 0; i < n; ++i) total[i] += counts[static_cast<size_t>(b)][i];
    for (size_t i = 0; i < n; ++i) out.survivors += total[i];
    if (out.survivors < 25) raise(errc::too_few_survivors, "fewer than 25 paths alive at t");
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double f = static_cast<double>(total[i]) / static_cast<double>(out.survivors);
        out.tv += std::abs(f - u[i] / su);
        var += f * (1.0 - f);
    }
    out.tv *= 0.5;
    out.ci95 = 1.96 * 0.5 * std::sqrt(var / static_cast<double>(out.survivors));
    return out;
}

}  // namespace qsd
