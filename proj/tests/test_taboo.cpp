#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qsd/taboo.hpp"

using namespace qsd;

namespace {
ModelFamilySpec feedback(state_t n) { return {ModelFamily::feedback_chain, 0.3, 0.2, 0.5, 0.0, n}; }
ModelFamilySpec halfline(state_t n) { return {ModelFamily::bd_halfline, 0.25, 0.0, 0.0, 1.0, n}; }
ModelFamilySpec line(state_t n) { return {ModelFamily::bd_line, 0.4, 0.0, 0.0, 2.0, n}; }

double extrapolated_lambda(const GeneratorModel& m) {
    DecayOptions opts;
    state_t level = m.truncation()->level;
    opts.truncation_schedule = {static_cast<state_t>(level / 4), static_cast<state_t>(level / 2), level};
    return decay_parameter(m, opts).lambda;
}
}  // namespace

TEST_CASE("taboo power n = 0 follows the delta convention") {
    auto g = oracles::g2();
    auto t = embedded_chain(g, oracles::g2_lambda());
    auto row_off = taboo_power(t, {1}, 2, 0);  // 2 not in H
    CHECK(row_off[1] == 1.0);
    CHECK(row_off[0] == 0.0);
    auto row_in = taboo_power(t, {1}, 1, 0);  // 1 in H
    CHECK(row_in[0] == 0.0);
    CHECK(row_in[1] == 0.0);
}

TEST_CASE("two-step taboo returns on the fixtures") {
    auto g = oracles::g2();
    const double lam = oracles::g2_lambda();
    auto t = embedded_chain(g, lam);
    auto row = taboo_power(t, {1}, 1, 2);
    CHECK(row[0] == doctest::Approx(t.entry(1, 2) * t.entry(2, 1)).epsilon(1e-14));
    CHECK(row[0] == doctest::Approx(1.0).epsilon(1e-9));

    auto fb = make_family(feedback(120));
    double lamf = extrapolated_lambda(fb);
    auto tf = embedded_chain(fb, lamf);
    auto rowf = taboo_power(tf, {1}, 1, 2);
    double expect = (0.3 / (1.0 - lamf - 0.2)) * (0.7 / (1.0 - lamf));
    CHECK(rowf[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(rowf[0] == doctest::Approx(0.578046).epsilon(1e-5));
}

TEST_CASE("taboo powers match literal path enumeration") {
    std::mt19937_64 gen(777);
    auto models = {oracles::g2(), oracles::m3(), oracles::random_model(gen, 6), oracles::random_model(gen, 8)};
    for (const auto& m : models) {
        double lam = 0.5 * decay_parameter(m).lambda;  // any shift below lambda works here
        auto t = embedded_chain(m, lam);
        std::vector<std::vector<state_t>> taboos = {{1}, {1, 2}};
        if (m.size() >= 4) taboos.push_back({2, 4});
        for (const auto& h : taboos) {
            for (state_t j : {1, 2}) {
                for (int n = 1; n <= 5; ++n) {
                    auto row = taboo_power(t, h, j, n);
                    for (state_t i = 1; i <= m.size(); ++i) {
                        double oracle = oracles::taboo_power_by_paths(m, lam, h, j, i, n);
                        CHECK(row[static_cast<size_t>(i) - 1] ==
                              doctest::Approx(oracle).epsilon(1e-12).scale(std::max(1.0, oracle)));
                    }
                }
            }
        }
    }
}

TEST_CASE("last-entry decomposition into H") {
    // kT^(n)_{k,j} = sum_{i in H\{k}} sum_{m<n} kT^(m)_{k,i} HT^(n-m)_{i,j} + HT^(n)_{k,j}
    std::mt19937_64 gen(31);
    auto models = {oracles::m3(), oracles::random_model(gen, 7)};
    for (const auto& m : models) {
        double lam = 0.5 * decay_parameter(m).lambda;
        auto t = embedded_chain(m, lam);
        std::vector<state_t> h = {1, 2};
        const state_t k = 1;
        for (int n = 1; n <= 6; ++n) {
            for (state_t j : h) {
                double lhs = taboo_power(t, {k}, k, n)[static_cast<size_t>(j) - 1];
                double rhs = taboo_power(t, h, k, n)[static_cast<size_t>(j) - 1];
                for (state_t i : h) {
                    if (i == k) continue;
                    for (int mm = 1; mm < n; ++mm)
                        rhs += taboo_power(t, {k}, k, mm)[static_cast<size_t>(i) - 1] *
                               taboo_power(t, h, i, n - mm)[static_cast<size_t>(j) - 1];
                }
                CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12).scale(std::max(1.0, lhs)));
            }
        }
    }
}

TEST_CASE("singleton series on G2 sums to 1 and stops after two steps") {
    auto g = oracles::g2();
    auto t = embedded_chain(g, oracles::g2_lambda());
    auto s = taboo_series(t, {1}, 1);
    CHECK(s.converged);
    CHECK(s.n_used == 2);
    CHECK(s.partial[0] == doctest::Approx(1.0).epsilon(1e-9));
    // feedback spot value at state 2: the direct jump only
    auto fb = make_family(feedback(120));
    double lamf = extrapolated_lambda(fb);
    auto sf = taboo_series(embedded_chain(fb, lamf), {1}, 1);
    CHECK(sf.partial[1] == doctest::Approx(0.3 / (1.0 - lamf - 0.2)).epsilon(1e-10));
    CHECK(sf.partial[1] == doctest::Approx(0.5871).epsilon(1e-3));
}

TEST_CASE("null-recurrent series reports non-convergence at nmax") {
    auto bl = make_family(line(150));
    double lam = extrapolated_lambda(bl);
    auto t = embedded_chain(bl, lam);
    auto s = taboo_series(t, {151}, 151, 1e-12, 1500);  // anchored at label 0
    CHECK_FALSE(s.converged);
    CHECK(s.n_used == 1500);
    // increments are still inside the drift transient here, so no finite
    // geometric bound exists yet; a longer run reaches the decaying regime
    CHECK(s.tail_estimate > 0.0);
    auto s2 = taboo_series(t, {151}, 151, 1e-12, 60000);
    CHECK_FALSE(s2.converged);
    CHECK(std::isfinite(s2.tail_estimate));
    CHECK(s2.tail_estimate > 0.0);
}

TEST_CASE("exit kernel on the fixtures") {
    auto g = oracles::g2();
    auto tg = embedded_chain(g, oracles::g2_lambda());
    auto ek = exit_kernel(tg, {1});
    CHECK(ek.kernel_at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ek.mu == std::vector<double>{1.0});
    CHECK(ek.mass == doctest::Approx(1.0).epsilon(1e-9));

    auto m3 = oracles::m3();
    auto t3 = embedded_chain(m3, 1.0);  // lambda = 1 for the symmetric fixture
    auto e3 = exit_kernel(t3, {1, 2});
    CHECK(e3.kernel_at(0, 0) == doctest::Approx(0.0));
    CHECK(e3.kernel_at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e3.kernel_at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e3.mu[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(e3.mu[1] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(e3.v[0] == doctest::Approx(1.0));
    CHECK(e3.v[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(e3.mass == doctest::Approx(1.0).epsilon(1e-10));

    // feedback chain, natural exit set only: the scalar kernel is F_11
    auto fb = make_family(feedback(300));
    double lamf = extrapolated_lambda(fb);
    auto ef = exit_kernel(embedded_chain(fb, lamf), {1});
    CHECK(ef.kernel_at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ef.mu == std::vector<double>{1.0});

    // with the window rim included, mu still concentrates on the natural exit
    auto h_all = exit_states(fb).all();
    auto ef2 = exit_kernel(embedded_chain(fb, lamf), h_all);
    CHECK(ef2.h.size() == 2);
    CHECK(ef2.mu[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(ef2.mass == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("mu-weighted kernel mass is 1 on recurrent fixtures") {
    std::mt19937_64 gen(99);
    for (int n : {5, 12, 30}) {
        auto m = oracles::random_model(gen, n);
        auto lam = decay_parameter(m).lambda;
        auto h = exit_states(m).all();
        auto ek = exit_kernel(embedded_chain(m, lam), h);
        CHECK(ek.mass == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("mu is reproducible from random restarts") {
    std::mt19937_64 model_gen(64);
    auto random_m = oracles::random_model(model_gen, 30);
    std::vector<std::pair<GeneratorModel, double>> cases;
    cases.emplace_back(oracles::m3(), 1.0);
    cases.emplace_back(random_m, decay_parameter(random_m).lambda);
    for (const auto& [model, lam] : cases) {
        auto ek = exit_kernel(embedded_chain(model, lam), exit_states(model).all());
        const size_t m = ek.h.size();
        if (m < 2) continue;
        auto apply = [&ek, m](const std::vector<double>& x, std::vector<double>& y) {
            y.assign(m, 0.0);
            for (size_t i = 0; i < m; ++i) {
                y[i] += x[i];
                for (size_t j = 0; j < m; ++j) y[j] += x[i] * ek.kernel_at(i, j);
            }
        };
        std::mt19937_64 gen(5);
        std::uniform_real_distribution<double> unif(0.1, 1.0);
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<double> start(m);
            for (double& s : start) s = unif(gen);
            auto pr = linalg::power_iteration(apply, m, 1e-14, 100000, &start);
            double sum = 0.0;
            for (double x : pr.vec) sum += x;
            for (size_t i = 0; i < m; ++i) CHECK(pr.vec[i] / sum == doctest::Approx(ek.mu[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("return transform closed forms") {
    auto g = oracles::g2();
    auto rg = return_transform(embedded_chain(g, oracles::g2_lambda()), 1);
    CHECK(rg.value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rg.converged);

    auto bh = make_family(halfline(200));
    double lam = extrapolated_lambda(bh);
    auto rb = return_transform(embedded_chain(bh, lam), 1, 1e-10);
    CHECK(rb.value == doctest::Approx(0.5 - 1.0 / 400.0).epsilon(3e-3));
    CHECK(rb.value == doctest::Approx(0.5).epsilon(6e-3));

    auto ss = oracles::single_state(2.0);
    auto rs = return_transform(embedded_chain(ss, 1.0), 1);
    CHECK(rs.value == 0.0);
    CHECK(rs.converged);
}

TEST_CASE("F_kk(x) is nondecreasing in x and capped at 1 at the decay parameter") {
    auto g = oracles::g2();
    double lam = decay_parameter(g).lambda;
    double prev = -1.0;
    for (int i = 0; i <= 6; ++i) {
        double x = lam * i / 6.0;
        auto f = return_transform(embedded_chain(g, x), 1);
        CHECK(f.value >= prev - 1e-13);
        prev = f.value;
    }
    CHECK(prev <= 1.0 + 1e-9);
}
