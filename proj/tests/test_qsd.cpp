#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qsd/qsd_solve.hpp"

using namespace qsd;

namespace {
ModelFamilySpec feedback(state_t n) { return {ModelFamily::feedback_chain, 0.3, 0.2, 0.5, 0.0, n}; }
ModelFamilySpec halfline(state_t n, double p = 0.25) { return {ModelFamily::bd_halfline, p, 0.0, 0.0, 1.0, n}; }
ModelFamilySpec line(state_t n) { return {ModelFamily::bd_line, 0.4, 0.0, 0.0, 2.0, n}; }

QsdResult pipeline_qsd(const GeneratorModel& m, double lambda) {
    auto exit = exit_kernel(embedded_chain(m, lambda), exit_states(m).all());
    return assemble_qsd(m, lambda, exit);
}
}  // namespace

TEST_CASE("invariant measure closed forms") {
    auto g = oracles::g2();
    const double lam_g = decay_parameter(g).lambda;
    auto xg = invariant_measure(g, lam_g, 1);
    CHECK(xg.values[0] == doctest::Approx(0.6180340).epsilon(1e-7));
    CHECK(xg.values[1] == doctest::Approx(1.0000000).epsilon(1e-7));
    CHECK(xg.converged);

    auto fb = make_family(feedback(200));
    double lam_f = decay_parameter(fb).lambda;
    auto xf = invariant_measure(fb, lam_f, 1);
    CHECK(xf.values[0] == doctest::Approx(1.0 / (1.0 - lam_f - 0.2)).epsilon(1e-10));
    CHECK(xf.values[0] == doctest::Approx(1.9570).epsilon(5e-4));
    double ratio = 0.3 / (1.0 - lam_f);
    for (state_t i = 2; i <= 30; ++i)
        CHECK(xf.values[static_cast<size_t>(i) - 1] / xf.values[static_cast<size_t>(i) - 2] ==
              doctest::Approx(ratio).epsilon(1e-10));

    // geometric ratio sqrt(p/q) near the anchor on the two-sided chain
    auto bl = make_family(line(200));
    double lam_l = decay_parameter(bl).lambda;  // the window's own decay parameter
    auto xl = invariant_measure(bl, lam_l, 201);
    double want = std::sqrt(0.4 / 0.6);
    for (state_t i = 191; i <= 210; ++i) {
        double got = xl.values[static_cast<size_t>(i)] / xl.values[static_cast<size_t>(i) - 1];
        CHECK(got == doctest::Approx(want).epsilon(1e-3));
    }
}

TEST_CASE("invariant measure guards the shift") {
    auto g = oracles::g2();
    CHECK_THROWS_AS(invariant_measure(g, 1.0, 1), error);  // min q_i = 1
}

TEST_CASE("invariant vector closed forms") {
    auto g = oracles::g2();
    const double lam_g = decay_parameter(g).lambda;
    auto yg = invariant_vector(g, lam_g, {1}, {1.0});
    CHECK(yg.values[0] == doctest::Approx(1.0));
    CHECK(yg.values[1] == doctest::Approx(1.6180340).epsilon(1e-7));

    auto fb = make_family(feedback(200));
    double lam_f = decay_parameter(fb).lambda;
    auto ef = exit_kernel(embedded_chain(fb, lam_f), {1});
    auto yf = invariant_vector(fb, lam_f, {1}, ef.v);
    CHECK(yf.values[0] == doctest::Approx(1.0));
    double expect = 0.7 / (0.7 - lam_f);
    CHECK(expect == doctest::Approx(1.70335).epsilon(1e-3));
    for (state_t i = 2; i <= 60; ++i) CHECK(yf.values[static_cast<size_t>(i) - 1] == doctest::Approx(expect).epsilon(1e-6));

    // invariant vector ratio sqrt(q/p) on the two-sided chain
    auto bl = make_family(line(200));
    double lam_l = decay_parameter(bl).lambda;
    auto yl = invariant_vector(bl, lam_l, {201}, {1.0});
    double want = std::sqrt(0.6 / 0.4);
    for (state_t i = 191; i <= 210; ++i) {
        double got = yl.values[static_cast<size_t>(i)] / yl.values[static_cast<size_t>(i) - 1];
        CHECK(got == doctest::Approx(want).epsilon(1e-3));
    }
}

TEST_CASE("assemble_qsd on the fixtures") {
    auto g = oracles::g2();
    const double lam_g = decay_parameter(g).lambda;
    auto rg = pipeline_qsd(g, lam_g);
    CHECK(rg.u[0] == doctest::Approx(0.3819660).epsilon(1e-8));
    CHECK(rg.u[1] == doctest::Approx(0.6180340).epsilon(1e-8));
    CHECK(rg.m_h == doctest::Approx(0.6180340).epsilon(1e-8));
    CHECK(std::abs(rg.residuals.sum_error) <= 1e-10);
    CHECK(rg.residuals.max_abs <= 1e-10);

    auto m3 = oracles::m3();
    auto r3 = pipeline_qsd(m3, decay_parameter(m3).lambda);
    CHECK(r3.u[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(r3.u[1] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(r3.m_h == doctest::Approx(1.0).epsilon(1e-10));

    auto fb = make_family(feedback(300));
    double lam_f = decay_parameter(fb).lambda;
    auto rf = pipeline_qsd(fb, lam_f);
    CHECK(rf.u[0] == doctest::Approx(lam_f / 0.5).epsilon(1e-10));
    CHECK(rf.u[0] == doctest::Approx(0.578045).epsilon(1e-5));
    double ratio = 0.3 / (1.0 - lam_f);
    CHECK(ratio == doctest::Approx(0.421954).epsilon(1e-5));
    for (state_t i = 2; i <= 25; ++i)
        CHECK(rf.u[static_cast<size_t>(i) - 1] / rf.u[static_cast<size_t>(i) - 2] ==
              doctest::Approx(ratio).epsilon(1e-8));
    for (state_t i = 1; i <= 50; ++i) {
        double formula = std::pow(ratio, i - 1) * lam_f / 0.5;
        CHECK(std::abs(rf.u[static_cast<size_t>(i) - 1] - formula) <= 1e-8);
    }
    CHECK(rf.m_h == doctest::Approx(0.5 / (0.8 - lam_f)).epsilon(1e-9));
    CHECK(std::abs(rf.residuals.sum_error) <= 1e-9);
}

TEST_CASE("assemble refuses transient windows, direct solve covers them") {
    auto bh = make_family(halfline(150));
    DecayOptions sched;
    sched.truncation_schedule = {37, 75, 150};
    double lam_inf = decay_parameter(bh, sched).lambda;  // family-level shift: transient here
    auto exit = exit_kernel(embedded_chain(bh, lam_inf), exit_states(bh).all());
    CHECK(exit.mass < 1.0 - 1e-3);
    CHECK_THROWS_AS(assemble_qsd(bh, lam_inf, exit), error);
    try {
        assemble_qsd(bh, lam_inf, exit);
    } catch (const error& e) {
        CHECK(e.code() == errc::not_recurrent);
    }

    double lam_w = decay_parameter(bh).lambda;  // window eigenvalue: direct route applies
    auto direct = solve_qsd_direct(bh, lam_w);
    CHECK(direct.residuals.max_abs <= 1e-9);
    CHECK(direct.residuals.min_u >= 0.0);
    double sp = std::sqrt(0.25), sq = std::sqrt(0.75);
    auto formula = [&](state_t j) { return j * std::pow(sp, j - 1) * (sq - sp) * (sq - sp) / std::pow(sq, j + 1); };
    double l1 = 0.0;
    for (state_t j = 1; j <= 100; ++j) l1 += std::abs(direct.u[static_cast<size_t>(j) - 1] - formula(j));
    CHECK(l1 <= 8e-3);
    CHECK(direct.u[0] == doctest::Approx(0.178633).epsilon(2e-2));
}

TEST_CASE("empty exit set is rejected") {
    auto bl = make_family(line(20));
    double lam = decay_parameter(bl).lambda;
    auto t = embedded_chain(bl, lam);
    CHECK_THROWS_AS(exit_kernel(t, {}), error);
}

TEST_CASE("moment normalizer closed forms") {
    auto g = oracles::g2();
    const double lam = decay_parameter(g).lambda;
    auto exit = exit_kernel(embedded_chain(g, lam), {1});
    CHECK(moment_mh(g, lam, exit) == doctest::Approx(1.0 / (2.0 - lam)).epsilon(1e-12));
    CHECK(moment_mh(g, lam, exit) == doctest::Approx(0.6180340).epsilon(1e-7));

    auto m3 = oracles::m3();
    auto e3 = exit_kernel(embedded_chain(m3, 1.0), {1, 2});
    CHECK(moment_mh(m3, 1.0, e3) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("two-path equivalence on recurrent fixtures") {
    std::mt19937_64 gen(2024);
    std::vector<GeneratorModel> models;
    models.push_back(oracles::g2());
    models.push_back(oracles::m3());
    models.push_back(make_family(feedback(150)));
    models.push_back(oracles::random_model(gen, 25));
    models.push_back(oracles::random_model(gen, 60));
    for (const auto& m : models) {
        double lam = decay_parameter(m).lambda;
        auto a = pipeline_qsd(m, lam);
        auto d = solve_qsd_direct(m, lam);
        for (size_t i = 0; i < a.u.size(); ++i) CHECK(std::abs(a.u[i] - d.u[i]) <= 1e-7);
    }
}

TEST_CASE("verify_qsd residual reporting") {
    auto g = oracles::g2();
    const double lam = oracles::g2_lambda();
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<double> u{1.0 / (phi * phi), 1.0 / phi};  // golden closed form
    auto good = verify_qsd(g, u, lam);
    CHECK(good.max_abs <= 1e-10);
    CHECK(std::abs(good.sum_error) <= 1e-12);

    auto bad = verify_qsd(g, {0.5, 0.5}, lam);
    CHECK(bad.max_abs >= 0.1);

    auto ss = oracles::single_state(2.0);
    auto exact = verify_qsd(ss, {1.0}, 2.0);
    CHECK(exact.max_abs == 0.0);
}

TEST_CASE("scaling all rates scales lambda and leaves u fixed") {
    auto base = oracles::g2();
    double lam0 = decay_parameter(base).lambda;
    auto u0 = pipeline_qsd(base, lam0).u;
    for (double c : {0.5, 3.0}) {
        auto scaled = build_model({{1, 2, c}, {1, 0, c}, {2, 1, c}});
        double lam = decay_parameter(scaled).lambda;
        CHECK(lam == doctest::Approx(c * lam0).epsilon(1e-10));
        auto u = pipeline_qsd(scaled, lam).u;
        for (size_t i = 0; i < u.size(); ++i) CHECK(u[i] == doctest::Approx(u0[i]).epsilon(1e-9));
    }
}

TEST_CASE("lambda * sum x equals M_H") {
    std::mt19937_64 gen(7);
    std::vector<GeneratorModel> models;
    models.push_back(oracles::g2());
    models.push_back(oracles::m3());
    models.push_back(make_family(feedback(200)));
    models.push_back(oracles::random_model(gen, 40));
    for (const auto& m : models) {
        double lam = decay_parameter(m).lambda;
        auto r = pipeline_qsd(m, lam);
        double sx = 0.0;
        for (double x : r.x) sx += x;
        CHECK(lam * sx == doctest::Approx(r.m_h).epsilon(1e-8));
    }
}

TEST_CASE("positivity of x, y, u on the computed window") {
    auto fb = make_family(feedback(150));
    double lam = decay_parameter(fb).lambda;
    auto r = pipeline_qsd(fb, lam);
    auto x = invariant_measure(fb, lam, 1);
    auto ef = exit_kernel(embedded_chain(fb, lam), {1});
    auto y = invariant_vector(fb, lam, {1}, ef.v);
    for (state_t i = 1; i <= fb.size(); ++i) {
        CHECK(r.u[static_cast<size_t>(i) - 1] > 0.0);
        CHECK(x.values[static_cast<size_t>(i) - 1] > 0.0);
        CHECK(y.values[static_cast<size_t>(i) - 1] > 0.0);
    }
}

TEST_CASE("summability diagnostic separates the families") {
    auto fb = make_family(feedback(300));
    double lam_f = decay_parameter(fb).lambda;
    auto rf = pipeline_qsd(fb, lam_f);
    auto sf = summability_diagnostic(fb, rf.x, 1);
    CHECK(sf.summable);
    CHECK(sf.tail_ratio < 1e-6);

    auto bl = make_family(line(150));
    double lam_l = decay_parameter(bl).lambda;
    auto xl = invariant_measure(bl, lam_l, 151);
    auto sl = summability_diagnostic(bl, xl.values, 151);
    CHECK_FALSE(sl.summable);
    CHECK(sl.tail_ratio > 0.1);
}
