#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qsd/classify.hpp"
#include "qsd/spectral.hpp"

using namespace qsd;

namespace {
ModelFamilySpec feedback(state_t n) { return {ModelFamily::feedback_chain, 0.3, 0.2, 0.5, 0.0, n}; }
ModelFamilySpec halfline(state_t n) { return {ModelFamily::bd_halfline, 0.25, 0.0, 0.0, 1.0, n}; }
ModelFamilySpec line(state_t n) { return {ModelFamily::bd_line, 0.4, 0.0, 0.0, 2.0, n}; }
}  // namespace

TEST_CASE("embedded chain entries at the decay parameter and at zero") {
    auto g = oracles::g2();
    const double lam = oracles::g2_lambda();
    auto t = embedded_chain(g, lam);
    CHECK(t.entry(1, 2) == doctest::Approx(1.0 / (2.0 - lam)).epsilon(1e-12));
    CHECK(t.entry(1, 2) == doctest::Approx(0.6180340).epsilon(1e-6));
    CHECK(t.entry(2, 1) == doctest::Approx(1.6180340).epsilon(1e-6));
    CHECK(t.entry(1, 1) == 0.0);

    auto jump = embedded_chain(g, 0.0);
    CHECK(jump.entry(1, 2) == doctest::Approx(0.5));
    CHECK(jump.entry(2, 1) == doctest::Approx(1.0));

    try {
        embedded_chain(g, 1.5);  // min q_i = 1
        CHECK(false);
    } catch (const error& e) {
        CHECK(e.code() == errc::shift_at_or_above_min_rate);
    }
}

TEST_CASE("spectral radius closed forms on the two-state fixture") {
    auto g = oracles::g2();
    const double lam = oracles::g2_lambda();
    auto at_lambda = spectral_radius(embedded_chain(g, lam));
    CHECK(at_lambda.rho == doctest::Approx(1.0).epsilon(1e-9));
    auto at_zero = spectral_radius(embedded_chain(g, 0.0));
    CHECK(at_zero.rho == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
    CHECK(at_zero.upper - at_zero.lower <= 1e-9);
}

TEST_CASE("bd-line kernel at the family decay parameter has Perron root just below 1") {
    auto m = make_family(line(200));
    double lam = line(200).closed_form_lambda();
    auto r = spectral_radius(embedded_chain(m, lam), 1e-10);
    CHECK(r.rho >= 0.99);
    CHECK(r.rho <= 1.0 + 1e-9);
}

TEST_CASE("decay parameter: both routes hit the G2 golden value") {
    auto g = oracles::g2();
    const double lam = oracles::g2_lambda();

    DecayOptions eig;
    eig.method = DecayMethod::finite_eigen;
    auto r1 = decay_parameter(g, eig);
    CHECK(r1.lambda == doctest::Approx(lam).epsilon(1e-9));
    CHECK(r1.method == DecayMethod::finite_eigen);

    DecayOptions bis;
    bis.method = DecayMethod::bisection_on_r;
    auto r2 = decay_parameter(g, bis);
    CHECK(r2.lambda == doctest::Approx(lam).epsilon(1e-9));
    CHECK(r2.method == DecayMethod::bisection_on_r);
    CHECK(r2.bracket <= bis.tol * 1.01);

    CHECK(std::abs(r1.lambda - r2.lambda) <= 10.0 * bis.tol);
}

TEST_CASE("truncated birth-death decay matches the exact Toeplitz eigenvalue") {
    // the cut sub-generator is Toeplitz tridiagonal, so
    // lambda_N = c - 2 c sqrt(pq) cos(pi / (N+1)) exactly
    for (state_t n : {11, 50, 173}) {
        auto m = make_family(halfline(n));
        double expect = 1.0 - 2.0 * std::sqrt(0.25 * 0.75) * std::cos(M_PI / (n + 1));
        auto r = decay_parameter(m);
        CHECK(r.lambda == doctest::Approx(expect).epsilon(5e-12));
    }
    auto m = make_family(line(40));  // 81 states
    double expect = 2.0 * (1.0 - 2.0 * std::sqrt(0.24) * std::cos(M_PI / 82.0));
    CHECK(decay_parameter(m).lambda == doctest::Approx(expect).epsilon(5e-12));
}

TEST_CASE("feedback chain decay approaches the family closed form") {
    auto m = make_family(feedback(500));
    double closed = feedback(500).closed_form_lambda();
    CHECK(closed == doctest::Approx(0.2890227).epsilon(1e-6));
    auto r = decay_parameter(m);
    CHECK(r.lambda == doctest::Approx(closed).epsilon(1e-7));

    DecayOptions cf;
    cf.method = DecayMethod::closed_form;
    CHECK(decay_parameter(m, cf).lambda == doctest::Approx(closed).epsilon(1e-15));
}

TEST_CASE("single-state chain: lambda = q_1, bisection reports the boundary and falls back") {
    auto m = oracles::single_state(2.0);
    auto r = decay_parameter(m);
    CHECK(r.lambda == doctest::Approx(2.0).epsilon(1e-12));

    DecayOptions bis;
    bis.method = DecayMethod::bisection_on_r;
    auto rb = decay_parameter(m, bis);
    CHECK(rb.boundary_fallback);
    CHECK(rb.method == DecayMethod::finite_eigen);
    CHECK(rb.lambda == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("conservative chains decay at rate zero") {
    // no killing anywhere: rho(T(0)) = 1 and both routes return lambda = 0
    auto cons = build_model({{1, 2, 1.0}, {2, 3, 0.5}, {3, 1, 2.0}, {2, 1, 0.5}});
    CHECK(exit_states(cons).empty());
    DecayOptions bis;
    bis.method = DecayMethod::bisection_on_r;
    CHECK(decay_parameter(cons, bis).lambda == doctest::Approx(0.0).epsilon(1e-12));
    DecayOptions eig;
    eig.method = DecayMethod::finite_eigen;
    CHECK(std::abs(decay_parameter(cons, eig).lambda) <= 1e-10);
}

TEST_CASE("classification above the decay parameter is refused, not guessed") {
    auto g = oracles::g2();
    double lam = decay_parameter(g).lambda;
    auto v = classify(g, lam + 0.05, 1);  // return series exceeds 1 here
    CHECK(v.recurrence == Recurrence::undetermined);
    CHECK(v.f_kk_at_lambda > 1.0);
}

TEST_CASE("rho(T(x)) is nondecreasing in x") {
    for (const auto& m : {oracles::g2(), make_family(halfline(25))}) {
        double prev = -1.0;
        for (int g = 0; g <= 8; ++g) {
            double x = 0.95 * m.min_total_rate() * g / 8.0;
            auto r = spectral_radius(embedded_chain(m, x), 1e-11);
            CHECK(r.rho >= prev - 1e-10);
            prev = r.rho;
        }
    }
}

TEST_CASE("lambda_N is nonincreasing along the truncation schedule") {
    DecayOptions opts;
    opts.truncation_schedule = {20, 40, 80, 160};
    auto m = make_family(halfline(160));
    auto r = decay_parameter(m, opts);
    REQUIRE(r.truncation_curve.size() == 4);
    for (size_t i = 1; i < r.truncation_curve.size(); ++i)
        CHECK(r.truncation_curve[i].second <= r.truncation_curve[i - 1].second + 1e-14);
    // Richardson-extrapolated value lands near the family closed form
    double closed = halfline(160).closed_form_lambda();
    CHECK(r.extrapolated);
    CHECK(r.lambda == doctest::Approx(closed).epsilon(1e-5));
}

TEST_CASE("lambda stays inside [0, min q_i] everywhere") {
    for (const auto& m : {oracles::g2(), oracles::m3(), make_family(feedback(100)), make_family(halfline(60)),
                          make_family(line(30))}) {
        auto r = decay_parameter(m);
        CHECK(r.lambda >= 0.0);
        CHECK(r.lambda <= m.min_total_rate() + 1e-12);
    }
}

TEST_CASE("random-model oracle agreement between the two lambda routes") {
    std::mt19937_64 gen(12345);
    for (int n : {5, 17, 41, 88}) {
        auto m = oracles::random_model(gen, n);
        DecayOptions eig;
        eig.method = DecayMethod::finite_eigen;
        DecayOptions bis;
        bis.method = DecayMethod::bisection_on_r;
        auto r1 = decay_parameter(m, eig);
        auto r2 = decay_parameter(m, bis);
        CHECK(std::abs(r1.lambda - r2.lambda) <= 1e-8);
        auto oracle = oracles::dense_left_eigen(m);
        CHECK(std::abs(r1.lambda - oracle.lambda) <= 1e-8);
    }
}

TEST_CASE("iteration caps surface as NoConvergence") {
    auto m = make_family(line(60));
    double lam = line(60).closed_form_lambda();
    try {
        spectral_radius(embedded_chain(m, lam), 1e-14, 5);  // nowhere near enough iterations
        CHECK(false);
    } catch (const error& e) {
        CHECK(e.code() == errc::no_convergence);
    }
}

TEST_CASE("a truncation schedule needs a family-tagged model") {
    DecayOptions opts;
    opts.truncation_schedule = {10, 20};
    CHECK_THROWS_AS(decay_parameter(oracles::g2(), opts), error);
}

TEST_CASE("classification of the worked families") {
    ClassifyOptions copts;

    // finite fixture: recurrent at its own decay parameter, complete xy sum
    auto g = oracles::g2();
    auto vg = classify(g, decay_parameter(g).lambda, 1, copts);
    CHECK(vg.recurrence == Recurrence::lambda_positive_recurrent);
    CHECK(vg.f_kk_at_lambda == doctest::Approx(1.0).epsilon(1e-9));

    // feedback chain: positive recurrent
    auto fb = make_family(feedback(300));
    DecayOptions sched;
    sched.truncation_schedule = {75, 150, 300};
    auto fb_lam = decay_parameter(fb, sched);
    auto vf = classify(fb, fb_lam.lambda, 1, copts);
    CHECK(vf.recurrence == Recurrence::lambda_positive_recurrent);
    CHECK(vf.f_kk_at_lambda == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(vf.xy_tail_ratio < 1e-3);

    // bd line: null recurrent, xy mass keeps growing with the window
    auto bl = make_family(line(200));
    DecayOptions sched2;
    sched2.truncation_schedule = {50, 100, 200};
    auto bl_lam = decay_parameter(bl, sched2);
    auto vl = classify(bl, bl_lam.lambda, (bl.size() + 1) / 2, copts);
    CHECK(vl.recurrence == Recurrence::lambda_null_recurrent);
    CHECK(vl.xy_tail_ratio > 0.1);

    // bd halfline: transient with F_11 -> 1/2
    auto bh = make_family(halfline(200));
    DecayOptions sched3;
    sched3.truncation_schedule = {50, 100, 200};
    auto bh_lam = decay_parameter(bh, sched3);
    auto vh = classify(bh, bh_lam.lambda, 1, copts);
    CHECK(vh.recurrence == Recurrence::lambda_transient);
    CHECK(vh.f_kk_at_lambda == doctest::Approx(0.5).epsilon(6e-3));

    // single state: positive recurrent in closed form
    auto ss = oracles::single_state(2.0);
    CHECK(classify(ss, 2.0, 1, copts).recurrence == Recurrence::lambda_positive_recurrent);
}
