#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles/moment_oracle.hpp"
#include "oracles/variance_ode_oracle.hpp"
#include "spintrack/errors.hpp"
#include "spintrack/sensor_model.hpp"

using namespace spintrack;

namespace {

SensorParams quiet(double n) {
    SensorParams p;
    p.n_mean = n;
    p.n_sigma = 0.0;
    p.meas_strength = 0.0;
    p.kappa_loc = 0.0;
    p.kappa_coll = 0.0;
    return p;
}

oracle::Moments as_array(const AtomicMoments& m) { return {m.mean_x, m.mean_y, m.var_x, m.var_y, m.var_z, m.cov_xy}; }

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("coherent initial state") {
    const AtomicMoments four = css_initial_state(4.0);
    CHECK(four == AtomicMoments{1.0, 0.0, 0.0, 0.25, 0.25, 0.0});
    CHECK(css_initial_state(1.0) == AtomicMoments{0.5, 0.0, 0.0, 0.25, 0.25, 0.0});
    CHECK(css_initial_state(1e13).mean_x == doctest::Approx(1.5811388e6).epsilon(1e-7));
    CHECK_THROWS_AS(css_initial_state(0.0), DomainError);
    CHECK_THROWS_AS(css_initial_state(-3.0), DomainError);
}

TEST_CASE("drift matches an independent transcription") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        SensorParams p;
        p.n_mean = std::pow(10.0, 3.0 + 10.0 * u01(gen));
        p.meas_strength = std::pow(10.0, -10.0 + 3.0 * u01(gen));
        p.efficiency = u01(gen);
        p.kappa_loc = 200.0 * u01(gen);
        p.kappa_coll = 1e-3 * u01(gen);
        const double n = p.n_mean * (0.9 + 0.2 * u01(gen));
        AtomicMoments s{std::sqrt(n) / 2 * u01(gen), std::sqrt(n) * 1e-2 * (u01(gen) - 0.5), u01(gen),
                        0.3 * u01(gen), u01(gen), 0.1 * (u01(gen) - 0.5)};
        const double w = 100.0 * (u01(gen) - 0.5);

        const AtomicMoments d = atomic_drift(s, w, p, n);
        const oracle::Rates r{p.kappa_coll, p.kappa_loc, p.meas_strength, p.efficiency, n};
        const oracle::Moments ref = oracle::drift(as_array(s), w, r);
        const oracle::Moments got = as_array(d);
        for (int k = 0; k < 6; ++k) {
            const double scale = std::max(std::abs(ref[k]), 1e-12 * (std::abs(s.mean_x) + 1.0));
            CHECK(std::abs(got[k] - ref[k]) <= 1e-12 * scale * 10);
        }
        const auto g = atomic_diffusion(s, p, n);
        const auto gref = oracle::diffusion(as_array(s), r);
        CHECK(g.mean_x == doctest::Approx(gref[0]).epsilon(1e-12));
        CHECK(g.mean_y == doctest::Approx(gref[1]).epsilon(1e-12));
    }
}

TEST_CASE("local dephasing alone decays the polarization at 1/T2") {
    SensorParams p = quiet(1e13);
    p.kappa_loc = 100.0;
    const AtomicMoments css = css_initial_state(1e13);
    CHECK(atomic_drift(css, 0.0, p, 1e13).mean_x == doctest::Approx(-100.0 * css.mean_x).epsilon(1e-15));
}

TEST_CASE("backaction diffusion coefficients") {
    SensorParams p = quiet(1e13);
    p.meas_strength = 1e-8;
    const MeanDiffusion css = atomic_diffusion(css_initial_state(1e13), p, 1e13);
    CHECK(css.mean_x == 0.0);
    CHECK(css.mean_y == doctest::Approx(2.0 * std::sqrt(1e5) * 0.25).epsilon(1e-14));

    p.efficiency = 0.0;
    const MeanDiffusion none = atomic_diffusion(css_initial_state(1e13), p, 1e13);
    CHECK(none.mean_x == 0.0);
    CHECK(none.mean_y == 0.0);

    p.efficiency = 1.0;
    AtomicMoments s = css_initial_state(1e13);
    s.cov_xy = 0.1;
    s.var_y = 0.2;
    const MeanDiffusion g = atomic_diffusion(s, p, 1e13);
    CHECK(g.mean_x == doctest::Approx(63.2456).epsilon(1e-6));
    CHECK(g.mean_y == doctest::Approx(126.491).epsilon(1e-6));
}

TEST_CASE("truth step") {
    SUBCASE("rate-free coherent state is unchanged") {
        const SensorParams p = quiet(1e13);
        const AtomicMoments s = css_initial_state(1e13);
        CHECK(step_truth(s, 5.0, -5.0, 0.0, p, 1e13) == s);
    }
    SUBCASE("backaction squeezes V_Y by an order of magnitude within 0.1 ms") {
        SensorParams p;
        p.n_sigma = 0.0;
        const double n = 1e13;
        AtomicMoments s = css_initial_state(n);
        const double v0 = s.var_y;
        for (int k = 0; k < 1000; ++k) s = step_truth(s, 0.0, 0.0, 0.0, p, n);
        CHECK(s.var_y < v0 / 10.0);
        CHECK(s.var_y > v0 / 20.0);
    }
    SUBCASE("an oversized step raises an integration error carrying the step index") {
        SensorParams p;
        p.dt = 1e-4;  // dt M N = 10, far beyond the guard
        try {
            step_truth(css_initial_state(1e13), 0.0, 0.0, 0.0, p, 1e13, nullptr, 17);
            FAIL("expected IntegrationError");
        } catch (const IntegrationError& e) {
            CHECK(e.step() == 17);
        }
    }
    SUBCASE("slightly non-PSD transverse block is clamped and counted") {
        const SensorParams p = quiet(100.0);
        AtomicMoments s{5.0, 0.0, 1.0, 1.0, 1.0, 1.0 + 1e-8};
        IntegrationCounters c;
        const AtomicMoments next = step_truth(s, 0.0, 0.0, 0.0, p, 100.0, &c);
        CHECK(c.psd_repairs == 1);
        CHECK(next.cov_xy * next.cov_xy <= next.var_x * next.var_y);
    }
}

TEST_CASE("strong convergence under path-sharing step refinement") {
    // Coarse paths reuse the summed fine increments (Brownian bridge refinement).
    SensorParams p;
    p.n_sigma = 0.0;
    p.meas_strength = 1e-8;
    const double n = 1e13, w = 300.0, horizon = 2e-4;
    const int finest = 6;  // reference level
    const int fine_steps = static_cast<int>(std::lround(horizon / 1e-7)) << finest;
    std::vector<double> err(finest, 0.0);
    for (int path = 0; path < 8; ++path) {
        std::mt19937_64 gen(100 + path);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double fine_dt = horizon / fine_steps;
        std::vector<double> dw(static_cast<std::size_t>(fine_steps));
        for (double& v : dw) v = std::sqrt(fine_dt) * normal(gen);
        auto endpoint = [&](int level) {
            const int group = 1 << (finest - level);
            SensorParams q = p;
            q.dt = fine_dt * group;
            AtomicMoments s = css_initial_state(n);
            for (int k = 0; k < fine_steps; k += group) {
                double inc = 0.0;
                for (int j = 0; j < group; ++j) inc += dw[static_cast<std::size_t>(k + j)];
                s = step_truth(s, w, 0.0, inc, q, n);
            }
            return s.mean_y;
        };
        const double ref = endpoint(finest);
        for (int l = 0; l < finest; ++l) err[static_cast<std::size_t>(l)] += std::abs(endpoint(l) - ref) / 8.0;
    }
    const double order = std::log2(err[0] / err[3]) / 3.0;
    MESSAGE("estimated strong order " << order);
    CHECK(order > 0.4);
    CHECK(order < 1.5);
}

TEST_CASE("photocurrent increment") {
    SensorParams p = quiet(1e13);
    p.meas_strength = 1e-8;
    p.dt = 1e-7;
    AtomicMoments s = css_initial_state(1e13);
    CHECK(photocurrent_sample(s, 3e-4, p, 1e13) == 3e-4);
    s.mean_y = 0.25;
    CHECK(photocurrent_sample(s, 0.0, p, 1e13) == doctest::Approx(158.114 * p.dt).epsilon(1e-6));

    s.mean_y = 0.0;
    p.efficiency = 0.6;
    std::mt19937_64 gen(3);
    std::normal_distribution<double> normal(0.0, std::sqrt(p.dt));
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double y = photocurrent_sample(s, normal(gen), p, 1e13);
        sum += y;
        sum2 += y * y;
    }
    const double var = sum2 / n - (sum / n) * (sum / n);
    const double expected = p.efficiency * p.dt;
    CHECK(std::abs(var - expected) <= 3.0 * expected * std::sqrt(2.0 / n));
}

TEST_CASE("photocurrent and mean_y share the backaction increment") {
    SensorParams p;
    p.n_sigma = 0.0;
    p.efficiency = 0.7;
    const double n = 1e13;
    const AtomicMoments s = css_initial_state(n);
    const AtomicMoments drift_only = step_truth(s, 0.0, 0.0, 0.0, p, n);
    std::mt19937_64 gen(11);
    std::normal_distribution<double> normal(0.0, std::sqrt(p.dt));
    const int count = 200000;
    double sxy = 0.0, sx = 0.0, sy = 0.0;
    for (int i = 0; i < count; ++i) {
        const double dw = normal(gen);
        const double y = photocurrent_sample(s, dw, p, n);
        const double kick = step_truth(s, 0.0, 0.0, dw, p, n).mean_y - drift_only.mean_y;
        sxy += y * kick;
        sx += y;
        sy += kick;
    }
    const double cov = sxy / count - (sx / count) * (sy / count);
    const double expected = 2.0 * std::sqrt(p.efficiency) * std::sqrt(p.efficiency * p.meas_strength * n) * s.var_y * p.dt;
    CHECK(std::abs(cov / expected - 1.0) <= 3.0 * std::sqrt(2.0 / count));
}

TEST_CASE("T2") {
    SensorParams p = quiet(1e13);
    p.kappa_loc = 100.0;
    CHECK(t2_time(p) == doctest::Approx(0.01).epsilon(1e-15));
    p.kappa_loc = 0.0;
    p.kappa_coll = 200.0;
    CHECK(t2_time(p) == doctest::Approx(0.01).epsilon(1e-15));
    p.kappa_loc = 100.0;
    p.kappa_coll = 1e-5;
    CHECK(t2_time(p) * 1e3 == doctest::Approx(9.9999995).epsilon(1e-10));
    CHECK(std::isinf(t2_time(quiet(1.0))));
}

TEST_CASE("squeezing parameter") {
    for (double n : {1.0, 1e4, 1e13}) CHECK(squeezing_db(css_initial_state(n), n) == doctest::Approx(0.0).epsilon(1e-12));
    AtomicMoments s = css_initial_state(100.0);
    s.mean_x = 0.0;
    CHECK_THROWS_AS(squeezing_db(s, 100.0), DomainError);
}

TEST_CASE("deterministic squeezing follows the scalar variance Riccati equation") {
    // Richardson extrapolation of the Euler endpoint removes its O(dt) error.
    SensorParams p;
    p.n_sigma = 0.0;
    p.meas_strength = 1e-9;
    p.kappa_loc = 100.0;
    p.kappa_coll = 0.0;
    const double n = 1e13, horizon = 5e-4;
    auto euler = [&](double dt) {
        SensorParams q = p;
        q.dt = dt;
        AtomicMoments s = css_initial_state(n);
        const int steps = static_cast<int>(std::lround(horizon / dt));
        for (int k = 0; k < steps; ++k) s = step_truth(s, 0.0, 0.0, 0.0, q, n);
        return squeezing_parameter(s, n);
    };
    const double extrapolated = 2.0 * euler(1e-9) - euler(2e-9);
    const AtomicMoments css = css_initial_state(n);
    const oracle::ReducedState ref =
        oracle::integrate_reduced({css.mean_x, css.var_y}, horizon, p.kappa_loc, p.meas_strength, p.efficiency, n);
    const double xi2 = n * ref.var_y / (ref.mean_x * ref.mean_x);
    CHECK(rel(extrapolated, xi2) < 1e-6);
    CHECK(xi2 < 0.5);
}

TEST_CASE("measurement strength from probe parameters") {
    const double area = 0.0503, f = 0.34, lambda = 794.8e-9;
    const double lo = measurement_strength_from_probe(0.5e-3, 64e9, area, f, lambda);
    const double hi = measurement_strength_from_probe(2e-3, 24e9, area, f, lambda);
    MESSAGE("M range " << lo << " .. " << hi);
    // Quoted as roughly 1e-10 .. 1e-8 Hz; accept a factor of 5 at either end.
    CHECK(lo > 1e-10 / 5);
    CHECK(lo < 1e-10 * 5);
    CHECK(hi > 1e-8 / 5);
    CHECK(hi < 1e-8 * 5);
    const double m1 = measurement_strength_from_probe(1e-3, 40e9, area, f, lambda);
    CHECK(measurement_strength_from_probe(2e-3, 40e9, area, f, lambda) == doctest::Approx(2.0 * m1).epsilon(1e-12));
    CHECK(measurement_strength_from_probe(1e-3, 80e9, area, f, lambda) == doctest::Approx(m1 / 4.0).epsilon(1e-3));
    CHECK_THROWS_AS(measurement_strength_from_probe(1e-3, 0.0, area, f, lambda), DomainError);
}

TEST_CASE("sensor parameter validation") {
    SensorParams p;
    CHECK_NOTHROW(p.validate());
    p.dt = 2e-6;  // dt M N = 0.2
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = SensorParams{};
    p.efficiency = 1.5;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = SensorParams{};
    p.n_mean = 0.0;
    CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("V_Z relaxes toward V_X + <X>^2 at rate M") {
    SensorParams p = quiet(100.0);
    p.meas_strength = 2.0;
    AtomicMoments s{3.0, 0.0, 0.5, 0.25, 0.0, 0.0};
    const double target = s.var_x + s.mean_x * s.mean_x;
    for (double vz : {0.0, 5.0, 9.0, 12.0}) {
        s.var_z = vz;
        const double rate = atomic_drift(s, 0.0, p, 100.0).var_z;
        CHECK(rate == doctest::Approx(p.meas_strength * (target - vz)));
    }
}

TEST_CASE("variances are noise-independent without collective dephasing") {
    SensorParams p;
    p.n_sigma = 0.0;
    const double n = 1e13;
    AtomicMoments a = css_initial_state(n), b = a;
    std::mt19937_64 ga(1), gb(2);
    std::normal_distribution<double> normal(0.0, std::sqrt(p.dt));
    for (int k = 0; k < 5000; ++k) {
        a = step_truth(a, 40.0, -40.0, normal(ga), p, n);
        b = step_truth(b, 40.0, -40.0, normal(gb), p, n);
    }
    CHECK(a.mean_y != b.mean_y);
    CHECK(a.var_x == b.var_x);
    CHECK(a.var_y == b.var_y);
    CHECK(a.var_z == b.var_z);
    CHECK(a.cov_xy == b.cov_xy);
}
