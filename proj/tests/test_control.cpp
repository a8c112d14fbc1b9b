#include <doctest.h>

#include <cmath>

#include "spintrack/config.hpp"
#include "spintrack/control.hpp"
#include "spintrack/experiment.hpp"

using namespace spintrack;

TEST_CASE("feedback law") {
    CHECK(lqr_control(5.0, 0.1, LqrParams{1.0}) == doctest::Approx(-5.1).epsilon(1e-15));
    CHECK(lqr_control(5.0, 123.0, LqrParams{0.0}) == -5.0);
    CHECK(lqr_control(0.0, 0.0, LqrParams{}) == 0.0);
    CHECK_THROWS_AS(LqrParams{-1.0}.validate(), DomainError);
}

TEST_CASE("closed loop cancels the field up to the estimation error") {
    ScenarioConfig cfg = preset("fig2");
    cfg.horizon = 0.004;
    cfg.record_stride = 10;
    for (std::int64_t index = 0; index < 3; ++index) {
        const TrajectoryRecord r = run_trajectory(cfg, index);
        double residual = 0.0, err2 = 0.0, drive = 0.0;
        int count = 0;
        for (std::size_t i = 0; i < r.t.size(); ++i) {
            if (r.t[i] < 1e-3) continue;
            const double field = r.omega_true[i] + cfg.sensor.omega_bar;
            residual += std::abs(field + r.u[i]);
            drive += std::abs(field);
            err2 += (r.omega_est[i] - r.omega_true[i]) * (r.omega_est[i] - r.omega_true[i]);
            ++count;
        }
        residual /= count;
        drive /= count;
        const double rms_err = std::sqrt(err2 / count);
        MESSAGE("trajectory " << index << ": mean |omega + u| " << residual << ", rms error " << rms_err);
        CHECK(residual < 3.0 * rms_err);
        CHECK(residual < 1e-4 * drive);
    }
}
