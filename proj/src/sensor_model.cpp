#include "spintrack/sensor_model.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <string>

#include "spintrack/errors.hpp"

namespace spintrack {

namespace {

// Relative slack within which a PSD violation of the transverse block is
// treated as integration round-off and repaired instead of reported.
constexpr double kPsdRepairBand = 1.0;
constexpr double kPsdAbsTol = 1e-9;
constexpr double kNegativeVarianceTol = 1e-12;

bool all_finite(const AtomicMoments& m) {
    return std::isfinite(m.mean_x) && std::isfinite(m.mean_y) && std::isfinite(m.var_x) &&
           std::isfinite(m.var_y) && std::isfinite(m.var_z) && std::isfinite(m.cov_xy);
}

}  // namespace

void SensorParams::validate() const {
    auto fail = [](const std::string& msg) { throw DomainError("sensor: " + msg); };
    if (!(n_mean > 0.0)) fail("n_mean must be positive");
    if (!(n_sigma >= 0.0)) fail("n_sigma must be non-negative");
    if (!(meas_strength >= 0.0)) fail("meas_strength must be non-negative");
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) fail("efficiency must lie in [0, 1]");
    if (!(kappa_loc >= 0.0)) fail("kappa_loc must be non-negative");
    if (!(kappa_coll >= 0.0)) fail("kappa_coll must be non-negative");
    if (!std::isfinite(omega_bar)) fail("omega_bar must be finite");
    if (!(dt > 0.0)) fail("dt must be positive");
    if (dt * meas_strength * n_mean > kStabilityGuard) {
        fail("dt * M * n_mean = " + std::to_string(dt * meas_strength * n_mean) +
             " exceeds the stability guard " + std::to_string(kStabilityGuard) + "; reduce dt");
    }
}

AtomicMoments css_initial_state(double n_atoms) {
    if (!(n_atoms > 0.0)) throw DomainError("css_initial_state: n_atoms must be positive");
    return {std::sqrt(n_atoms) / 2.0, 0.0, 0.0, 0.25, 0.25, 0.0};
}

AtomicMoments atomic_drift(const AtomicMoments& s, double w, const SensorParams& p, double n) {
    const double kc = p.kappa_coll;
    const double kl = p.kappa_loc;
    const double m = p.meas_strength;
    const double emn = p.efficiency * m * n;

    AtomicMoments d;
    d.mean_x = -w * s.mean_y - 0.5 * (kc + 2.0 * kl + m) * s.mean_x;
    d.mean_y = w * s.mean_x - 0.5 * (kc + 2.0 * kl) * s.mean_y;
    d.var_x = -2.0 * w * s.cov_xy + kc * (s.var_y + s.mean_y * s.mean_y - s.var_x) +
              kl * (0.5 - 2.0 * s.var_x) +
              m * (s.var_z - s.var_x - 4.0 * p.efficiency * n * s.cov_xy * s.cov_xy);
    d.var_y = 2.0 * w * s.cov_xy + kc * (s.var_x + s.mean_x * s.mean_x - s.var_y) +
              kl * (0.5 - 2.0 * s.var_y) - 4.0 * emn * s.var_y * s.var_y;
    d.var_z = m * (s.var_x + s.mean_x * s.mean_x - s.var_z);
    d.cov_xy = w * (s.var_x - s.var_y) - kc * (2.0 * s.cov_xy + s.mean_x * s.mean_y) -
               2.0 * kl * s.cov_xy - 0.5 * m * s.cov_xy * (1.0 + 8.0 * p.efficiency * n * s.var_y);
    return d;
}

MeanDiffusion atomic_diffusion(const AtomicMoments& s, const SensorParams& p, double n) {
    const double g = 2.0 * std::sqrt(p.efficiency * p.meas_strength * n);
    return {g * s.cov_xy, g * s.var_y};
}

AtomicMoments step_truth(const AtomicMoments& s, double omega_drive, double u, double dW,
                         const SensorParams& p, double n, IntegrationCounters* counters,
                         std::int64_t step_index) {
    const double dt = p.dt;
    const AtomicMoments d = atomic_drift(s, omega_drive + u, p, n);
    const MeanDiffusion g = atomic_diffusion(s, p, n);

    AtomicMoments next{
        s.mean_x + d.mean_x * dt + g.mean_x * dW,
        s.mean_y + d.mean_y * dt + g.mean_y * dW,
        s.var_x + d.var_x * dt,
        s.var_y + d.var_y * dt,
        s.var_z + d.var_z * dt,
        s.cov_xy + d.cov_xy * dt,
    };

    if (!all_finite(next)) {
        throw IntegrationError("moment integration produced non-finite values; reduce dt", step_index);
    }
    if (next.var_x < -kNegativeVarianceTol || next.var_y < -kNegativeVarianceTol ||
        next.var_z < -kNegativeVarianceTol) {
        throw IntegrationError("moment integration produced a negative variance; reduce dt", step_index);
    }
    next.var_x = std::max(next.var_x, 0.0);
    next.var_y = std::max(next.var_y, 0.0);
    next.var_z = std::max(next.var_z, 0.0);

    const double det_bound = next.var_x * next.var_y;
    const double c2 = next.cov_xy * next.cov_xy;
    if (c2 > det_bound) {
        if (c2 > (1.0 + kPsdRepairBand) * det_bound + kPsdAbsTol) {
            throw IntegrationError("transverse covariance left the PSD cone; reduce dt", step_index);
        }
        next.cov_xy = std::copysign(std::sqrt(det_bound), next.cov_xy);
        if (counters) ++counters->psd_repairs;
    }
    return next;
}

double photocurrent_sample(const AtomicMoments& s, double dW, const SensorParams& p, double n) {
    const double eta = p.efficiency;
    return 2.0 * eta * std::sqrt(p.meas_strength * n) * s.mean_y * p.dt + std::sqrt(eta) * dW;
}

double t2_time(const SensorParams& p) {
    const double rate = 0.5 * p.kappa_coll + p.kappa_loc;
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / rate;
}

double squeezing_parameter(const AtomicMoments& s, double n) {
    if (s.mean_x == 0.0) throw DomainError("squeezing undefined for vanishing mean_x");
    return n * s.var_y / (s.mean_x * s.mean_x);
}

double squeezing_db(const AtomicMoments& s, double n) {
    return 10.0 * std::log10(squeezing_parameter(s, n));
}

double measurement_strength_from_probe(double probe_power, double detuning, double beam_area_cm2,
                                       double oscillator_strength, double wavelength) {
    if (detuning == 0.0) throw DomainError("measurement strength diverges at zero detuning");
    if (!(probe_power > 0.0 && detuning > 0.0 && beam_area_cm2 > 0.0 && oscillator_strength > 0.0 &&
          wavelength > 0.0)) {
        throw DomainError("measurement_strength_from_probe: inputs must be positive");
    }
    constexpr double c_cm = 2.99792458e10;           // cm/s
    constexpr double c_m = 2.99792458e8;             // m/s
    constexpr double electron_radius_cm = 2.82e-13;  // cm
    constexpr double planck = 6.62607015e-34;        // J s

    const double g = c_cm * electron_radius_cm * oscillator_strength / beam_area_cm2 / detuning;
    const double probe_freq = c_m / wavelength - detuning;
    if (!(probe_freq > 0.0)) throw DomainError("detuning exceeds the optical frequency");
    const double photon_flux = probe_power / (planck * probe_freq);
    return g * g * photon_flux / 4.0;
}

}  // namespace spintrack
