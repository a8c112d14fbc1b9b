#pragma once

#include <cstdint>

namespace spintrack {

/// Physical constants of the probed ensemble. Rates in Hz, angular
/// frequencies in rad/s, dt in seconds.
struct SensorParams {
    double n_mean = 1e13;         ///< mean atom number
    double n_sigma = 1e11;        ///< shot-to-shot std of the atom number
    double meas_strength = 1e-8;  ///< M [Hz]
    double efficiency = 1.0;      ///< detection efficiency eta in [0, 1]
    double kappa_loc = 100.0;     ///< local dephasing [Hz]
    double kappa_coll = 0.0;      ///< collective dephasing [Hz]
    double omega_bar = 0.0;       ///< nominal Larmor frequency [rad/s]
    double dt = 1e-7;             ///< integration step [s]

    /// Throws DomainError when a field is out of range or the step violates
    /// the stability guard dt * M * n_mean <= 0.1.
    void validate() const;

    friend bool operator==(const SensorParams&, const SensorParams&) = default;
};

inline constexpr double kStabilityGuard = 0.1;

/// Conditional first and second moments of the normalized collective spin
/// (X = Jx / sqrt(N), likewise Y, Z). The same layout is used for the
/// per-second rates returned by atomic_drift.
struct AtomicMoments {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double var_z = 0.0;
    double cov_xy = 0.0;

    friend bool operator==(const AtomicMoments&, const AtomicMoments&) = default;
};

/// Coefficients multiplying the measurement Wiener increment on the two means.
struct MeanDiffusion {
    double mean_x = 0.0;
    double mean_y = 0.0;
};

/// Counts of corrective actions taken by step_truth.
struct IntegrationCounters {
    std::int64_t psd_repairs = 0;
};

/// Coherent spin state polarized along x: (sqrt(N)/2, 0, 0, 1/4, 1/4, 0).
AtomicMoments css_initial_state(double n_atoms);

/// Deterministic part of the moment equations. omega_eff is the total
/// precession rate omega + u seen by the atoms.
AtomicMoments atomic_drift(const AtomicMoments& state, double omega_eff, const SensorParams& p,
                           double n_atoms);

/// Backaction coefficients 2 sqrt(eta M N) (C_xy, V_y); variances carry none.
MeanDiffusion atomic_diffusion(const AtomicMoments& state, const SensorParams& p, double n_atoms);

/// One Euler-Maruyama step of the conditional moments. The same dW must be
/// passed to photocurrent_sample for this step.
///
/// If the transverse covariance block leaves the PSD cone by a small margin
/// cov_xy is scaled back onto the boundary and counters->psd_repairs is
/// incremented. Larger violations, negative variances or non-finite values
/// raise IntegrationError tagged with step_index.
AtomicMoments step_truth(const AtomicMoments& state, double omega_drive, double u, double dW,
                         const SensorParams& p, double n_atoms, IntegrationCounters* counters = nullptr,
                         std::int64_t step_index = 0);

/// Photocurrent increment y dt = 2 eta sqrt(M N) <Y> dt + sqrt(eta) dW.
double photocurrent_sample(const AtomicMoments& state, double dW, const SensorParams& p, double n_atoms);

/// T2 = 1 / (kappa_coll / 2 + kappa_loc). Returns +infinity when both rates vanish.
double t2_time(const SensorParams& p);

/// Spin squeezing xi^2 = N var_y / mean_x^2 (equal to 1 at the CSS), in dB.
double squeezing_db(const AtomicMoments& state, double n_atoms);

/// Linear squeezing parameter xi^2 (same normalization as squeezing_db).
double squeezing_parameter(const AtomicMoments& state, double n_atoms);

/// Faraday-probe measurement strength M = g^2 Ndot / 4 with
/// g = c r_e f_osc / (A_eff * detuning) and Ndot = P / (h nu), where the probe
/// sits `detuning` below the D1 line at `wavelength`.
/// Units: W, Hz, cm^2, dimensionless, m. Returns Hz.
double measurement_strength_from_probe(double probe_power, double detuning, double beam_area_cm2,
                                       double oscillator_strength, double wavelength);

}  // namespace spintrack
