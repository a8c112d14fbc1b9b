#pragma once

#include <variant>

namespace spintrack {

/// Ornstein-Uhlenbeck field: d omega = -chi (omega - omega_bar) dt + sqrt(q_omega) dW.
struct OupParams {
    double chi = 1.0;        ///< decay rate [1/s]
    double q_omega = 1e6;    ///< diffusion strength [rad^2/s^3]
    double omega_bar = 0.0;  ///< equilibrium [rad/s]

    void validate() const;
    friend bool operator==(const OupParams&, const OupParams&) = default;
};

/// Filtered Van der Pol state. omega is the deviation from the offset field in rad/s.
struct VdpState {
    double nu = 0.0;
    double omega = 0.0;
    double upsilon = 0.0;

    friend bool operator==(const VdpState&, const VdpState&) = default;
};

/// Filtered Van der Pol oscillator producing a cardiac-like waveform.
struct VdpParams {
    double p = 1e3;
    double k = 1.0;
    double m = 0.00098;
    double c = 1.0;
    double t_filter = 0.003;                   ///< filter time constant T [s]
    VdpState init{0.0045, 0.0045, 0.0045};
    double noise_density = 2.5e-7;             ///< white frequency noise q_n [rad^2/s]

    void validate() const;
    friend bool operator==(const VdpParams&, const VdpParams&) = default;
};

struct OupState {
    double omega = 0.0;
};

using SignalState = std::variant<OupState, VdpState>;

/// Euler-Maruyama step of the OUP. dW_omega must have variance dt.
OupState oup_step(OupState s, double dW_omega, double dt, const OupParams& prm);

/// Stationary variance q_omega / (2 chi).
double oup_stationary_variance(const OupParams& prm);

/// Right-hand side of the three filtered-VdP equations.
VdpState vdp_rates(const VdpState& s, double p, double k, double m, double c, double t_filter);
VdpState vdp_rates(const VdpState& s, const VdpParams& prm);

/// Explicit-midpoint step of the VdP system.
VdpState vdp_step(const VdpState& s, double dt, const VdpParams& prm);

/// Phase increment omega_clean dt + sqrt(q_n) dW_n driving the precession.
double noisy_drive_increment(double omega_clean, double dW_n, double dt, const VdpParams& prm);

}  // namespace spintrack
