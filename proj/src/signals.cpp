#include "spintrack/signals.hpp"

#include <cmath>

#include "spintrack/errors.hpp"

namespace spintrack {

void OupParams::validate() const {
    if (!(chi > 0.0)) throw DomainError("oup: chi must be positive");
    if (!(q_omega >= 0.0)) throw DomainError("oup: q_omega must be non-negative");
    if (!std::isfinite(omega_bar)) throw DomainError("oup: omega_bar must be finite");
}

void VdpParams::validate() const {
    if (!(p > 0.0 && k > 0.0 && m > 0.0 && c > 0.0 && t_filter > 0.0)) {
        throw DomainError("vdp: p, k, m, c and t_filter must be positive");
    }
    if (!(noise_density >= 0.0)) throw DomainError("vdp: noise_density must be non-negative");
    if (!std::isfinite(init.nu) || !std::isfinite(init.omega) || !std::isfinite(init.upsilon)) {
        throw DomainError("vdp: initial state must be finite");
    }
}

OupState oup_step(OupState s, double dW_omega, double dt, const OupParams& prm) {
    return {s.omega - prm.chi * (s.omega - prm.omega_bar) * dt + std::sqrt(prm.q_omega) * dW_omega};
}

double oup_stationary_variance(const OupParams& prm) { return prm.q_omega / (2.0 * prm.chi); }

VdpState vdp_rates(const VdpState& s, double p, double k, double m, double c, double t_filter) {
    return {
        -p * s.omega,
        (k / m) * s.nu + 2.0 * (c / m) * (1.0 - s.upsilon) * s.omega,
        (std::abs(s.nu) - s.nu) / (2.0 * t_filter) - s.upsilon / t_filter,
    };
}

VdpState vdp_rates(const VdpState& s, const VdpParams& prm) {
    return vdp_rates(s, prm.p, prm.k, prm.m, prm.c, prm.t_filter);
}

VdpState vdp_step(const VdpState& s, double dt, const VdpParams& prm) {
    const VdpState k1 = vdp_rates(s, prm);
    const VdpState mid{s.nu + 0.5 * dt * k1.nu, s.omega + 0.5 * dt * k1.omega,
                       s.upsilon + 0.5 * dt * k1.upsilon};
    const VdpState k2 = vdp_rates(mid, prm);
    return {s.nu + dt * k2.nu, s.omega + dt * k2.omega, s.upsilon + dt * k2.upsilon};
}

double noisy_drive_increment(double omega_clean, double dW_n, double dt, const VdpParams& prm) {
    return omega_clean * dt + std::sqrt(prm.noise_density) * dW_n;
}

}  // namespace spintrack
