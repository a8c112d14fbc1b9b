#include "spintrack/ekf.hpp"

#include <cmath>

namespace spintrack {

namespace {

template <int Dim>
void write_atomic_drift(Vec<Dim>& out, const Vec<Dim>& x, double w, const SensorParams& p) {
    const AtomicMoments d = atomic_drift(atomic_block(x.data()), w, p, p.n_mean);
    out[kMeanX] = d.mean_x;
    out[kMeanY] = d.mean_y;
    out[kVarX] = d.var_x;
    out[kVarY] = d.var_y;
    out[kVarZ] = d.var_z;
    out[kCovXY] = d.cov_xy;
}

// Atomic rows of F; `omega_col` is the column of the precession estimate.
template <int Dim>
void write_atomic_jacobian(Mat<Dim>& f, const Vec<Dim>& x, double w, const SensorParams& p, int omega_col) {
    const double kc = p.kappa_coll;
    const double kl = p.kappa_loc;
    const double m = p.meas_strength;
    const double emn = p.efficiency * m * p.n_mean;
    const double mx = x[kMeanX], my = x[kMeanY];
    const double vx = x[kVarX], vy = x[kVarY], cxy = x[kCovXY];

    f(kMeanX, kMeanX) = -(0.5 * m + kl + 0.5 * kc);
    f(kMeanX, kMeanY) = -w;
    f(kMeanX, omega_col) = -my;

    f(kMeanY, kMeanX) = w;
    f(kMeanY, kMeanY) = -0.5 * (kc + 2.0 * kl);
    f(kMeanY, omega_col) = mx;

    f(kVarX, kMeanY) = 2.0 * kc * my;
    f(kVarX, kVarX) = -(m + 2.0 * kl + kc);
    f(kVarX, kVarY) = kc;
    f(kVarX, kVarZ) = m;
    f(kVarX, kCovXY) = -(8.0 * emn * cxy + 2.0 * w);
    f(kVarX, omega_col) = -2.0 * cxy;

    f(kVarY, kMeanX) = 2.0 * kc * mx;
    f(kVarY, kVarX) = kc;
    f(kVarY, kVarY) = -(kc + 2.0 * kl + 8.0 * emn * vy);
    f(kVarY, kCovXY) = 2.0 * w;
    f(kVarY, omega_col) = 2.0 * cxy;

    f(kVarZ, kMeanX) = 2.0 * m * mx;
    f(kVarZ, kVarX) = m;
    f(kVarZ, kVarZ) = -m;

    f(kCovXY, kMeanX) = -kc * my;
    f(kCovXY, kMeanY) = -kc * mx;
    f(kCovXY, kVarX) = w;
    f(kCovXY, kVarY) = -(w + 4.0 * emn * cxy);
    f(kCovXY, kCovXY) = -(0.5 * m + 2.0 * kc + 2.0 * kl + 4.0 * emn * vy);
    f(kCovXY, omega_col) = vx - vy;
}

template <int Dim>
NoiseGain<Dim> atomic_noise_gain(const Vec<Dim>& x, const SensorParams& p, int signal_noise_slot) {
    NoiseGain<Dim> g = NoiseGain<Dim>::Zero();
    const double c = 2.0 * std::sqrt(p.efficiency * p.meas_strength * p.n_mean);
    g(kMeanX, 0) = c * x[kCovXY];
    g(kMeanY, 0) = c * x[kVarY];
    g(signal_noise_slot, 1) = 1.0;
    return g;
}

template <int Dim>
EkfState<Dim> atomic_prior(const SensorParams& p) {
    EkfState<Dim> st;
    const AtomicMoments css = css_initial_state(p.n_mean);
    st.estimate[kMeanX] = css.mean_x;
    st.estimate[kMeanY] = css.mean_y;
    st.estimate[kVarX] = css.var_x;
    st.estimate[kVarY] = css.var_y;
    st.estimate[kVarZ] = css.var_z;
    st.estimate[kCovXY] = css.cov_xy;
    return st;
}

}  // namespace

AtomicMoments atomic_block(const double* x) {
    return {x[kMeanX], x[kMeanY], x[kVarX], x[kVarY], x[kVarZ], x[kCovXY]};
}

NoiseModel NoiseModel::correlated(double efficiency, double q_k) {
    NoiseModel n;
    n.q_matrix << 1.0, 0.0, 0.0, q_k;
    n.r_scalar = efficiency;
    n.s_vector << std::sqrt(efficiency), 0.0;
    return n;
}

void NoiseModel::validate() const {
    if (!(r_scalar > 0.0)) throw DomainError("noise model: R must be positive (efficiency > 0)");
    const Eigen::Matrix2d reduced = q_matrix - s_vector * s_vector.transpose() / r_scalar;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (reduced + reduced.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, q_matrix.norm())) {
        throw DomainError("noise model: Q - S R^-1 S^T is not positive semidefinite");
    }
}

// --- OUP -------------------------------------------------------------------

void OupFilterModel::validate() const {
    sensor.validate();
    if (!(chi_k > 0.0)) throw DomainError("oup filter: chi_k must be positive");
    if (!(q_k > 0.0)) throw DomainError("oup filter: q_k must be positive");
}

Vec<7> OupFilterModel::drift(const Vec<7>& x, double u) const {
    Vec<7> d;
    write_atomic_drift<7>(d, x, precession(x) + u, sensor);
    d[omega_slot] = -chi_k * (x[omega_slot] - sensor.omega_bar);
    return d;
}

Mat<7> OupFilterModel::jacobian_f(const Vec<7>& x, double u) const {
    Mat<7> f = Mat<7>::Zero();
    write_atomic_jacobian<7>(f, x, precession(x) + u, sensor, omega_slot);
    f(omega_slot, omega_slot) = -chi_k;
    return f;
}

NoiseGain<7> OupFilterModel::jacobian_g(const Vec<7>& x) const {
    return atomic_noise_gain<7>(x, sensor, signal_noise_slot);
}

RowVec<7> OupFilterModel::measurement_row() const { return spintrack::measurement_row<7>(sensor); }

Mat<7> jacobian_f_oup(const EkfState<7>& est, double u, const OupFilterModel& model) {
    return model.jacobian_f(est.estimate, u);
}

EkfState<7> init_ekf_oup(const OupFilterModel& model, double prior_sigma0) {
    if (!(prior_sigma0 > 0.0)) throw DomainError("init_ekf: prior_sigma0 must be positive");
    EkfState<7> st = atomic_prior<7>(model.sensor);
    st.estimate[OupFilterModel::omega_slot] = model.sensor.omega_bar;
    st.covariance(OupFilterModel::omega_slot, OupFilterModel::omega_slot) = prior_sigma0 * prior_sigma0;
    return st;
}

// --- VdP -------------------------------------------------------------------

void VdpFilterModel::validate() const {
    sensor.validate();
    if (!(p_k > 0.0 && k_k > 0.0 && m_k > 0.0 && c_k > 0.0 && t_k > 0.0)) {
        throw DomainError("vdp filter: p_k, k_k, m_k, c_k and t_k must be positive");
    }
    if (!(q_k > 0.0)) throw DomainError("vdp filter: q_k must be positive");
}

Vec<9> VdpFilterModel::drift(const Vec<9>& x, double u) const {
    Vec<9> d;
    write_atomic_drift<9>(d, x, precession(x) + u, sensor);
    const VdpState r = vdp_rates({x[nu_slot], x[omega_slot], x[upsilon_slot]}, p_k, k_k, m_k, c_k, t_k);
    d[nu_slot] = r.nu;
    d[omega_slot] = r.omega;
    d[upsilon_slot] = r.upsilon;
    return d;
}

Mat<9> VdpFilterModel::jacobian_f(const Vec<9>& x, double u) const {
    Mat<9> f = Mat<9>::Zero();
    write_atomic_jacobian<9>(f, x, precession(x) + u, sensor, omega_slot);
    const double nu = x[nu_slot], om = x[omega_slot], up = x[upsilon_slot];
    // d/dnu of (|nu| - nu) / (2T); sign(0) = 0 gives the subgradient midpoint.
    const double sgn = (nu > 0.0) - (nu < 0.0);
    f(nu_slot, omega_slot) = -p_k;
    f(omega_slot, nu_slot) = k_k / m_k;
    f(omega_slot, omega_slot) = 2.0 * c_k * (1.0 - up) / m_k;
    f(omega_slot, upsilon_slot) = -2.0 * c_k * om / m_k;
    f(upsilon_slot, nu_slot) = (sgn - 1.0) / (2.0 * t_k);
    f(upsilon_slot, upsilon_slot) = -1.0 / t_k;
    return f;
}

NoiseGain<9> VdpFilterModel::jacobian_g(const Vec<9>& x) const {
    return atomic_noise_gain<9>(x, sensor, signal_noise_slot);
}

RowVec<9> VdpFilterModel::measurement_row() const { return spintrack::measurement_row<9>(sensor); }

Mat<9> jacobian_f_vdp(const EkfState<9>& est, double u, const VdpFilterModel& model) {
    return model.jacobian_f(est.estimate, u);
}

EkfState<9> init_ekf_vdp(const VdpFilterModel& model, double prior_sigma0, const VdpState& signal_estimate) {
    if (!(prior_sigma0 > 0.0)) throw DomainError("init_ekf: prior_sigma0 must be positive");
    EkfState<9> st = atomic_prior<9>(model.sensor);
    st.estimate[VdpFilterModel::nu_slot] = signal_estimate.nu;
    st.estimate[VdpFilterModel::omega_slot] = signal_estimate.omega;
    st.estimate[VdpFilterModel::upsilon_slot] = signal_estimate.upsilon;
    const double v0 = prior_sigma0 * prior_sigma0;
    for (int i = VdpFilterModel::nu_slot; i <= VdpFilterModel::upsilon_slot; ++i) st.covariance(i, i) = v0;
    return st;
}

}  // namespace spintrack
