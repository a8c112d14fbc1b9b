#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <variant>

#include "spintrack/errors.hpp"
#include "spintrack/sensor_model.hpp"
#include "spintrack/signals.hpp"

namespace spintrack {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;
template <int Dim>
using RowVec = Eigen::Matrix<double, 1, Dim>;
template <int Dim>
using NoiseGain = Eigen::Matrix<double, Dim, 2>;

/// Slot layout of the atomic block shared by every filter model.
enum AtomicSlot : int { kMeanX = 0, kMeanY, kVarX, kVarY, kVarZ, kCovXY, kAtomicDim };

/// Joint estimate (atomic moments followed by signal components) and covariance.
template <int Dim>
struct EkfState {
    Vec<Dim> estimate = Vec<Dim>::Zero();
    Mat<Dim> covariance = Mat<Dim>::Zero();
};

/// Q = diag(1, q_K), R = eta, S = (sqrt(eta), 0)^T: the measurement noise is the
/// same Wiener increment that kicks the conditional means.
struct NoiseModel {
    Eigen::Matrix2d q_matrix = Eigen::Matrix2d::Identity();
    double r_scalar = 1.0;
    Eigen::Vector2d s_vector = Eigen::Vector2d(1.0, 0.0);

    static NoiseModel correlated(double efficiency, double q_k);
    void validate() const;
};

/// EKF model for an Ornstein-Uhlenbeck field (7 states, omega last).
/// chi_k and q_k are the filter's beliefs and may differ from the truth.
struct OupFilterModel {
    static constexpr int dim = 7;
    static constexpr int omega_slot = 6;
    static constexpr int signal_noise_slot = 6;

    SensorParams sensor;
    double chi_k = 1.0;
    double q_k = 1e6;

    /// Full precession frequency implied by the estimate.
    double precession(const Vec<dim>& x) const { return x[omega_slot]; }
    Vec<dim> drift(const Vec<dim>& x, double u) const;
    Mat<dim> jacobian_f(const Vec<dim>& x, double u) const;
    NoiseGain<dim> jacobian_g(const Vec<dim>& x) const;
    RowVec<dim> measurement_row() const;
    void validate() const;
    friend bool operator==(const OupFilterModel&, const OupFilterModel&) = default;
};

/// EKF model for the filtered Van der Pol waveform (9 states: atomic six,
/// then nu, omega, upsilon). omega is the deviation from sensor.omega_bar.
struct VdpFilterModel {
    static constexpr int dim = 9;
    static constexpr int nu_slot = 6;
    static constexpr int omega_slot = 7;
    static constexpr int upsilon_slot = 8;
    static constexpr int signal_noise_slot = 7;

    SensorParams sensor;
    double p_k = 1e3;
    double k_k = 1.0;
    double m_k = 0.00098;
    double c_k = 1.0;
    double t_k = 0.003;
    double q_k = 2.5e-7;

    double precession(const Vec<dim>& x) const { return sensor.omega_bar + x[omega_slot]; }
    Vec<dim> drift(const Vec<dim>& x, double u) const;
    Mat<dim> jacobian_f(const Vec<dim>& x, double u) const;
    NoiseGain<dim> jacobian_g(const Vec<dim>& x) const;
    RowVec<dim> measurement_row() const;
    void validate() const;
    friend bool operator==(const VdpFilterModel&, const VdpFilterModel&) = default;
};

using EkfModel = std::variant<OupFilterModel, VdpFilterModel>;

AtomicMoments atomic_block(const double* x);

Mat<7> jacobian_f_oup(const EkfState<7>& est, double u, const OupFilterModel& model);
Mat<9> jacobian_f_vdp(const EkfState<9>& est, double u, const VdpFilterModel& model);

template <class Model>
NoiseGain<Model::dim> jacobian_g(const EkfState<Model::dim>& est, const Model& model) {
    return model.jacobian_g(est.estimate);
}

/// 2 eta sqrt(M N_bar) on the mean_y slot, zero elsewhere.
template <int Dim>
RowVec<Dim> measurement_row(const SensorParams& p) {
    RowVec<Dim> h = RowVec<Dim>::Zero();
    h[kMeanY] = 2.0 * p.efficiency * std::sqrt(p.meas_strength * p.n_mean);
    return h;
}

/// K = (Sigma H^T + G S) / R.
template <int Dim>
Vec<Dim> kalman_gain(const Mat<Dim>& sigma, const RowVec<Dim>& h, const NoiseModel& noise,
                     const NoiseGain<Dim>& g) {
    return (sigma * h.transpose() + g * noise.s_vector) / noise.r_scalar;
}

/// Riccati right-hand side
/// (F - G S R^-1 H) Sigma + Sigma (...)^T + G (Q - S R^-1 S^T) G^T - Sigma H^T R^-1 H Sigma.
template <int Dim>
Mat<Dim> riccati_rate(const Mat<Dim>& sigma, const Mat<Dim>& f, const NoiseGain<Dim>& g,
                      const RowVec<Dim>& h, const NoiseModel& noise) {
    const double r_inv = 1.0 / noise.r_scalar;
    const Mat<Dim> a = f - (g * noise.s_vector) * (h * r_inv);
    const Eigen::Matrix2d q_eff = noise.q_matrix - noise.s_vector * noise.s_vector.transpose() * r_inv;
    const Vec<Dim> sh = sigma * h.transpose();
    return a * sigma + sigma * a.transpose() + g * q_eff * g.transpose() - sh * sh.transpose() * r_inv;
}

struct EkfDiagnostics {
    std::int64_t eigen_floors = 0;
    double max_asymmetry = 0.0;  ///< max |S - S^T| / trace before symmetrization
};

inline constexpr double kPsdTolerance = 1e-9;

/// Checks Sigma >= 0 up to -kPsdTolerance * trace. Small negative eigenvalues
/// are floored at zero (counted in diag); larger ones throw FilterDivergence.
template <int Dim>
void enforce_psd(Mat<Dim>& sigma, std::int64_t step_index, EkfDiagnostics* diag) {
    const double tr = sigma.trace();
    Eigen::SelfAdjointEigenSolver<Mat<Dim>> es(sigma);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig >= 0.0) return;
    if (!(min_eig >= -kPsdTolerance * std::abs(tr))) {
        throw FilterDivergence("EKF covariance lost positive semidefiniteness", step_index);
    }
    const Vec<Dim> clipped = es.eigenvalues().cwiseMax(0.0);
    sigma = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    if (diag) ++diag->eigen_floors;
}

/// Covariance propagation scheme of ekf_step.
enum class CovarianceScheme {
    /// Exact Kalman recursion of the Euler-discretized linearized model with
    /// correlated process and measurement noise. Agrees with the Riccati step
    /// to first order in dt, preserves Sigma >= 0 and stays stable while the
    /// information rate H Sigma H^T / R exceeds 1/dt (the early transient of a
    /// wide prior).
    kDiscreteKalman,
    /// Sigma + riccati_rate * dt with the continuous gain. Its fixed points
    /// are exactly the algebraic Riccati solutions; stable only while
    /// dt * H Sigma H^T / R stays small.
    kEuler,
};

/// One predict-update step along the photocurrent increment y_increment.
///
/// kDiscreteKalman: with Phi = I + F dt, the pair (x_next, y dt) has
/// cross-covariance c = (Phi Sigma H^T + G S) dt and innovation variance
/// v = H Sigma H^T dt^2 + R dt; the gain is K = c / v, the estimate moves by
/// f dt + K (y dt - H x dt) and Sigma' = Phi Sigma Phi^T + G Q G^T dt - c c^T / v.
///
/// kEuler: K = (Sigma H^T + G S) / R and Sigma' = Sigma + riccati_rate * dt.
///
/// Sigma is symmetrized afterwards. A cheap diagonal check runs every step;
/// pass check_psd to run the full eigenvalue test.
template <class Model>
EkfState<Model::dim> ekf_step(const EkfState<Model::dim>& state, double y_increment, double u, double dt,
                              const Model& model, const NoiseModel& noise, std::int64_t step_index = 0,
                              EkfDiagnostics* diag = nullptr, bool check_psd = false,
                              CovarianceScheme scheme = CovarianceScheme::kDiscreteKalman) {
    constexpr int D = Model::dim;
    const Vec<D>& x = state.estimate;
    const Mat<D>& sigma = state.covariance;

    const Mat<D> f = model.jacobian_f(x, u);
    const NoiseGain<D> g = model.jacobian_g(x);
    const RowVec<D> h = model.measurement_row();
    const double innovation = y_increment - h.dot(x) * dt;

    EkfState<D> next;
    Mat<D> updated;
    if (scheme == CovarianceScheme::kEuler) {
        const Vec<D> k = kalman_gain<D>(sigma, h, noise, g);
        next.estimate = x + model.drift(x, u) * dt + k * innovation;
        updated = sigma + riccati_rate<D>(sigma, f, g, h, noise) * dt;
    } else {
        const Mat<D> phi = Mat<D>::Identity() + f * dt;
        const Mat<D> phi_sigma = phi * sigma;
        const Vec<D> cross = (phi_sigma * h.transpose() + g * noise.s_vector) * dt;
        const double v = h.dot(sigma * h.transpose()) * dt * dt + noise.r_scalar * dt;
        const Vec<D> k = cross / v;
        next.estimate = x + model.drift(x, u) * dt + k * innovation;
        updated = phi_sigma * phi.transpose() + g * noise.q_matrix * g.transpose() * dt - cross * cross.transpose() / v;
    }

    const double tr = updated.trace();
    if (diag) {
        const double asym = (updated - updated.transpose()).cwiseAbs().maxCoeff();
        if (tr > 0.0) diag->max_asymmetry = std::max(diag->max_asymmetry, asym / tr);
    }
    next.covariance = 0.5 * (updated + updated.transpose());

    if (!next.estimate.allFinite() || !next.covariance.allFinite()) {
        throw FilterDivergence("EKF produced non-finite values", step_index);
    }
    const double floor = -kPsdTolerance * std::abs(tr);
    if (next.covariance.diagonal().minCoeff() < floor) {
        throw FilterDivergence("EKF covariance has a negative diagonal entry", step_index);
    }
    if (check_psd) enforce_psd<D>(next.covariance, step_index, diag);
    return next;
}

/// OUP filter start: atomic slots at the CSS for N_bar with zero atomic
/// covariance, omega at omega_bar with variance sigma0^2.
EkfState<7> init_ekf_oup(const OupFilterModel& model, double prior_sigma0);

inline constexpr double kVdpDefaultEstimate = 3.0045;

/// VdP filter start: atomic slots as above, signal estimates `signal_estimate`
/// with covariance prior_sigma0^2 * I.
EkfState<9> init_ekf_vdp(const VdpFilterModel& model, double prior_sigma0,
                         const VdpState& signal_estimate = {kVdpDefaultEstimate, kVdpDefaultEstimate,
                                                            kVdpDefaultEstimate});

}  // namespace spintrack
