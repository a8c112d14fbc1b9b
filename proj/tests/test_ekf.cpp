#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles/moment_oracle.hpp"
#include "property_checks.hpp"
#include "spintrack/ekf.hpp"

using namespace spintrack;

namespace {

OupFilterModel oup_model(double kappa_coll = 0.0) {
    OupFilterModel m;
    m.sensor.kappa_coll = kappa_coll;
    m.sensor.omega_bar = 1.2e5;
    return m;
}

template <int D>
Mat<D> random_psd(std::mt19937_64& gen, double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat<D> a;
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) a(i, j) = normal(gen);
    return scale * a * a.transpose();
}

}  // namespace

TEST_CASE("OUP Jacobian structure") {
    const OupFilterModel m = oup_model(1e-5);
    EkfState<7> st = init_ekf_oup(m, 10.0);
    st.estimate[kMeanY] = 42.0;
    st.estimate[6] = m.sensor.omega_bar + 3.0;

    const double u = -st.estimate[6] + 0.5;
    const Mat<7> f = jacobian_f_oup(st, u, m);
    CHECK(f(kMeanX, kMeanY) == doctest::Approx(-0.5));
    CHECK(f(6, 6) == -m.chi_k);
    CHECK(f(kMeanX, 6) == -42.0);

    SUBCASE("entries proportional to omega + u vanish at lock") {
        const Mat<7> locked = jacobian_f_oup(st, -st.estimate[6], m);
        CHECK(locked(kMeanX, kMeanY) == 0.0);
        CHECK(locked(kMeanY, kMeanX) == 0.0);
        CHECK(locked(kVarY, kCovXY) == 0.0);
        CHECK(locked(kCovXY, kVarX) == 0.0);
    }
    SUBCASE("without collective dephasing the variance rows ignore the means") {
        const OupFilterModel m0 = oup_model(0.0);
        const Mat<7> f0 = jacobian_f_oup(init_ekf_oup(m0, 10.0), 0.0, m0);
        CHECK(f0(kVarX, kMeanY) == 0.0);
        CHECK(f0(kVarY, kMeanX) == 0.0);
        CHECK(f0(kCovXY, kMeanX) == 0.0);
        CHECK(f0(kCovXY, kMeanY) == 0.0);
    }
}

TEST_CASE("VdP Jacobian signal block") {
    VdpFilterModel m;
    EkfState<9> st = init_ekf_vdp(m, 1.0);
    st.estimate[VdpFilterModel::upsilon_slot] = 1.0;
    st.estimate[VdpFilterModel::nu_slot] = -0.3;
    Mat<9> f = jacobian_f_vdp(st, 0.0, m);
    CHECK(f(VdpFilterModel::omega_slot, VdpFilterModel::omega_slot) == 0.0);
    CHECK(f(VdpFilterModel::omega_slot, VdpFilterModel::nu_slot) == doctest::Approx(m.k_k / m.m_k));
    CHECK(f(VdpFilterModel::nu_slot, VdpFilterModel::omega_slot) == -m.p_k);
    CHECK(f(VdpFilterModel::upsilon_slot, VdpFilterModel::nu_slot) == doctest::Approx(-1.0 / m.t_k));
    CHECK(f(VdpFilterModel::upsilon_slot, VdpFilterModel::upsilon_slot) == doctest::Approx(-1.0 / m.t_k));

    st.estimate[VdpFilterModel::nu_slot] = 0.3;
    f = jacobian_f_vdp(st, 0.0, m);
    CHECK(f(VdpFilterModel::upsilon_slot, VdpFilterModel::nu_slot) == 0.0);

    st.estimate[VdpFilterModel::nu_slot] = 0.0;
    f = jacobian_f_vdp(st, 0.0, m);
    CHECK(f(VdpFilterModel::upsilon_slot, VdpFilterModel::nu_slot) == doctest::Approx(-0.5 / m.t_k));
}

TEST_CASE("noise gain") {
    OupFilterModel m = oup_model();
    const EkfState<7> css = init_ekf_oup(m, 10.0);
    const NoiseGain<7> g = jacobian_g(css, m);
    const double c = 2.0 * std::sqrt(m.sensor.efficiency * m.sensor.meas_strength * m.sensor.n_mean);
    CHECK(g(kMeanX, 0) == 0.0);
    CHECK(g(kMeanY, 0) == doctest::Approx(c * 0.25));
    CHECK(g.col(0).tail<5>().norm() == 0.0);
    CHECK(g(6, 1) == 1.0);
    CHECK(g.col(1).head<6>().norm() == 0.0);

    m.sensor.efficiency = 0.0;
    CHECK(jacobian_g(css, m).col(0).norm() == 0.0);

    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    OupFilterModel r = oup_model();
    for (int i = 0; i < 50; ++i) {
        r.sensor.efficiency = u01(gen);
        EkfState<7> st = css;
        for (int k = 0; k < 6; ++k) st.estimate[k] = u01(gen);
        const NoiseGain<7> got = jacobian_g(st, r);
        const oracle::Rates rates{0.0, 0.0, r.sensor.meas_strength, r.sensor.efficiency, r.sensor.n_mean};
        const auto ref = oracle::diffusion({st.estimate[0], st.estimate[1], st.estimate[2], st.estimate[3],
                                            st.estimate[4], st.estimate[5]},
                                           rates);
        CHECK(got(kMeanX, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
        CHECK(got(kMeanY, 0) == doctest::Approx(ref[1]).epsilon(1e-12));
    }
}

TEST_CASE("measurement row") {
    SensorParams p;
    const RowVec<7> h = measurement_row<7>(p);
    CHECK(h[kMeanY] == doctest::Approx(632.456).epsilon(1e-6));
    CHECK(h.norm() == doctest::Approx(h[kMeanY]));
    const RowVec<9> h9 = measurement_row<9>(p);
    CHECK(h9[kMeanY] == h[kMeanY]);
    p.efficiency = 0.0;
    CHECK(measurement_row<7>(p).norm() == 0.0);
}

TEST_CASE("Kalman gain and Riccati rate against element-wise evaluation") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat<7> sigma = random_psd<7>(gen, 0.5);
        Mat<7> f;
        NoiseGain<7> g;
        RowVec<7> h;
        for (int i = 0; i < 7; ++i) {
            h[i] = normal(gen);
            g(i, 0) = normal(gen);
            g(i, 1) = normal(gen);
            for (int j = 0; j < 7; ++j) f(i, j) = normal(gen);
        }
        const NoiseModel noise = NoiseModel::correlated(0.3 + 0.7 * std::abs(normal(gen)) / 3.0, 2.0);

        const Vec<7> k = kalman_gain<7>(sigma, h, noise, g);
        const Mat<7> rate = riccati_rate<7>(sigma, f, g, h, noise);
        const double r = noise.r_scalar;
        for (int i = 0; i < 7; ++i) {
            double sh = 0.0;
            for (int j = 0; j < 7; ++j) sh += sigma(i, j) * h[j];
            const double gs = g(i, 0) * noise.s_vector[0] + g(i, 1) * noise.s_vector[1];
            CHECK(k[i] == doctest::Approx((sh + gs) / r).epsilon(1e-12));
        }
        // Element-wise: A Sigma + Sigma A^T + G Qr G^T - Sigma h^T h Sigma / r with A = F - G S h / r.
        double q_red[2][2];
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) q_red[a][b] = noise.q_matrix(a, b) - noise.s_vector[a] * noise.s_vector[b] / r;
        for (int i = 0; i < 7; ++i) {
            for (int j = 0; j < 7; ++j) {
                double v = 0.0, scale = 0.0;
                for (int l = 0; l < 7; ++l) {
                    const double ail = f(i, l) - (g(i, 0) * noise.s_vector[0] + g(i, 1) * noise.s_vector[1]) * h[l] / r;
                    const double ajl = f(j, l) - (g(j, 0) * noise.s_vector[0] + g(j, 1) * noise.s_vector[1]) * h[l] / r;
                    v += ail * sigma(l, j) + sigma(i, l) * ajl;
                    scale += std::abs(ail * sigma(l, j)) + std::abs(sigma(i, l) * ajl);
                }
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) v += g(i, a) * q_red[a][b] * g(j, b);
                double shi = 0.0, shj = 0.0;
                for (int l = 0; l < 7; ++l) {
                    shi += sigma(i, l) * h[l];
                    shj += sigma(j, l) * h[l];
                }
                v -= shi * shj / r;
                scale += std::abs(shi * shj / r) + 1.0;
                CHECK(std::abs(rate(i, j) - v) <= 1e-12 * scale);
            }
        }
    }
}

TEST_CASE("gain limits") {
    std::mt19937_64 gen(2);
    const Mat<7> sigma = random_psd<7>(gen, 1.0);
    const OupFilterModel m = oup_model();
    const EkfState<7> css = init_ekf_oup(m, 1.0);
    const NoiseGain<7> g = jacobian_g(css, m);
    const RowVec<7> h = m.measurement_row();

    NoiseModel uncorrelated = NoiseModel::correlated(0.8, 1e6);
    uncorrelated.s_vector.setZero();
    CHECK((kalman_gain<7>(sigma, h, uncorrelated, g) - sigma * h.transpose() / 0.8).norm() == 0.0);

    const NoiseModel noise = NoiseModel::correlated(0.8, 1e6);
    const Vec<7> feed = kalman_gain<7>(Mat<7>::Zero(), h, noise, g);
    // Correlation feed-through G S / R; with the + sign the filter reproduces
    // the backaction kick 2 sqrt(eta M N) V_Y dW that the truth receives.
    CHECK((feed - g * noise.s_vector / 0.8).norm() == 0.0);
}

TEST_CASE("innovation on mean_y reproduces the backaction coefficient at the coherent state") {
    OupFilterModel m = oup_model();
    m.sensor.efficiency = 1.0;
    const NoiseModel noise = NoiseModel::correlated(1.0, m.q_k);
    EkfState<7> st = init_ekf_oup(m, 10.0);
    st.covariance.setZero();
    const double dt = m.sensor.dt;
    const double u = -st.estimate[6];
    const double y = 3e-4;
    const double expected_gain = 2.0 * std::sqrt(m.sensor.meas_strength * m.sensor.n_mean) * 0.25;
    for (auto scheme : {CovarianceScheme::kDiscreteKalman, CovarianceScheme::kEuler}) {
        const EkfState<7> next = ekf_step(st, y, u, dt, m, noise, 0, nullptr, false, scheme);
        const double kick = next.estimate[kMeanY] - st.estimate[kMeanY] - m.drift(st.estimate, u)[kMeanY] * dt;
        CHECK(kick == doctest::Approx(expected_gain * y).epsilon(1e-12));
    }
}

TEST_CASE("with the measurement disabled the step is a pure prediction") {
    checks::FrozenModel fm;
    fm.f.setZero();
    fm.f(0, 0) = -3.0;
    fm.f(6, 6) = -1.0;
    fm.g.setZero();
    fm.g(1, 0) = 2.0;
    fm.g(6, 1) = 1.0;
    fm.h.setZero();
    NoiseModel noise = NoiseModel::correlated(1.0, 5.0);
    noise.s_vector.setZero();

    EkfState<7> st;
    st.estimate.setConstant(1.0);
    const double dt = 1e-3;
    for (auto scheme : {CovarianceScheme::kDiscreteKalman, CovarianceScheme::kEuler}) {
        const EkfState<7> next = ekf_step(st, 0.7, 0.0, dt, fm, noise, 0, nullptr, false, scheme);
        CHECK((next.estimate - (st.estimate + fm.f * st.estimate * dt)).norm() == 0.0);
        const Mat<7> gqg = fm.g * noise.q_matrix * fm.g.transpose() * dt;
        CHECK((next.covariance - gqg).norm() <= 1e-15);
    }
}

TEST_CASE("covariance stays symmetric and PSD") {
    const OupFilterModel m = oup_model();
    const NoiseModel noise = NoiseModel::correlated(m.sensor.efficiency, m.q_k);
    EkfState<7> st = init_ekf_oup(m, 10.0);
    EkfDiagnostics diag;
    std::mt19937_64 gen(6);
    std::normal_distribution<double> normal(0.0, std::sqrt(m.sensor.dt));
    for (int k = 1; k <= 5000; ++k) {
        const double u = -st.estimate[6];
        st = ekf_step(st, normal(gen), u, m.sensor.dt, m, noise, k, &diag, k % 50 == 0);
        CHECK_MESSAGE((st.covariance - st.covariance.transpose()).norm() == 0.0, "step " << k);
    }
    CHECK(diag.max_asymmetry < 1e-10);
}

TEST_CASE("filter initialization") {
    const OupFilterModel m = oup_model();
    const EkfState<7> st = init_ekf_oup(m, 10.0);
    CHECK(st.covariance(6, 6) == 100.0);
    CHECK(st.covariance.topLeftCorner<6, 6>().norm() == 0.0);
    CHECK(st.estimate[6] == m.sensor.omega_bar);
    const AtomicMoments css = css_initial_state(m.sensor.n_mean);
    CHECK(atomic_block(st.estimate.data()) == css);
    CHECK_THROWS_AS(init_ekf_oup(m, 0.0), DomainError);

    VdpFilterModel v;
    const EkfState<9> sv = init_ekf_vdp(v, 10.0);
    CHECK(sv.estimate[VdpFilterModel::nu_slot] == 3.0045);
    CHECK(sv.estimate[VdpFilterModel::omega_slot] == 3.0045);
    CHECK(sv.estimate[VdpFilterModel::upsilon_slot] == 3.0045);
    CHECK(sv.covariance.bottomRightCorner<3, 3>().isApprox(100.0 * Mat<3>::Identity()));
    CHECK(atomic_block(sv.estimate.data()) == css_initial_state(v.sensor.n_mean));
}

TEST_CASE("loss of positive semidefiniteness") {
    Mat<7> sigma = Mat<7>::Identity();
    SUBCASE("small negative eigenvalue is floored and counted") {
        sigma(3, 3) = -1e-12;
        EkfDiagnostics diag;
        enforce_psd<7>(sigma, 5, &diag);
        CHECK(diag.eigen_floors == 1);
        Eigen::SelfAdjointEigenSolver<Mat<7>> es(sigma);
        CHECK(es.eigenvalues().minCoeff() >= -1e-15);
    }
    SUBCASE("large negative eigenvalue diverges with the step index") {
        sigma(3, 3) = -0.5;
        try {
            enforce_psd<7>(sigma, 42, nullptr);
            FAIL("expected FilterDivergence");
        } catch (const FilterDivergence& e) {
            CHECK(e.step() == 42);
        }
    }
    SUBCASE("negative diagonal after a step diverges") {
        const OupFilterModel m = oup_model();
        EkfState<7> st = init_ekf_oup(m, 10.0);
        st.covariance(6, 6) = -5.0;
        CHECK_THROWS_AS(ekf_step(st, 0.0, 0.0, m.sensor.dt, m, NoiseModel::correlated(1.0, 1e6), 9), FilterDivergence);
    }
}

TEST_CASE("noise model validation") {
    CHECK_NOTHROW(NoiseModel::correlated(0.5, 1.0).validate());
    CHECK_THROWS_AS(NoiseModel::correlated(0.0, 1.0).validate(), DomainError);
    OupFilterModel m;
    m.q_k = 0.0;
    CHECK_THROWS_AS(m.validate(), DomainError);
}
