#include "spintrack/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "spintrack/bounds.hpp"
#include "spintrack/errors.hpp"
#include "spintrack/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spintrack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMaxFailedFraction = 0.01;

void reserve_all(TrajectoryRecord& r, std::int64_t n) {
    for (auto* v : {&r.t, &r.omega_true, &r.omega_clean, &r.omega_est, &r.u, &r.y_increment,
                    &r.squeezing_db, &r.sigma_omega}) {
        v->reserve(static_cast<std::size_t>(n));
    }
}

// Closed loop for either filter model. `Signal` advances the truth field and
// reports (drive, clean) frequencies as deviations from omega_bar.
template <class Model, class Signal>
TrajectoryRecord run_loop(const ScenarioConfig& cfg, std::int64_t index, Model model, EkfState<Model::dim> est,
                          Signal& signal) {
    const SensorParams& sp = cfg.sensor;
    const double dt = sp.dt;
    const double sqdt = std::sqrt(dt);
    const std::int64_t n_steps = cfg.n_steps();
    const std::int64_t stride = cfg.record_stride;
    const NoiseModel noise = NoiseModel::correlated(sp.efficiency, model.q_k);
    model.sensor = sp;

    TrajectoryRecord rec;
    rec.index = index;
    rec.drawn_n = sample_atom_number(sp.n_mean, sp.n_sigma, cfg.base_seed, index);
    reserve_all(rec, cfg.n_records());

    Engine meas = make_engine(cfg.base_seed, static_cast<std::uint64_t>(index), RngStream::kMeasurement);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double n_true = rec.drawn_n;
    AtomicMoments truth = css_initial_state(n_true);
    IntegrationCounters counters;
    EkfDiagnostics diag;

    constexpr int omega_slot = Model::omega_slot;
    auto control = [&](const EkfState<Model::dim>& e) {
        return lqr_control(model.precession(e.estimate), e.estimate[kMeanY], cfg.lqr);
    };
    double u = control(est);
    double y = 0.0;

    auto record = [&](std::int64_t step) {
        rec.t.push_back(static_cast<double>(step) * dt);
        rec.omega_true.push_back(signal.drive_deviation());
        rec.omega_clean.push_back(signal.clean_deviation());
        rec.omega_est.push_back(model.precession(est.estimate) - sp.omega_bar);
        rec.u.push_back(u);
        rec.y_increment.push_back(y);
        rec.squeezing_db.push_back(squeezing_db(truth, n_true));
        rec.sigma_omega.push_back(est.covariance(omega_slot, omega_slot));
    };
    record(0);

    for (std::int64_t k = 0; k < n_steps; ++k) {
        const double dw = sqdt * normal(meas);
        y = photocurrent_sample(truth, dw, sp, n_true);
        const double drive = sp.omega_bar + signal.drive_for_step();
        truth = step_truth(truth, drive, u, dw, sp, n_true, &counters, k + 1);
        signal.advance();
        const bool at_record = (k + 1) % stride == 0;
        est = ekf_step(est, y, u, dt, model, noise, k + 1, &diag, at_record);
        u = control(est);
        if (at_record) record(k + 1);
    }
    rec.psd_repairs = counters.psd_repairs;
    rec.eigen_floors = diag.eigen_floors;
    return rec;
}

class OupTruth {
public:
    OupTruth(const OupParams& prm, double omega_bar, double sigma0, Engine gen, double dt)
        : prm_(prm), gen_(gen), dt_(dt), sqdt_(std::sqrt(dt)) {
        prm_.omega_bar = omega_bar;
        omega_ = omega_bar + sigma0 * normal_(gen_);
    }
    double drive_for_step() const { return omega_ - prm_.omega_bar; }
    double drive_deviation() const { return omega_ - prm_.omega_bar; }
    double clean_deviation() const { return drive_deviation(); }
    void advance() { omega_ = oup_step(OupState{omega_}, sqdt_ * normal_(gen_), dt_, prm_).omega; }

private:
    OupParams prm_;
    Engine gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double dt_, sqdt_;
    double omega_ = 0.0;
};

class McgTruth {
public:
    McgTruth(const VdpParams& prm, Engine gen, double dt)
        : prm_(prm), gen_(gen), dt_(dt), sqdt_(std::sqrt(dt)), state_(prm.init), drive_(prm.init.omega) {}
    // Noisy drive held over one step: omega_clean + sqrt(q_n) dW_n / dt.
    double drive_for_step() {
        const double dwn = sqdt_ * normal_(gen_);
        drive_ = noisy_drive_increment(state_.omega, dwn, dt_, prm_) / dt_;
        return drive_;
    }
    double drive_deviation() const { return drive_; }
    double clean_deviation() const { return state_.omega; }
    void advance() { state_ = vdp_step(state_, dt_, prm_); }

private:
    VdpParams prm_;
    Engine gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double dt_, sqdt_;
    VdpState state_;
    double drive_;
};

std::optional<TrajectoryRecord> guarded_run(const ScenarioConfig& cfg, std::int64_t index,
                                            TrajectoryFailure& failure) {
    try {
        return run_trajectory(cfg, index);
    } catch (const IntegrationError& e) {
        failure = {index, e.step(), e.what()};
    } catch (const FilterDivergence& e) {
        failure = {index, e.step(), e.what()};
    } catch (const std::exception& e) {
        failure = {index, -1, e.what()};
    }
    return std::nullopt;
}

EnsembleStats reduce(const ScenarioConfig& cfg, std::vector<std::optional<TrajectoryRecord>>& runs,
                     std::vector<TrajectoryFailure>& failures, int keep_samples) {
    const auto n_total = static_cast<std::int64_t>(runs.size());
    const auto n_failed = static_cast<std::int64_t>(failures.size());
    if (static_cast<double>(n_failed) > kMaxFailedFraction * static_cast<double>(n_total) ||
        n_failed == n_total) {
        std::string msg = std::to_string(n_failed) + " of " + std::to_string(n_total) + " trajectories failed";
        if (!failures.empty()) msg += "; first: trajectory " + std::to_string(failures.front().index) + ": " +
                                      failures.front().message;
        throw EnsembleError(msg);
    }

    const auto n_rec = static_cast<std::size_t>(cfg.n_records());
    const bool mcg = cfg.kind() == SignalKind::kMcg;
    EnsembleStats s;
    s.amse.assign(n_rec, 0.0);
    s.amse_stderr.assign(n_rec, 0.0);
    s.mean_sigma_omega.assign(n_rec, 0.0);
    s.mean_squeezing_db.assign(n_rec, 0.0);

    std::int64_t used = 0;
    for (auto& r : runs) {
        if (!r) continue;
        if (s.t.empty()) {
            s.t = r->t;
            if (mcg) s.omega_clean = r->omega_clean;
        }
        for (std::size_t i = 0; i < n_rec; ++i) {
            const double e = r->omega_est[i] - r->omega_clean[i];
            s.amse[i] += e * e;
            s.mean_sigma_omega[i] += r->sigma_omega[i];
            s.mean_squeezing_db[i] += r->squeezing_db[i];
        }
        ++used;
    }
    const double inv = 1.0 / static_cast<double>(used);
    for (std::size_t i = 0; i < n_rec; ++i) {
        s.amse[i] *= inv;
        s.mean_sigma_omega[i] *= inv;
        s.mean_squeezing_db[i] *= inv;
    }
    if (used > 1) {
        for (auto& r : runs) {
            if (!r) continue;
            for (std::size_t i = 0; i < n_rec; ++i) {
                const double e = r->omega_est[i] - r->omega_clean[i];
                const double d = e * e - s.amse[i];
                s.amse_stderr[i] += d * d;
            }
        }
        const double scale = 1.0 / (static_cast<double>(used - 1) * static_cast<double>(used));
        for (auto& v : s.amse_stderr) v = std::sqrt(v * scale);
    }

    s.bound = bound_series(cfg, s.t);
    s.n_used = used;
    s.failures = failures;
    for (auto& r : runs) {
        if (static_cast<int>(s.samples.size()) >= keep_samples) break;
        if (r) s.samples.push_back(std::move(*r));
    }
    return s;
}

}  // namespace

std::int64_t ScenarioConfig::n_steps() const {
    return static_cast<std::int64_t>(std::llround(horizon / sensor.dt));
}

void ScenarioConfig::validate() const {
    sensor.validate();
    std::visit([](const auto& s) { s.validate(); }, signal);
    std::visit([](const auto& m) { m.validate(); }, ekf_model);
    lqr.validate();
    const bool oup_signal = std::holds_alternative<OupParams>(signal);
    const bool oup_filter = std::holds_alternative<OupFilterModel>(ekf_model);
    if (oup_signal != oup_filter) throw DomainError("scenario: signal kind and EKF model kind differ");
    if (!(prior_sigma0 >= 0.0 && std::isfinite(prior_sigma0))) {
        throw DomainError("scenario: prior_sigma0 must be finite and non-negative");
    }
    if (!(signal_block_sigma0 >= 0.0 && std::isfinite(signal_block_sigma0))) {
        throw DomainError("scenario: signal_block_sigma0 must be finite and non-negative");
    }
    if (!(sensor.efficiency > 0.0)) throw DomainError("scenario: efficiency must be positive for the filter");
    if (!(horizon > 0.0)) throw DomainError("scenario: horizon must be positive");
    if (n_steps() < 1) throw DomainError("scenario: horizon shorter than one step");
    if (n_trajectories < 1) throw DomainError("scenario: n_trajectories must be >= 1");
    if (record_stride < 1) throw DomainError("scenario: record_stride must be >= 1");
}

double sample_atom_number(double n_mean, double n_sigma, std::uint64_t base_seed, std::int64_t index) {
    if (!(n_sigma >= 0.0)) throw DomainError("sample_atom_number: n_sigma must be non-negative");
    Engine gen = make_engine(base_seed, static_cast<std::uint64_t>(index), RngStream::kAtomNumber);
    return draw_atom_number(n_mean, n_sigma, gen);
}

TrajectoryRecord run_trajectory(const ScenarioConfig& cfg, std::int64_t index) {
    cfg.validate();
    Engine sig = make_engine(cfg.base_seed, static_cast<std::uint64_t>(index), RngStream::kSignal);
    const double dt = cfg.sensor.dt;

    if (cfg.kind() == SignalKind::kOup) {
        OupFilterModel model = std::get<OupFilterModel>(cfg.ekf_model);
        model.sensor = cfg.sensor;
        OupTruth truth(std::get<OupParams>(cfg.signal), cfg.sensor.omega_bar, cfg.prior_sigma0, sig, dt);
        return run_loop(cfg, index, model, init_ekf_oup(model, cfg.prior_sigma0), truth);
    }
    VdpFilterModel model = std::get<VdpFilterModel>(cfg.ekf_model);
    model.sensor = cfg.sensor;
    McgTruth truth(std::get<VdpParams>(cfg.signal), sig, dt);
    return run_loop(cfg, index, model, init_ekf_vdp(model, cfg.signal_block_sigma0), truth);
}

std::vector<double> amse_series(const std::vector<TrajectoryRecord>& records, TruthReference ref) {
    if (records.empty()) throw DomainError("amse_series: no records");
    const std::size_t n = records.front().t.size();
    std::vector<double> out(n, 0.0);
    for (const auto& r : records) {
        const auto& truth = ref == TruthReference::kTrue ? r.omega_true : r.omega_clean;
        if (r.t.size() != n || r.omega_est.size() != n || truth.size() != n || r.t != records.front().t) {
            throw DomainError("amse_series: records do not share a time grid");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double e = r.omega_est[i] - truth[i];
            out[i] += e * e;
        }
    }
    for (auto& v : out) v /= static_cast<double>(records.size());
    return out;
}

std::vector<double> bound_series(const ScenarioConfig& cfg, const std::vector<double>& t) {
    std::vector<double> out(t.size(), kNaN);
    if (cfg.kind() != SignalKind::kOup) return out;
    const auto& sig = std::get<OupParams>(cfg.signal);
    BoundQuery q;
    q.n_atoms = cfg.sensor.n_mean;
    q.n_sigma = cfg.sensor.n_sigma;
    q.q_omega = sig.q_omega;
    q.kappa_loc = cfg.sensor.kappa_loc;
    q.kappa_coll = cfg.sensor.kappa_coll;
    q.sigma0 = cfg.prior_sigma0;
    q.chi = sig.chi;
    if (!(q.kappa_loc > 0.0 || q.kappa_coll > 0.0)) return out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] <= 0.0) {
            out[i] = cfg.prior_sigma0 * cfg.prior_sigma0;
            continue;
        }
        q.t = t[i];
        out[i] = cs_bound_finite_prior(q);
    }
    return out;
}

EnsembleStats run_ensemble(const ScenarioConfig& cfg, int threads, int keep_samples) {
    cfg.validate();
    const std::int64_t n = cfg.n_trajectories;
    std::vector<std::optional<TrajectoryRecord>> runs(static_cast<std::size_t>(n));
    std::vector<TrajectoryFailure> fail_slots(static_cast<std::size_t>(n));
    std::vector<char> failed(static_cast<std::size_t>(n), 0);

#ifdef _OPENMP
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#else
    (void)threads;
#endif
    for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        runs[idx] = guarded_run(cfg, i, fail_slots[idx]);
        failed[idx] = runs[idx] ? 0 : 1;
    }

    std::vector<TrajectoryFailure> failures;
    for (std::size_t i = 0; i < failed.size(); ++i) {
        if (failed[i]) failures.push_back(fail_slots[i]);
    }
    return reduce(cfg, runs, failures, keep_samples);
}

EnsembleStats run_ensemble_serial(const ScenarioConfig& cfg, int keep_samples) {
    cfg.validate();
    const std::int64_t n = cfg.n_trajectories;
    std::vector<std::optional<TrajectoryRecord>> runs(static_cast<std::size_t>(n));
    std::vector<TrajectoryFailure> failures;
    for (std::int64_t i = 0; i < n; ++i) {
        TrajectoryFailure f;
        runs[static_cast<std::size_t>(i)] = guarded_run(cfg, i, f);
        if (!runs[static_cast<std::size_t>(i)]) failures.push_back(f);
    }
    return reduce(cfg, runs, failures, keep_samples);
}

WindowStats window_stats(const EnsembleStats& s, double t0, double t1) {
    WindowStats w;
    double a = 0.0, sig = 0.0, b = 0.0;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        if (s.t[i] < t0 - 1e-12 || s.t[i] > t1 + 1e-12) continue;
        a += s.amse[i];
        sig += s.mean_sigma_omega[i];
        b += s.bound[i];
        ++w.points;
    }
    if (w.points == 0) throw DomainError("window_stats: no recorded times in the window");
    const double inv = 1.0 / static_cast<double>(w.points);
    w.sqrt_amse = std::sqrt(a * inv);
    w.sqrt_sigma_omega = std::sqrt(sig * inv);
    w.sqrt_bound = std::sqrt(b * inv);
    return w;
}

SqueezingStats squeezing_stats(const EnsembleStats& s) {
    SqueezingStats out{kNaN, std::numeric_limits<double>::infinity(), kNaN};
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        const double v = s.mean_squeezing_db[i];
        if (std::isnan(out.onset_time) && v < -kSqueezingRoundoffDb) out.onset_time = s.t[i];
        if (v < out.min_db) {
            out.min_db = v;
            out.min_time = s.t[i];
        }
    }
    return out;
}

std::vector<double> r_peak_times(const std::vector<double>& t, const std::vector<double>& wave,
                                 double min_separation) {
    if (t.size() != wave.size()) throw DomainError("r_peak_times: size mismatch");
    std::vector<double> peaks;
    if (wave.size() < 3) return peaks;
    const double threshold = 0.5 * *std::max_element(wave.begin(), wave.end());
    for (std::size_t i = 1; i + 1 < wave.size(); ++i) {
        if (wave[i] < threshold || wave[i] < wave[i - 1] || wave[i] < wave[i + 1]) continue;
        if (!peaks.empty() && t[i] - peaks.back() < min_separation) continue;
        peaks.push_back(t[i]);
    }
    return peaks;
}

CycleStats cycle_stats(const EnsembleStats& s, int cycle, double qrs_half_width) {
    if (s.omega_clean.empty()) throw DomainError("cycle_stats: ensemble has no clean waveform");
    const auto peaks = r_peak_times(s.t, s.omega_clean);
    if (cycle < 1 || static_cast<std::size_t>(cycle) > peaks.size()) {
        throw DomainError("cycle_stats: waveform has only " + std::to_string(peaks.size()) + " R-peaks");
    }
    const std::size_t c = static_cast<std::size_t>(cycle - 1);
    CycleStats out;
    out.cycle = cycle;
    out.r_peak_time = peaks[c];
    const double period_left = c > 0 ? peaks[c] - peaks[c - 1] : (c + 1 < peaks.size() ? peaks[c + 1] - peaks[c] : 0.0);
    const double period_right = c + 1 < peaks.size() ? peaks[c + 1] - peaks[c] : period_left;
    out.cycle_start = std::max(s.t.front(), peaks[c] - 0.5 * period_left);
    out.cycle_end = std::min(s.t.back(), peaks[c] + 0.5 * period_right);

    double sum = 0.0;
    std::int64_t count = 0;
    double r_max = 0.0;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        if (s.t[i] < out.cycle_start || s.t[i] > out.cycle_end) continue;
        const double e = std::sqrt(s.amse[i]);
        sum += e;
        ++count;
        if (std::abs(s.t[i] - out.r_peak_time) <= qrs_half_width) r_max = std::max(r_max, e);
    }
    out.mean_sqrt_amse = count > 0 ? sum / static_cast<double>(count) : kNaN;
    out.r_wave_sqrt_amse = r_max;
    return out;
}

}  // namespace spintrack
