#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "spintrack/control.hpp"
#include "spintrack/ekf.hpp"
#include "spintrack/sensor_model.hpp"
#include "spintrack/signals.hpp"

namespace spintrack {

enum class SignalKind { kOup, kMcg };

/// One closed-loop scenario plus the ensemble it is averaged over. The
/// trajectory loop takes omega_bar and the filter's sensor constants from
/// `sensor`; only the signal-model beliefs of `ekf_model` can be mismatched.
struct ScenarioConfig {
    std::string name = "custom";
    SensorParams sensor;
    std::variant<OupParams, VdpParams> signal = OupParams{};
    EkfModel ekf_model = OupFilterModel{};
    LqrParams lqr;
    double prior_sigma0 = 10.0;        ///< prior std of omega [rad/s]; truth draw and EKF start
    double signal_block_sigma0 = 10.0; ///< VdP only: EKF signal-block prior std
    double horizon = 0.01;             ///< [s]
    std::int64_t n_trajectories = 200;
    std::uint64_t base_seed = 0;
    std::int64_t record_stride = 100;

    SignalKind kind() const {
        return std::holds_alternative<OupParams>(signal) ? SignalKind::kOup : SignalKind::kMcg;
    }
    std::int64_t n_steps() const;
    std::int64_t n_records() const { return n_steps() / record_stride + 1; }
    /// Throws DomainError naming the first offending field.
    void validate() const;
    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Recorded series of one trajectory. Frequencies are deviations from omega_bar.
struct TrajectoryRecord {
    std::int64_t index = 0;
    double drawn_n = 0.0;
    std::vector<double> t;
    std::vector<double> omega_true;   ///< field actually driving the atoms (noisy drive for MCG)
    std::vector<double> omega_clean;  ///< error reference: equals omega_true for OUP
    std::vector<double> omega_est;
    std::vector<double> u;
    std::vector<double> y_increment;
    std::vector<double> squeezing_db;
    std::vector<double> sigma_omega;  ///< EKF variance of omega [rad^2/s^2]
    std::int64_t psd_repairs = 0;
    std::int64_t eigen_floors = 0;
};

/// Trajectory failure kept by the ensemble instead of aborting it.
struct TrajectoryFailure {
    std::int64_t index = 0;
    std::int64_t step = 0;
    std::string message;
};

struct EnsembleStats {
    std::vector<double> t;
    std::vector<double> amse;
    std::vector<double> amse_stderr;  ///< standard error of the aMSE estimate
    std::vector<double> mean_sigma_omega;
    std::vector<double> mean_squeezing_db;
    std::vector<double> bound;        ///< finite-prior lower bound; NaN for MCG
    std::vector<double> omega_clean;  ///< MCG clean waveform (deterministic); empty for OUP
    std::int64_t n_used = 0;
    std::vector<TrajectoryFailure> failures;
    std::vector<TrajectoryRecord> samples;  ///< first few successful records
};

/// Gaussian atom number redrawn while non-positive.
double sample_atom_number(double n_mean, double n_sigma, std::uint64_t base_seed, std::int64_t index);

/// Runs trajectory `index` of the scenario. Deterministic in (cfg, index).
/// Throws IntegrationError or FilterDivergence on failure.
TrajectoryRecord run_trajectory(const ScenarioConfig& cfg, std::int64_t index);

enum class TruthReference { kTrue, kClean };

/// Pointwise mean over records of (omega_est - reference)^2.
std::vector<double> amse_series(const std::vector<TrajectoryRecord>& records, TruthReference ref);

/// Finite-prior bound on the recorded grid (OUP only).
std::vector<double> bound_series(const ScenarioConfig& cfg, const std::vector<double>& t);

/// Ensemble over trajectories 0..n-1, parallel over trajectories. threads <= 0
/// uses the OpenMP default. Output is identical for any thread count.
/// Throws EnsembleError when more than 1% of the trajectories fail.
EnsembleStats run_ensemble(const ScenarioConfig& cfg, int threads = 0, int keep_samples = 1);

/// Single-threaded reference of run_ensemble.
EnsembleStats run_ensemble_serial(const ScenarioConfig& cfg, int keep_samples = 1);

struct WindowStats {
    double sqrt_amse = 0.0;        ///< sqrt of the window-mean aMSE
    double sqrt_sigma_omega = 0.0; ///< sqrt of the window-mean EKF variance
    double sqrt_bound = 0.0;       ///< sqrt of the window-mean bound (NaN for MCG)
    std::int64_t points = 0;
};

/// Statistics over the recorded times in [t0, t1].
WindowStats window_stats(const EnsembleStats& s, double t0, double t1);

/// The coherent state evaluates to 0 dB only up to rounding; onset ignores
/// values above -kSqueezingRoundoffDb.
inline constexpr double kSqueezingRoundoffDb = 1e-9;

/// First recorded time at which mean squeezing is negative (NaN if never),
/// and the minimum and its time.
struct SqueezingStats {
    double onset_time = 0.0;
    double min_db = 0.0;
    double min_time = 0.0;
};
SqueezingStats squeezing_stats(const EnsembleStats& s);

/// R-peak analysis of the MCG clean waveform. Peaks are local maxima above
/// half the waveform maximum separated by at least min_separation seconds.
std::vector<double> r_peak_times(const std::vector<double>& t, const std::vector<double>& wave,
                                 double min_separation = 0.01);

struct CycleStats {
    int cycle = 0;              ///< 1-based
    double r_peak_time = 0.0;
    double cycle_start = 0.0;
    double cycle_end = 0.0;
    double r_wave_sqrt_amse = 0.0;  ///< max sqrt(aMSE) within +-qrs_half_width of the R-peak
    double mean_sqrt_amse = 0.0;    ///< time average of sqrt(aMSE) over the cycle
};

/// Cycle `cycle` spans the midpoints to the neighbouring R-peaks (clipped to
/// the recorded grid). Throws DomainError if the waveform has fewer peaks.
CycleStats cycle_stats(const EnsembleStats& s, int cycle, double qrs_half_width = 0.005);

}  // namespace spintrack
