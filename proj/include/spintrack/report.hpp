#pragma once

#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "spintrack/bounds.hpp"
#include "spintrack/experiment.hpp"

namespace spintrack {

/// Rb-87 ground-state gyromagnetic ratio [rad/s/T].
inline constexpr double kGyroRb87 = 2.0 * 3.14159265358979323846 * 7.0e9;

/// Converts an angular frequency [rad/s] to field [pT].
inline double rad_s_to_pt(double omega) { return omega / kGyroRb87 * 1e12; }

/// First line of every CSV, "# <schema>/<version>".
inline constexpr const char* kEnsembleSchema = "# spintrack-ensemble/1";
inline constexpr const char* kSamplesSchema = "# spintrack-samples/1";
inline constexpr const char* kBoundSchema = "# spintrack-bound/1";

std::vector<std::string> ensemble_columns(SignalKind kind);
std::vector<std::string> sample_columns(SignalKind kind);
std::vector<std::string> bound_columns();

void write_ensemble_csv(std::ostream& out, const EnsembleStats& s, SignalKind kind);
void write_samples_csv(std::ostream& out, const std::vector<TrajectoryRecord>& records, SignalKind kind);
void write_bound_csv(std::ostream& out, const std::vector<BoundRow>& rows);

/// Scalar summary of an ensemble: plateau statistics over [plateau_start,
/// horizon], squeezing statistics, MCG cycle statistics, failures.
nlohmann::ordered_json summarize(const ScenarioConfig& cfg, const EnsembleStats& s, double plateau_start);

}  // namespace spintrack
