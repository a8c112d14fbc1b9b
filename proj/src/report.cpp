#include "spintrack/report.hpp"

#include <cmath>
#include <cstdio>

#include "spintrack/errors.hpp"

namespace spintrack {

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void header(std::ostream& out, const char* schema, const std::vector<std::string>& cols) {
    out << schema << '\n';
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
}

void row(std::ostream& out, std::initializer_list<double> vals) {
    bool first = true;
    for (double v : vals) {
        out << (first ? "" : ",") << fmt(v);
        first = false;
    }
    out << '\n';
}

nlohmann::ordered_json nan_to_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::vector<std::string> ensemble_columns(SignalKind kind) {
    std::vector<std::string> c{"t_s",         "amse_rad2_s2",      "sqrt_amse",     "ekf_var_mean",
                               "squeezing_mean_db", "bound_rad2_s2", "amse_stderr_rad2_s2"};
    if (kind == SignalKind::kMcg) {
        c.emplace_back("omega_clean_rad_s");
        c.emplace_back("omega_clean_pt");
    }
    return c;
}

std::vector<std::string> sample_columns(SignalKind kind) {
    std::vector<std::string> c{"trajectory", "t_s",          "omega_true_rad_s",    "omega_est_rad_s",
                               "u_rad_s",    "y_increment",  "squeezing_db",        "sigma_omega_rad2_s2"};
    if (kind == SignalKind::kMcg) {
        for (const char* name : {"omega_clean_rad_s", "omega_true_pt", "omega_est_pt", "omega_clean_pt"}) {
            c.emplace_back(name);
        }
    }
    return c;
}

std::vector<std::string> bound_columns() {
    return {"t_s", "n_atoms", "kappa_hz", "v_inf_rad2_s2", "v_sigma0_rad2_s2", "sql_rad2_s2"};
}

void write_ensemble_csv(std::ostream& out, const EnsembleStats& s, SignalKind kind) {
    header(out, kEnsembleSchema, ensemble_columns(kind));
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        out << fmt(s.t[i]) << ',' << fmt(s.amse[i]) << ',' << fmt(std::sqrt(s.amse[i])) << ','
            << fmt(s.mean_sigma_omega[i]) << ',' << fmt(s.mean_squeezing_db[i]) << ',' << fmt(s.bound[i]) << ','
            << fmt(s.amse_stderr[i]);
        if (kind == SignalKind::kMcg) {
            out << ',' << fmt(s.omega_clean[i]) << ',' << fmt(rad_s_to_pt(s.omega_clean[i]));
        }
        out << '\n';
    }
}

void write_samples_csv(std::ostream& out, const std::vector<TrajectoryRecord>& records, SignalKind kind) {
    header(out, kSamplesSchema, sample_columns(kind));
    for (const auto& r : records) {
        for (std::size_t i = 0; i < r.t.size(); ++i) {
            out << r.index << ',';
            if (kind == SignalKind::kMcg) {
                row(out, {r.t[i], r.omega_true[i], r.omega_est[i], r.u[i], r.y_increment[i], r.squeezing_db[i],
                          r.sigma_omega[i], r.omega_clean[i], rad_s_to_pt(r.omega_true[i]),
                          rad_s_to_pt(r.omega_est[i]), rad_s_to_pt(r.omega_clean[i])});
            } else {
                row(out, {r.t[i], r.omega_true[i], r.omega_est[i], r.u[i], r.y_increment[i], r.squeezing_db[i],
                          r.sigma_omega[i]});
            }
        }
    }
}

void write_bound_csv(std::ostream& out, const std::vector<BoundRow>& rows) {
    header(out, kBoundSchema, bound_columns());
    for (const auto& r : rows) row(out, {r.t, r.n_atoms, r.kappa, r.v_inf, r.v_sigma0, r.sql});
}

nlohmann::ordered_json summarize(const ScenarioConfig& cfg, const EnsembleStats& s, double plateau_start) {
    nlohmann::ordered_json j;
    j["scenario"] = cfg.name;
    j["signal"] = cfg.kind() == SignalKind::kOup ? "oup" : "mcg";
    j["trajectories_requested"] = cfg.n_trajectories;
    j["trajectories_used"] = s.n_used;
    j["seed"] = cfg.base_seed;

    const WindowStats w = window_stats(s, plateau_start, cfg.horizon);
    j["plateau"] = {{"t_start_s", plateau_start},
                    {"t_end_s", cfg.horizon},
                    {"points", w.points},
                    {"sqrt_amse_rad_s", w.sqrt_amse},
                    {"sqrt_amse_hz", w.sqrt_amse / (2.0 * 3.14159265358979323846)},
                    {"sqrt_ekf_var_rad_s", w.sqrt_sigma_omega},
                    {"sqrt_bound_rad_s", nan_to_null(w.sqrt_bound)}};

    const SqueezingStats sq = squeezing_stats(s);
    j["squeezing"] = {{"onset_s", nan_to_null(sq.onset_time)},
                      {"min_db", sq.min_db},
                      {"min_time_s", sq.min_time}};

    if (cfg.kind() == SignalKind::kMcg) {
        nlohmann::ordered_json cycles = nlohmann::ordered_json::array();
        const auto peaks = r_peak_times(s.t, s.omega_clean);
        for (int c = 1; c <= static_cast<int>(peaks.size()); ++c) {
            const CycleStats cs = cycle_stats(s, c);
            cycles.push_back({{"cycle", cs.cycle},
                              {"r_peak_s", cs.r_peak_time},
                              {"start_s", cs.cycle_start},
                              {"end_s", cs.cycle_end},
                              {"r_wave_sqrt_amse_rad_s", cs.r_wave_sqrt_amse},
                              {"r_wave_sqrt_amse_pt", rad_s_to_pt(cs.r_wave_sqrt_amse)},
                              {"mean_sqrt_amse_rad_s", cs.mean_sqrt_amse}});
        }
        j["cycles"] = cycles;
    }

    nlohmann::ordered_json fails = nlohmann::ordered_json::array();
    for (const auto& f : s.failures) fails.push_back({{"trajectory", f.index}, {"step", f.step}, {"error", f.message}});
    j["failures"] = fails;
    return j;
}

}  // namespace spintrack
