#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "spintrack/bounds.hpp"
#include "spintrack/config.hpp"
#include "spintrack/errors.hpp"
#include "spintrack/experiment.hpp"
#include "spintrack/report.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#ifndef SPINTRACK_VERSION
#define SPINTRACK_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using spintrack::ConfigError;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunFlags {
    std::string config_path;
    std::string preset_name;
    std::optional<std::int64_t> trajectories;
    std::optional<std::uint64_t> seed;
    std::optional<double> dt;
    std::optional<double> horizon;
    std::optional<double> plateau_start;
    int threads = 0;
    int samples = 1;
    std::string out = ".";
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    auto* cfg = cmd->add_option("--config", f.config_path, "scenario JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--preset", f.preset_name, "named scenario (see `presets list`)")->excludes(cfg);
    cmd->add_option("--trajectories", f.trajectories, "ensemble size")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "64-bit base seed (generated and printed when omitted)");
    cmd->add_option("--dt", f.dt, "integration step [s]")->check(CLI::PositiveNumber);
    cmd->add_option("--horizon", f.horizon, "simulated time [s]")->check(CLI::PositiveNumber);
    cmd->add_option("--plateau-start", f.plateau_start, "start of the plateau window [s] (default horizon/2)");
    cmd->add_option("--threads", f.threads, "worker threads (default: hardware parallelism)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--samples", f.samples, "trajectories written to samples.csv")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", f.out, "output directory");
}

std::uint64_t fresh_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// Resolves the scenario; returns whether the seed came from the user.
spintrack::ScenarioConfig resolve(const RunFlags& f, spintrack::SignalKind want, bool& seed_given) {
    spintrack::ScenarioConfig cfg;
    seed_given = false;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = spintrack::parse_scenario(ss.str(), f.config_path);
        const Json raw = Json::parse(ss.str(), nullptr, false);
        seed_given = raw.is_object() && raw.contains("run") && raw["run"].is_object() && raw["run"].contains("seed");
    } else {
        cfg = spintrack::preset(f.preset_name.empty() ? (want == spintrack::SignalKind::kOup ? "fig2" : "fig4")
                                                      : f.preset_name);
    }
    if (cfg.kind() != want) {
        throw ConfigError(f.config_path.empty() ? "<preset>" : f.config_path, 0,
                          std::string("scenario signal is ") +
                              (cfg.kind() == spintrack::SignalKind::kOup ? "oup" : "mcg") +
                              "; use the matching subcommand");
    }
    if (f.trajectories) cfg.n_trajectories = *f.trajectories;
    if (f.dt) {
        cfg.sensor.dt = *f.dt;
        std::visit([&](auto& m) { m.sensor.dt = *f.dt; }, cfg.ekf_model);
    }
    if (f.horizon) cfg.horizon = *f.horizon;
    if (f.seed) {
        cfg.base_seed = *f.seed;
        seed_given = true;
    }
    if (!seed_given) {
        cfg.base_seed = fresh_seed();
        std::cout << "seed: " << cfg.base_seed << "\n";
    }
    try {
        cfg.validate();
    } catch (const spintrack::DomainError& e) {
        throw ConfigError("<overrides>", 0, e.what());
    }
    return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + p.string());
}

void write_json(const fs::path& p, const Json& j) { write_file(p, j.dump(2) + "\n"); }

int cmd_simulate(const RunFlags& f, spintrack::SignalKind kind) {
    bool seed_given = false;
    const spintrack::ScenarioConfig cfg = resolve(f, kind, seed_given);
    const auto start = std::chrono::steady_clock::now();
    const spintrack::EnsembleStats stats = spintrack::run_ensemble(cfg, f.threads, f.samples);
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const fs::path dir(f.out);
    fs::create_directories(dir);
    const fs::path ens = dir / "ensemble.csv";
    const fs::path smp = dir / "samples.csv";
    const fs::path sum = dir / "summary.json";
    const fs::path man = dir / "manifest.json";

    std::ostringstream e, s;
    spintrack::write_ensemble_csv(e, stats, kind);
    spintrack::write_samples_csv(s, stats.samples, kind);
    write_file(ens, e.str());
    write_file(smp, s.str());
    const double plateau = f.plateau_start.value_or(0.5 * cfg.horizon);
    const Json summary = spintrack::summarize(cfg, stats, plateau);
    write_json(sum, summary);

    Json m;
    m["version"] = SPINTRACK_VERSION;
    m["command"] = kind == spintrack::SignalKind::kOup ? "simulate-oup" : "simulate-mcg";
    m["seed"] = cfg.base_seed;
    m["wall_clock_s"] = runtime;
    m["files"] = {ens.string(), smp.string(), sum.string(), man.string()};
    m["config"] = spintrack::scenario_to_json(cfg);
    write_json(man, m);

    const auto& p = summary["plateau"];
    std::cout << cfg.name << ": " << stats.n_used << "/" << cfg.n_trajectories << " trajectories, plateau sqrt(aMSE) "
              << p["sqrt_amse_rad_s"].get<double>() << " rad/s, sqrt(EKF var) "
              << p["sqrt_ekf_var_rad_s"].get<double>() << " rad/s";
    if (!p["sqrt_bound_rad_s"].is_null()) std::cout << ", sqrt(bound) " << p["sqrt_bound_rad_s"].get<double>() << " rad/s";
    std::cout << " (" << runtime << " s)\n";
    return 0;
}

struct BoundFlags {
    double t_min = 1e-4, t_max = 1.0;
    int t_points = 41;
    double n_min = 1e6, n_max = 1e14;
    int n_points = 33;
    double q_omega = 1e6, kappa_loc = 100.0, kappa_coll = 0.0, sigma0 = 10.0, chi = 1.0, n_sigma = 0.0;
    std::int64_t mc_draws = 0;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out = ".";
};

int cmd_bound(const BoundFlags& f) {
    spintrack::BoundQuery base;
    base.q_omega = f.q_omega;
    base.kappa_loc = f.kappa_loc;
    base.kappa_coll = f.kappa_coll;
    base.sigma0 = f.sigma0;
    base.chi = f.chi;
    base.n_sigma = f.n_sigma;
    std::vector<double> tg, ng;
    try {
        tg = spintrack::logspace(f.t_min, f.t_max, f.t_points);
        ng = spintrack::logspace(f.n_min, f.n_max, f.n_points);
        base.t = tg.front();
        base.n_atoms = ng.front();
        base.validate();
    } catch (const spintrack::DomainError& e) {
        throw ConfigError("<bound flags>", 0, e.what());
    }
    const auto start = std::chrono::steady_clock::now();
    const auto rows = spintrack::bound_table(base, tg, ng, f.threads);

    const spintrack::SurfaceShape shape = spintrack::surface_shape(rows, tg.size(), ng.size());

    Json summary;
    summary["decreasing_in_n"] = shape.decreasing_in_n;
    summary["non_increasing_in_t"] = shape.non_increasing_in_t;
    summary["convex_in_n"] = shape.convex_in_n;
    if (f.mc_draws > 0) {
        Json jensen = Json::array();
        const std::uint64_t seed = f.seed.value_or(0);
        for (double t : tg) {
            spintrack::BoundQuery q = base;
            q.t = t;
            q.n_atoms = f.n_max;
            const auto avg = spintrack::n_averaged_bound(q, f.mc_draws, seed);
            jensen.push_back({{"t_s", t},
                              {"n_mean", q.n_atoms},
                              {"v_inf_at_mean_n", avg.at_mean_n},
                              {"mean_v_inf_over_n", *avg.monte_carlo},
                              {"draws", avg.draws}});
        }
        summary["jensen"] = jensen;
    }
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const fs::path dir(f.out);
    fs::create_directories(dir);
    const fs::path csv = dir / "bound.csv";
    const fs::path sum = dir / "bound_summary.json";
    const fs::path man = dir / "manifest.json";
    std::ostringstream os;
    spintrack::write_bound_csv(os, rows);
    write_file(csv, os.str());
    write_json(sum, summary);

    Json m;
    m["version"] = SPINTRACK_VERSION;
    m["command"] = "bound";
    m["wall_clock_s"] = runtime;
    m["files"] = {csv.string(), sum.string(), man.string()};
    m["config"] = {{"t_min_s", f.t_min},     {"t_max_s", f.t_max},           {"t_points", f.t_points},
                   {"n_min_atoms", f.n_min}, {"n_max_atoms", f.n_max},       {"n_points", f.n_points},
                   {"q_omega_rad2_s3", f.q_omega}, {"kappa_loc_hz", f.kappa_loc}, {"kappa_coll_hz", f.kappa_coll},
                   {"sigma0_rad_s", f.sigma0}, {"chi_hz", f.chi},           {"n_sigma_atoms", f.n_sigma}};
    write_json(man, m);

    if (rows.size() == 1) {
        const auto& r = rows.front();
        std::cout << "sqrt(V_inf) = " << std::sqrt(r.v_inf) << " rad/s (" << std::sqrt(r.v_inf) / (2.0 * M_PI)
                  << " Hz), sqrt(V_sigma0) = " << std::sqrt(r.v_sigma0) << " rad/s, sqrt(SQL) = " << std::sqrt(r.sql)
                  << " rad/s\n";
    } else {
        std::cout << rows.size() << " rows; decreasing in N: " << shape.decreasing_in_n
                  << ", non-increasing in t: " << shape.non_increasing_in_t << ", convex in N: " << shape.convex_in_n
                  << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop spin-precession magnetometer simulator"};
    app.set_version_flag("--version", SPINTRACK_VERSION);
    app.require_subcommand(1);

    RunFlags oup_flags, mcg_flags;
    auto* oup = app.add_subcommand("simulate-oup", "track an Ornstein-Uhlenbeck field");
    add_run_flags(oup, oup_flags);
    auto* mcg = app.add_subcommand("simulate-mcg", "track a noisy cardiac-like waveform");
    add_run_flags(mcg, mcg_flags);

    BoundFlags bf;
    auto* bound = app.add_subcommand("bound", "tabulate the dephasing-limited error bounds");
    bound->add_option("--t-min", bf.t_min, "[s]");
    bound->add_option("--t-max", bf.t_max, "[s]");
    bound->add_option("--t-points", bf.t_points);
    bound->add_option("--n-min", bf.n_min, "atom number");
    bound->add_option("--n-max", bf.n_max, "atom number");
    bound->add_option("--n-points", bf.n_points);
    bound->add_option("--q-omega", bf.q_omega, "[rad^2/s^3]");
    bound->add_option("--kappa-loc", bf.kappa_loc, "[Hz]");
    bound->add_option("--kappa-coll", bf.kappa_coll, "[Hz]");
    bound->add_option("--sigma0", bf.sigma0, "prior std [rad/s]");
    bound->add_option("--chi", bf.chi, "[1/s]");
    bound->add_option("--n-sigma", bf.n_sigma, "atom-number std for the Jensen check");
    bound->add_option("--mc-draws", bf.mc_draws, "Monte Carlo draws of N per grid time (0 disables)");
    bound->add_option("--seed", bf.seed);
    bound->add_option("--threads", bf.threads);
    bound->add_option("--out", bf.out, "output directory");

    auto* presets = app.add_subcommand("presets", "named scenarios");
    presets->require_subcommand(1);
    auto* list = presets->add_subcommand("list", "list presets");
    std::string show_name;
    auto* show = presets->add_subcommand("show", "print a preset as JSON");
    show->add_option("name", show_name)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const int threads = oup->parsed() ? oup_flags.threads : mcg->parsed() ? mcg_flags.threads : bf.threads;
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif

    try {
        if (oup->parsed()) return cmd_simulate(oup_flags, spintrack::SignalKind::kOup);
        if (mcg->parsed()) return cmd_simulate(mcg_flags, spintrack::SignalKind::kMcg);
        if (bound->parsed()) return cmd_bound(bf);
        if (list->parsed()) {
            for (const auto& n : spintrack::preset_names()) {
                std::cout << n << "\t" << spintrack::preset_description(n) << "\n";
            }
            return 0;
        }
        if (show->parsed()) {
            std::cout << spintrack::scenario_to_json(spintrack::preset(show_name)).dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
