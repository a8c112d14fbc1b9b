#include "spintrack/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "spintrack/errors.hpp"

namespace spintrack {

namespace {

using Json = nlohmann::ordered_json;
using Path = std::vector<std::string>;

std::string join(const Path& p) {
    std::string s;
    for (const auto& k : p) s += (s.empty() ? "" : ".") + k;
    return s;
}

int line_at(const std::string& text, std::size_t pos) {
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
public:
    Reader(const std::string& text, const std::string& source) : text_(text), source_(source) {}

    // Line of the last key of `path`, found by walking the quoted keys in order.
    int line_of(const Path& path) const {
        std::size_t pos = 0;
        for (const auto& key : path) {
            const auto found = text_.find("\"" + key + "\"", pos);
            if (found == std::string::npos) return 0;
            pos = found;
        }
        return path.empty() ? 0 : line_at(text_, pos);
    }

    [[noreturn]] void fail(const Path& path, const std::string& msg) const {
        throw ConfigError(source_, line_of(path), (path.empty() ? "" : join(path) + ": ") + msg);
    }

    const Json* section(const Json& root, const Path& path, const std::set<std::string>& allowed) const {
        const auto it = root.find(path.back());
        if (it == root.end()) return nullptr;
        if (!it->is_object()) fail(path, "expected an object");
        check_keys(*it, path, allowed);
        return &*it;
    }

    void check_keys(const Json& obj, const Path& path, const std::set<std::string>& allowed) const {
        for (const auto& [key, _] : obj.items()) {
            if (!allowed.count(key)) {
                Path p = path;
                p.push_back(key);
                fail(p, "unknown key");
            }
        }
    }

    void number(const Json* obj, const Path& path, const std::string& key, double& out) const {
        if (!obj) return;
        const auto it = obj->find(key);
        if (it == obj->end()) return;
        Path p = path;
        p.push_back(key);
        if (!it->is_number()) fail(p, "expected a number");
        out = it->get<double>();
        if (!std::isfinite(out)) fail(p, "expected a finite number");
    }

    template <class Int>
    void integer(const Json* obj, const Path& path, const std::string& key, Int& out) const {
        if (!obj) return;
        const auto it = obj->find(key);
        if (it == obj->end()) return;
        Path p = path;
        p.push_back(key);
        if (!it->is_number_integer()) fail(p, "expected an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (it->is_number_unsigned()) {
                out = it->get<Int>();
            } else {
                fail(p, "expected a non-negative integer");
            }
        } else {
            out = it->get<Int>();
        }
    }

    template <class F>
    void guarded(const Path& path, F&& f) const {
        try {
            f();
        } catch (const DomainError& e) {
            fail(path, e.what());
        }
    }

private:
    const std::string& text_;
    const std::string& source_;
};

const std::set<std::string> kTopKeys{"name", "signal", "sensor", "oup", "vdp", "ekf", "lqr", "run"};
const std::set<std::string> kSensorKeys{"n_mean_atoms",  "n_sigma_atoms", "meas_strength_hz", "efficiency",
                                        "kappa_loc_hz",  "kappa_coll_hz", "omega_bar_rad_s",  "dt_s"};
const std::set<std::string> kOupKeys{"chi_hz", "q_omega_rad2_s3"};
const std::set<std::string> kVdpKeys{"p", "k", "m", "c", "t_filter_s", "nu0", "omega0_rad_s", "upsilon0",
                                     "noise_density_rad2_s"};
const std::set<std::string> kEkfOupKeys{"chi_hz", "q_omega_rad2_s3", "prior_sigma0_rad_s"};
const std::set<std::string> kEkfVdpKeys{"p",          "k",
                                        "m",          "c",
                                        "t_filter_s", "q_noise_rad2_s",
                                        "prior_sigma0_rad_s", "signal_block_sigma0_rad_s"};
const std::set<std::string> kLqrKeys{"lambda_hz"};
const std::set<std::string> kRunKeys{"horizon_s", "trajectories", "seed", "record_stride"};

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& source) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t pos = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        std::string msg = e.what();
        const auto colon = msg.find("syntax error");
        if (colon != std::string::npos) msg = msg.substr(colon);
        throw ConfigError(source, line_at(text, pos), msg);
    }
    const Reader rd(text, source);
    if (!root.is_object()) rd.fail({}, "top level must be an object");
    rd.check_keys(root, {}, kTopKeys);

    ScenarioConfig cfg;
    if (const auto it = root.find("name"); it != root.end()) {
        if (!it->is_string()) rd.fail({"name"}, "expected a string");
        cfg.name = it->get<std::string>();
    }
    std::string kind = "oup";
    if (const auto it = root.find("signal"); it != root.end()) {
        if (!it->is_string()) rd.fail({"signal"}, "expected a string");
        kind = it->get<std::string>();
        if (kind != "oup" && kind != "mcg") rd.fail({"signal"}, "expected \"oup\" or \"mcg\", got \"" + kind + "\"");
    }
    const bool oup = kind == "oup";

    const Path ps{"sensor"};
    const Json* sensor = rd.section(root, ps, kSensorKeys);
    SensorParams& sp = cfg.sensor;
    rd.number(sensor, ps, "n_mean_atoms", sp.n_mean);
    rd.number(sensor, ps, "n_sigma_atoms", sp.n_sigma);
    rd.number(sensor, ps, "meas_strength_hz", sp.meas_strength);
    rd.number(sensor, ps, "efficiency", sp.efficiency);
    rd.number(sensor, ps, "kappa_loc_hz", sp.kappa_loc);
    rd.number(sensor, ps, "kappa_coll_hz", sp.kappa_coll);
    rd.number(sensor, ps, "omega_bar_rad_s", sp.omega_bar);
    rd.number(sensor, ps, "dt_s", sp.dt);
    rd.guarded(ps, [&] { sp.validate(); });

    const Path pe{"ekf"};
    if (oup) {
        if (root.contains("vdp")) rd.fail({"vdp"}, "section only valid with signal \"mcg\"");
        const Path po{"oup"};
        const Json* sec = rd.section(root, po, kOupKeys);
        OupParams op;
        rd.number(sec, po, "chi_hz", op.chi);
        rd.number(sec, po, "q_omega_rad2_s3", op.q_omega);
        op.omega_bar = sp.omega_bar;
        rd.guarded(po, [&] { op.validate(); });
        cfg.signal = op;

        const Json* ekf = rd.section(root, pe, kEkfOupKeys);
        OupFilterModel fm;
        fm.sensor = sp;
        fm.chi_k = op.chi;
        fm.q_k = op.q_omega;
        rd.number(ekf, pe, "chi_hz", fm.chi_k);
        rd.number(ekf, pe, "q_omega_rad2_s3", fm.q_k);
        rd.number(ekf, pe, "prior_sigma0_rad_s", cfg.prior_sigma0);
        rd.guarded(pe, [&] { fm.validate(); });
        cfg.ekf_model = fm;
    } else {
        if (root.contains("oup")) rd.fail({"oup"}, "section only valid with signal \"oup\"");
        const Path pv{"vdp"};
        const Json* sec = rd.section(root, pv, kVdpKeys);
        VdpParams vp;
        rd.number(sec, pv, "p", vp.p);
        rd.number(sec, pv, "k", vp.k);
        rd.number(sec, pv, "m", vp.m);
        rd.number(sec, pv, "c", vp.c);
        rd.number(sec, pv, "t_filter_s", vp.t_filter);
        rd.number(sec, pv, "nu0", vp.init.nu);
        rd.number(sec, pv, "omega0_rad_s", vp.init.omega);
        rd.number(sec, pv, "upsilon0", vp.init.upsilon);
        rd.number(sec, pv, "noise_density_rad2_s", vp.noise_density);
        rd.guarded(pv, [&] { vp.validate(); });
        cfg.signal = vp;

        const Json* ekf = rd.section(root, pe, kEkfVdpKeys);
        VdpFilterModel fm;
        fm.sensor = sp;
        fm.p_k = vp.p;
        fm.k_k = vp.k;
        fm.m_k = vp.m;
        fm.c_k = vp.c;
        fm.t_k = vp.t_filter;
        fm.q_k = vp.noise_density;
        rd.number(ekf, pe, "p", fm.p_k);
        rd.number(ekf, pe, "k", fm.k_k);
        rd.number(ekf, pe, "m", fm.m_k);
        rd.number(ekf, pe, "c", fm.c_k);
        rd.number(ekf, pe, "t_filter_s", fm.t_k);
        rd.number(ekf, pe, "q_noise_rad2_s", fm.q_k);
        rd.number(ekf, pe, "prior_sigma0_rad_s", cfg.prior_sigma0);
        rd.number(ekf, pe, "signal_block_sigma0_rad_s", cfg.signal_block_sigma0);
        rd.guarded(pe, [&] { fm.validate(); });
        cfg.ekf_model = fm;
    }

    const Path pl{"lqr"};
    const Json* lqr = rd.section(root, pl, kLqrKeys);
    rd.number(lqr, pl, "lambda_hz", cfg.lqr.lambda_gain);
    rd.guarded(pl, [&] { cfg.lqr.validate(); });

    const Path pr{"run"};
    const Json* run = rd.section(root, pr, kRunKeys);
    rd.number(run, pr, "horizon_s", cfg.horizon);
    rd.integer(run, pr, "trajectories", cfg.n_trajectories);
    rd.integer(run, pr, "seed", cfg.base_seed);
    rd.integer(run, pr, "record_stride", cfg.record_stride);
    if (cfg.n_trajectories < 1) rd.fail({"run", "trajectories"}, "must be >= 1");
    if (cfg.record_stride < 1) rd.fail({"run", "record_stride"}, "must be >= 1");

    rd.guarded(pr, [&] { cfg.validate(); });
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

Json scenario_to_json(const ScenarioConfig& cfg) {
    const SensorParams& sp = cfg.sensor;
    Json j;
    j["name"] = cfg.name;
    j["signal"] = cfg.kind() == SignalKind::kOup ? "oup" : "mcg";
    j["sensor"] = {{"n_mean_atoms", sp.n_mean},         {"n_sigma_atoms", sp.n_sigma},
                   {"meas_strength_hz", sp.meas_strength}, {"efficiency", sp.efficiency},
                   {"kappa_loc_hz", sp.kappa_loc},      {"kappa_coll_hz", sp.kappa_coll},
                   {"omega_bar_rad_s", sp.omega_bar},   {"dt_s", sp.dt}};
    if (cfg.kind() == SignalKind::kOup) {
        const auto& op = std::get<OupParams>(cfg.signal);
        const auto& fm = std::get<OupFilterModel>(cfg.ekf_model);
        j["oup"] = {{"chi_hz", op.chi}, {"q_omega_rad2_s3", op.q_omega}};
        j["ekf"] = {{"chi_hz", fm.chi_k}, {"q_omega_rad2_s3", fm.q_k}, {"prior_sigma0_rad_s", cfg.prior_sigma0}};
    } else {
        const auto& vp = std::get<VdpParams>(cfg.signal);
        const auto& fm = std::get<VdpFilterModel>(cfg.ekf_model);
        j["vdp"] = {{"p", vp.p},
                    {"k", vp.k},
                    {"m", vp.m},
                    {"c", vp.c},
                    {"t_filter_s", vp.t_filter},
                    {"nu0", vp.init.nu},
                    {"omega0_rad_s", vp.init.omega},
                    {"upsilon0", vp.init.upsilon},
                    {"noise_density_rad2_s", vp.noise_density}};
        j["ekf"] = {{"p", fm.p_k},
                    {"k", fm.k_k},
                    {"m", fm.m_k},
                    {"c", fm.c_k},
                    {"t_filter_s", fm.t_k},
                    {"q_noise_rad2_s", fm.q_k},
                    {"prior_sigma0_rad_s", cfg.prior_sigma0},
                    {"signal_block_sigma0_rad_s", cfg.signal_block_sigma0}};
    }
    j["lqr"] = {{"lambda_hz", cfg.lqr.lambda_gain}};
    j["run"] = {{"horizon_s", cfg.horizon},
                {"trajectories", cfg.n_trajectories},
                {"seed", cfg.base_seed},
                {"record_stride", cfg.record_stride}};
    return j;
}

std::vector<std::string> preset_names() { return {"fig2", "fig3", "fig3-mismatched", "fig4", "large-m"}; }

std::string preset_description(const std::string& name) {
    if (name == "fig2") return "OUP field, local dephasing only, M = 1e-8 Hz, matched EKF, 10 ms";
    if (name == "fig3") return "as fig2 with collective dephasing 1e-5 Hz";
    if (name == "fig3-mismatched") return "as fig3 with EKF q_K = q/2 and chi_K = 10 chi";
    if (name == "fig4") return "noisy VdP cardiac waveform, q_n = 2.5e-7 rad^2/s, 70 ms (three cycles)";
    if (name == "large-m") return "OUP field with M = 1e-3 Hz, collective dephasing 1e-9 Hz (short horizon)";
    throw ConfigError("<preset>", 0, "unknown preset \"" + name + "\"");
}

ScenarioConfig preset(const std::string& name) {
    preset_description(name);
    ScenarioConfig cfg;
    cfg.name = name;
    cfg.sensor = SensorParams{};
    cfg.sensor.omega_bar = 2.0 * std::numbers::pi * 30e3;

    if (name == "fig4") {
        VdpParams vp;
        VdpFilterModel fm;
        fm.sensor = cfg.sensor;
        cfg.signal = vp;
        cfg.ekf_model = fm;
        cfg.horizon = 0.07;
        return cfg;
    }

    OupParams op;
    op.omega_bar = cfg.sensor.omega_bar;
    OupFilterModel fm;
    if (name == "fig3" || name == "fig3-mismatched") cfg.sensor.kappa_coll = 1e-5;
    if (name == "large-m") {
        cfg.sensor.meas_strength = 1e-3;
        cfg.sensor.kappa_coll = 1e-9;
        cfg.sensor.dt = 1e-12;
        cfg.horizon = 1e-6;
        cfg.record_stride = 10;
        op.omega_bar = cfg.sensor.omega_bar;
    }
    fm.sensor = cfg.sensor;
    fm.chi_k = op.chi;
    fm.q_k = op.q_omega;
    if (name == "fig3-mismatched") {
        fm.q_k = op.q_omega / 2.0;
        fm.chi_k = 10.0 * op.chi;
    }
    cfg.signal = op;
    cfg.ekf_model = fm;
    return cfg;
}

}  // namespace spintrack
