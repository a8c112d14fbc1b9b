#pragma once

#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "spintrack/experiment.hpp"

namespace spintrack {

/// Malformed or invalid configuration. line() is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, int line, const std::string& what)
        : std::runtime_error(format(source, line, what)), line_(line) {}
    int line() const noexcept { return line_; }

private:
    static std::string format(const std::string& source, int line, const std::string& what) {
        return source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what;
    }
    int line_;
};

/// Parses a scenario from JSON text. Keys carry their units in the name
/// (kappa_loc_hz, q_omega_rad2_s3, ...); unknown keys are rejected and
/// missing keys keep their defaults. `source` labels error messages.
ScenarioConfig parse_scenario(const std::string& text, const std::string& source = "<config>");

ScenarioConfig load_scenario(const std::string& path);

/// Full configuration echo; parse_scenario(to_json(cfg).dump()) == cfg.
nlohmann::ordered_json scenario_to_json(const ScenarioConfig& cfg);

/// Named scenarios: fig2, fig3, fig3-mismatched, fig4, large-m.
std::vector<std::string> preset_names();
std::string preset_description(const std::string& name);
ScenarioConfig preset(const std::string& name);

}  // namespace spintrack
