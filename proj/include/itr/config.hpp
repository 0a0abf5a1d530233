#pragma once

#include "itr/pipeline.hpp"
#include "itr/sim_lab.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace itr {

enum class RunMode { simulate, fit, qcurve };

RunMode parse_run_mode(const std::string& name);
std::string to_string(RunMode mode);

/// Invalid configuration; the message names the offending key or position.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    RunMode mode = RunMode::simulate;
    std::optional<Scenario> scenario;  // simulate only
    Case study_case = Case::I;
    Index reps = 200;
    std::uint64_t seed = 1;
    int threads = 0;  // 0: machine parallelism
    EstimatorConfig estimator;
    int bootstrap_draws = 500;
    double bootstrap_level = 0.95;
};

/// Defaults: epanechnikov with pilot constant 7.25 for simulations,
/// quartic with 0.05 and a logistic propensity for real-data fits.
EstimatorConfig default_estimator(RunMode mode);
RunConfig default_config(RunMode mode);

/// Unknown keys are rejected. Missing keys take the defaults of the mode.
/// A scenario may be given as {"preset": k, "n": n, ...overrides} or in full.
RunConfig parse_config(const nlohmann::json& j, RunMode mode);
RunConfig parse_config_text(const std::string& text, RunMode mode);
RunConfig load_config(const std::string& path, RunMode mode);

/// Fully expanded form; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const EstimatorConfig& config);

}  // namespace itr
