#include "itr/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace itr {

using nlohmann::json;

RunMode parse_run_mode(const std::string& name) {
    if (name == "simulate") return RunMode::simulate;
    if (name == "fit") return RunMode::fit;
    if (name == "qcurve") return RunMode::qcurve;
    throw ConfigError("unknown mode '" + name + "'");
}

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::simulate: return "simulate";
        case RunMode::fit: return "fit";
        case RunMode::qcurve: return "qcurve";
    }
    return "?";
}

EstimatorConfig default_estimator(RunMode mode) {
    EstimatorConfig c;
    if (mode == RunMode::simulate) {
        c.kernel = KernelSpec{KernelFamily::epanechnikov};
        c.pilot_c = 7.25;
    } else {
        c.kernel = KernelSpec{KernelFamily::quartic};
        c.pilot_c = 0.05;
        c.centre_c = 0.05;
        c.propensity.form = PropensityForm::logistic_linear;
        c.outcome.basis = OutcomeBasis::linear;
    }
    return c;
}

RunConfig default_config(RunMode mode) {
    RunConfig c;
    c.mode = mode;
    c.estimator = default_estimator(mode);
    return c;
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [k, v] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                    [&](const char* a) { return k == a; });
        if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

double positive(double v, const std::string& key) {
    if (!(v > 0.0)) throw ConfigError(key + " must be positive");
    return v;
}

VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

EstimatorConfig parse_estimator(const json& j, EstimatorConfig c) {
    const std::string w = "estimator";
    check_keys(j, w, {"kernel", "pilot_c", "centre_c", "cv_grid", "solver", "propensity", "outcome",
                      "beta_inference", "root_inference", "retry_from_zeros", "restarts",
                      "restart_spread"});
    try {
        if (j.contains("kernel")) c.kernel.family = parse_kernel_family(get<std::string>(j, "kernel", w, ""));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(w + ".kernel: " + e.what());
    }
    c.pilot_c = positive(get(j, "pilot_c", w, c.pilot_c), w + ".pilot_c");
    c.centre_c = positive(get(j, "centre_c", w, c.centre_c), w + ".centre_c");
    c.beta_inference = get(j, "beta_inference", w, c.beta_inference);
    c.root_inference = get(j, "root_inference", w, c.root_inference);
    c.retry_from_zeros = get(j, "retry_from_zeros", w, c.retry_from_zeros);
    c.restarts = get(j, "restarts", w, c.restarts);
    if (c.restarts < 0) throw ConfigError(w + ".restarts must be non-negative");
    c.restart_spread = positive(get(j, "restart_spread", w, c.restart_spread), w + ".restart_spread");

    if (j.contains("cv_grid")) {
        const json& g = j.at("cv_grid");
        const std::string wg = w + ".cv_grid";
        check_keys(g, wg, {"lo", "hi", "count"});
        c.cv_lo = positive(get(g, "lo", wg, c.cv_lo), wg + ".lo");
        c.cv_hi = positive(get(g, "hi", wg, c.cv_hi), wg + ".hi");
        c.cv_count = get(g, "count", wg, c.cv_count);
        if (c.cv_count < 1) throw ConfigError(wg + ".count must be positive");
        if (c.cv_hi < c.cv_lo) throw ConfigError(wg + ": hi must be >= lo");
    }
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        const std::string ws = w + ".solver";
        check_keys(s, ws, {"tol", "max_iter", "init"});
        c.solver.tol = positive(get(s, "tol", ws, c.solver.tol), ws + ".tol");
        c.solver.max_iter = get(s, "max_iter", ws, c.solver.max_iter);
        if (c.solver.max_iter < 1) throw ConfigError(ws + ".max_iter must be positive");
        if (s.contains("init")) {
            const json& init = s.at("init");
            if (init.is_string()) {
                const auto name = init.get<std::string>();
                if (name == "ols") {
                    c.init = InitRule::ols;
                } else if (name == "zeros") {
                    c.init = InitRule::zeros;
                } else {
                    throw ConfigError(ws + ".init: expected \"ols\", \"zeros\" or a vector");
                }
            } else if (init.is_array()) {
                c.init = InitRule::given;
                c.init_vector = to_vec(get<std::vector<double>>(s, "init", ws, {}));
            } else {
                throw ConfigError(ws + ".init: expected \"ols\", \"zeros\" or a vector");
            }
        }
    }
    if (j.contains("propensity")) {
        const json& p = j.at("propensity");
        const std::string wp = w + ".propensity";
        check_keys(p, wp, {"form", "intercept", "fixed_value", "clip_floor", "max_iter", "grad_tol"});
        try {
            if (p.contains("form")) c.propensity.form = parse_propensity_form(get<std::string>(p, "form", wp, ""));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(wp + ".form: " + e.what());
        }
        c.propensity.intercept = get(p, "intercept", wp, c.propensity.intercept);
        c.propensity.fixed_value = get(p, "fixed_value", wp, c.propensity.fixed_value);
        c.propensity.clip_floor = get(p, "clip_floor", wp, c.propensity.clip_floor);
        c.propensity.max_iter = get(p, "max_iter", wp, c.propensity.max_iter);
        c.propensity.grad_tol = positive(get(p, "grad_tol", wp, c.propensity.grad_tol), wp + ".grad_tol");
        if (!(c.propensity.fixed_value > 0.0 && c.propensity.fixed_value < 1.0)) {
            throw ConfigError(wp + ".fixed_value must lie in (0, 1)");
        }
        if (!(c.propensity.clip_floor > 0.0 && c.propensity.clip_floor < 0.5)) {
            throw ConfigError(wp + ".clip_floor must lie in (0, 0.5)");
        }
        if (c.propensity.max_iter < 1) throw ConfigError(wp + ".max_iter must be positive");
    }
    if (j.contains("outcome")) {
        const json& o = j.at("outcome");
        const std::string wo = w + ".outcome";
        check_keys(o, wo, {"basis", "terms", "init", "max_iter"});
        try {
            if (o.contains("basis")) c.outcome.basis = parse_outcome_basis(get<std::string>(o, "basis", wo, ""));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(wo + ".basis: " + e.what());
        }
        c.outcome.terms = get(o, "terms", wo, c.outcome.terms);
        if (o.contains("init")) {
            if (o.at("init").is_null()) {
                c.outcome.init.reset();
            } else {
                c.outcome.init = to_vec(get<std::vector<double>>(o, "init", wo, {}));
            }
        }
        c.outcome.max_iter = get(o, "max_iter", wo, c.outcome.max_iter);
        if (c.outcome.max_iter < 1) throw ConfigError(wo + ".max_iter must be positive");
    }
    return c;
}

Scenario parse_scenario(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario: expected a JSON object");
    try {
        if (!j.contains("preset")) return scenario_from_json(j);
        json full = to_json(preset(j.at("preset").get<int>()));
        for (const auto& [k, v] : j.items()) {
            if (k == "preset") continue;
            if (!full.contains(k)) throw ConfigError("scenario: unknown key '" + k + "'");
            full[k] = v;
        }
        return scenario_from_json(full);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
}

}  // namespace

RunConfig parse_config(const json& j, RunMode mode) {
    check_keys(j, "config", {"mode", "scenario", "case", "reps", "seed", "threads", "estimator",
                             "bootstrap"});
    if (j.contains("mode")) mode = parse_run_mode(get<std::string>(j, "mode", "config", ""));
    RunConfig c = default_config(mode);
    if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario"));
    if (j.contains("case")) {
        try {
            c.study_case = parse_case(get<std::string>(j, "case", "config", ""));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config.case: ") + e.what());
        }
    }
    c.reps = get(j, "reps", "config", c.reps);
    if (c.reps < 1) throw ConfigError("config.reps must be positive");
    c.seed = get(j, "seed", "config", c.seed);
    c.threads = get(j, "threads", "config", c.threads);
    if (c.threads < 0) throw ConfigError("config.threads must be >= 0");
    if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator"), c.estimator);
    if (j.contains("bootstrap")) {
        const json& b = j.at("bootstrap");
        check_keys(b, "bootstrap", {"draws", "level"});
        c.bootstrap_draws = get(b, "draws", "bootstrap", c.bootstrap_draws);
        c.bootstrap_level = get(b, "level", "bootstrap", c.bootstrap_level);
        if (c.bootstrap_draws < 50) throw ConfigError("bootstrap.draws must be at least 50");
        if (!(c.bootstrap_level > 0.0 && c.bootstrap_level < 1.0)) {
            throw ConfigError("bootstrap.level must lie in (0, 1)");
        }
    }
    return c;
}

RunConfig parse_config_text(const std::string& text, RunMode mode) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
        const auto line = 1 + std::count(upto.begin(), upto.end(), '\n');
        throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what());
    }
    return parse_config(j, mode);
}

RunConfig load_config(const std::string& path, RunMode mode) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), mode);
}

json to_json(const EstimatorConfig& c) {
    json init;
    switch (c.init) {
        case InitRule::ols: init = "ols"; break;
        case InitRule::zeros: init = "zeros"; break;
        case InitRule::given: init = to_std(c.init_vector); break;
    }
    return {{"kernel", to_string(c.kernel.family)},
            {"pilot_c", c.pilot_c},
            {"centre_c", c.centre_c},
            {"cv_grid", {{"lo", c.cv_lo}, {"hi", c.cv_hi}, {"count", c.cv_count}}},
            {"solver", {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}, {"init", init}}},
            {"propensity",
             {{"form", to_string(c.propensity.form)},
              {"intercept", c.propensity.intercept},
              {"fixed_value", c.propensity.fixed_value},
              {"clip_floor", c.propensity.clip_floor},
              {"max_iter", c.propensity.max_iter},
              {"grad_tol", c.propensity.grad_tol}}},
            {"outcome",
             {{"basis", to_string(c.outcome.basis)},
              {"terms", c.outcome.terms},
              {"init", c.outcome.init ? json(to_std(*c.outcome.init)) : json()},
              {"max_iter", c.outcome.max_iter}}},
            {"beta_inference", c.beta_inference},
            {"root_inference", c.root_inference},
            {"retry_from_zeros", c.retry_from_zeros},
            {"restarts", c.restarts},
            {"restart_spread", c.restart_spread}};
}

json to_json(const RunConfig& c) {
    json j = {{"mode", to_string(c.mode)},
              {"case", to_string(c.study_case)},
              {"reps", c.reps},
              {"seed", c.seed},
              {"threads", c.threads},
              {"estimator", to_json(c.estimator)},
              {"bootstrap", {{"draws", c.bootstrap_draws}, {"level", c.bootstrap_level}}}};
    if (c.scenario) j["scenario"] = to_json(*c.scenario);
    return j;
}

}  // namespace itr
