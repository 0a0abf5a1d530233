#include "itr/sim_lab.hpp"

#include "itr/errors.hpp"
#include "itr/parallel.hpp"
#include "itr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace itr {

namespace {

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Index>(v.size()));
    Index k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void Scenario::validate() const {
    if (n < 2) throw std::invalid_argument("scenario: n must be at least 2");
    if (d < 1) throw std::invalid_argument("scenario: d must be at least 1");
    if (beta0.size() != d || beta0(0) != 1.0) {
        throw std::invalid_argument("scenario: beta0 must have length d and leading entry 1");
    }
    if (mu0 == MuShape::linear && alpha0.size() != d) {
        throw std::invalid_argument("scenario: alpha0 must have length d");
    }
    if (mu0 == MuShape::sin_plus_halfquad && (alpha10.size() != d || alpha20.size() != d)) {
        throw std::invalid_argument("scenario: alpha10 and alpha20 must have length d");
    }
    if (pi0 == PiShape::expit_gamma0 && gamma0.size() != d) {
        throw std::invalid_argument("scenario: gamma0 must have length d");
    }
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("scenario: noise_scale must be >= 0");
}

Scenario preset(int sim, Index n) {
    if (sim < 1 || sim > 6) throw std::invalid_argument("preset: simulation number must be 1..6");
    Scenario s;
    s.name = "sim" + std::to_string(sim);
    s.n = n;
    s.d = 4;
    s.beta0 = vec({1, 1, -1, 1});
    s.alpha0 = vec({1, -1, 1, 1});
    s.alpha10 = vec({1, -1, 1, 1});
    s.alpha20 = vec({1, 0, -1, 0});
    s.gamma0 = vec({0.1, 0, -0.1, 0});
    const int base = (sim - 1) % 3;
    s.q0 = base == 0 ? QShape::linear_2t : base == 1 ? QShape::t_plus_sin_t : QShape::t_sq_minus_2;
    s.mu0 = base == 0 ? MuShape::linear : MuShape::sin_plus_halfquad;
    s.error = base == 0 ? ErrorShape::normal_var_quarter : ErrorShape::hetero_log;
    s.pi0 = sim <= 3 ? PiShape::const_half : PiShape::expit_gamma0;
    return s;
}

Case parse_case(const std::string& name) {
    if (name == "I") return Case::I;
    if (name == "II") return Case::II;
    if (name == "III") return Case::III;
    if (name == "IV") return Case::IV;
    throw std::invalid_argument("unknown case '" + name + "' (expected I, II, III or IV)");
}

std::string to_string(Case c) {
    switch (c) {
        case Case::I: return "I";
        case Case::II: return "II";
        case Case::III: return "III";
        case Case::IV: return "IV";
    }
    return "?";
}

double q0(const Scenario& scn, double t) {
    switch (scn.q0) {
        case QShape::linear_2t: return 2.0 * t;
        case QShape::t_plus_sin_t: return t + std::sin(t);
        case QShape::t_sq_minus_2: return t * t - 2.0;
    }
    return 0.0;
}

double mu0(const Scenario& scn, const RowRef& x) {
    if (scn.mu0 == MuShape::linear) return 1.0 + x.dot(scn.alpha0.transpose());
    const double q = x.dot(scn.alpha20.transpose());
    return 1.0 + std::sin(x.dot(scn.alpha10.transpose())) + 0.5 * q * q;
}

double pi0(const Scenario& scn, const RowRef& x) {
    if (scn.pi0 == PiShape::const_half) return 0.5;
    return expit(x.dot(scn.gamma0.transpose()));
}

double error_sd(const Scenario& scn, double t) {
    if (scn.error == ErrorShape::normal_var_quarter) return 0.5;
    return std::sqrt(std::log(t * t + 1.0));
}

Generated generate(const Scenario& scn, std::uint64_t seed) {
    scn.validate();
    auto rng = make_stream(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index n = scn.n;
    MatrixXd x(n, scn.d);
    VectorXd a(n), y(n), y1(n), y0(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < scn.d; ++j) x(i, j) = normal(rng);
        const auto row = x.row(i);
        const double t = row.dot(scn.beta0.transpose());
        a(i) = uniform01(rng) < pi0(scn, row) ? 1.0 : 0.0;
        const double e = scn.noise_scale * error_sd(scn, t) * normal(rng);
        y0(i) = mu0(scn, row) + e;
        y1(i) = y0(i) + q0(scn, t);
        y(i) = a(i) == 1.0 ? y1(i) : y0(i);
    }
    // A sample with a single arm is redrawn from the next stream.
    const double treated = a.sum();
    if (treated == 0.0 || treated == static_cast<double>(n)) return generate(scn, mix64(seed));
    return Generated{Dataset(std::move(x), std::move(a), std::move(y)), std::move(y1), std::move(y0)};
}

McValue true_value_mc(const Scenario& scn, Index draws, std::uint64_t seed, unsigned threads) {
    scn.validate();
    if (draws < 2) throw std::invalid_argument("true_value_mc: need at least 2 draws");
    constexpr Index chunk = 50000;
    const Index chunks = (draws + chunk - 1) / chunk;
    std::vector<double> sums(static_cast<std::size_t>(chunks)), sq(static_cast<std::size_t>(chunks));
    parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
        auto rng = make_stream(seed, c);
        std::normal_distribution<double> normal(0.0, 1.0);
        const Index count = std::min(chunk, draws - static_cast<Index>(c) * chunk);
        Eigen::RowVectorXd x(scn.d);
        double s = 0.0, s2 = 0.0;
        for (Index k = 0; k < count; ++k) {
            for (Index j = 0; j < scn.d; ++j) x(j) = normal(rng);
            const double t = x.dot(scn.beta0.transpose());
            const double q = q0(scn, t);
            const double y0 = mu0(scn, x) + scn.noise_scale * error_sd(scn, t) * normal(rng);
            const double v = q > 0.0 ? y0 + q : y0;
            s += v;
            s2 += v * v;
        }
        sums[c] = s;
        sq[c] = s2;
    });
    double s = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < sums.size(); ++c) {
        s += sums[c];
        s2 += sq[c];
    }
    const double m = s / static_cast<double>(draws);
    const double var = (s2 - static_cast<double>(draws) * m * m) / static_cast<double>(draws - 1);
    return {m, std::sqrt(std::max(var, 0.0) / static_cast<double>(draws))};
}

double true_value_quadrature(const Scenario& scn) {
    scn.validate();
    const double sigma = scn.beta0.norm();
    const double positive_part = simpson(
        [&](double z) {
            const double t = sigma * z;
            const double q = q0(scn, t);
            return q > 0.0 ? q * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) : 0.0;
        },
        -12.0, 12.0, 200000);
    double mean_mu = 1.0;
    if (scn.mu0 == MuShape::sin_plus_halfquad) mean_mu += 0.5 * scn.alpha20.squaredNorm();
    return mean_mu + positive_part;
}

std::vector<double> true_roots(const Scenario& scn) {
    switch (scn.q0) {
        case QShape::linear_2t:
        case QShape::t_plus_sin_t: return {0.0};
        case QShape::t_sq_minus_2: return {-std::sqrt(2.0), std::sqrt(2.0)};
    }
    return {};
}

EstimatorConfig working_models(const Scenario& scn, Case c, EstimatorConfig base) {
    const bool pi_ok = c == Case::I || c == Case::II;
    const bool mu_ok = c == Case::I || c == Case::III;
    const bool constant_truth = scn.pi0 == PiShape::const_half;

    PropensitySpec& ps = base.propensity;
    if (pi_ok) {
        ps.form = constant_truth ? PropensityForm::constant : PropensityForm::logistic_linear;
    } else if (constant_truth) {
        ps.form = PropensityForm::fixed;
        ps.fixed_value = 0.4;
    } else {
        ps.form = PropensityForm::constant;
    }

    OutcomeSpec& os = base.outcome;
    os.terms.clear();
    os.init.reset();
    if (scn.mu0 == MuShape::linear) {
        os.basis = mu_ok ? OutcomeBasis::linear : OutcomeBasis::constant;
    } else if (mu_ok) {
        os.basis = OutcomeBasis::sin_plus_halfquad;
        VectorXd init(1 + 2 * scn.d);
        init(0) = 1.0;
        init.segment(1, scn.d) = scn.alpha10;
        init.segment(1 + scn.d, scn.d) = scn.alpha20;
        os.init = init;
    } else {
        os.basis = OutcomeBasis::linear;
    }
    return base;
}

namespace {

ReplicateResult run_replicate(const Scenario& scn, const EstimatorConfig& cfg,
                              const std::vector<double>& truth_roots, std::uint64_t seed) {
    ReplicateResult r;
    try {
        const Generated g = generate(scn, seed);
        const PolicyReport rep = fit_policy(g.data, cfg);
        r.converged = rep.solution.converged;
        r.beta = rep.solution.beta.free();
        r.beta_sd = rep.beta_inference ? rep.beta_inference->sd
                                       : VectorXd::Constant(r.beta.size(), nan_v);
        r.value = rep.value.v_hat;
        r.value_sd = rep.value_inference.sd;
        r.h_opt = rep.h_opt();
        const double tol = 0.7;
        for (double z0 : truth_roots) {
            RootOutcome ro{.truth = z0};
            const RootReport* best = nullptr;
            for (const auto& cand : rep.root_reports) {
                if (!best || std::abs(cand.root - z0) < std::abs(best->root - z0)) best = &cand;
            }
            if (best && std::abs(best->root - z0) <= tol) {
                ro.found = true;
                ro.estimate = best->root;
                if (best->inference) {
                    ro.has_inference = true;
                    ro.bias_hat = best->inference->bias_hat;
                    ro.sd_hat = best->inference->sd_hat;
                }
            }
            r.roots.push_back(ro);
        }
        r.ok = r.converged;
        if (!r.converged) r.error = "beta solver did not converge";
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

MetricSummary summarize_values(std::string name, double truth, const std::vector<double>& est,
                               const std::vector<double>& sd_hat, const std::vector<double>& centre) {
    MetricSummary m;
    m.name = std::move(name);
    m.truth = truth;
    m.count = static_cast<Index>(est.size());
    if (est.empty()) {
        m.mean = m.bias = m.sd = m.sd_hat = m.coverage = m.mse = nan_v;
        return m;
    }
    double s = 0.0;
    for (double v : est) s += v;
    m.mean = s / static_cast<double>(est.size());
    m.bias = m.mean - truth;
    double ss = 0.0, se = 0.0;
    for (double v : est) {
        ss += (v - m.mean) * (v - m.mean);
        se += (v - truth) * (v - truth);
    }
    m.sd = est.size() > 1 ? std::sqrt(ss / static_cast<double>(est.size() - 1)) : nan_v;
    m.mse = se / static_cast<double>(est.size());
    double sh = 0.0;
    Index nsh = 0, hits = 0;
    for (std::size_t k = 0; k < est.size(); ++k) {
        if (std::isnan(sd_hat[k])) continue;
        sh += sd_hat[k];
        ++nsh;
        if (std::abs(centre[k] - truth) <= 1.959963984540054 * sd_hat[k]) ++hits;
    }
    m.sd_hat = nsh ? sh / static_cast<double>(nsh) : nan_v;
    m.coverage = nsh ? static_cast<double>(hits) / static_cast<double>(nsh) : nan_v;
    return m;
}

}  // namespace

std::vector<MetricSummary> summarize(const std::vector<ReplicateResult>& reps,
                                     const VectorXd& beta0, double true_value,
                                     const std::vector<double>& roots) {
    std::vector<const ReplicateResult*> ok;
    for (const auto& r : reps) {
        if (r.ok) ok.push_back(&r);
    }
    std::vector<MetricSummary> out;
    for (Index j = 1; j < beta0.size(); ++j) {
        std::vector<double> est, sd;
        for (const auto* r : ok) {
            est.push_back(r->beta(j - 1));
            sd.push_back(r->beta_sd(j - 1));
        }
        out.push_back(summarize_values("beta" + std::to_string(j + 1), beta0(j), est, sd, est));
    }
    {
        std::vector<double> est, sd;
        for (const auto* r : ok) {
            est.push_back(r->value);
            sd.push_back(r->value_sd);
        }
        out.push_back(summarize_values("V", true_value, est, sd, est));
    }
    for (std::size_t k = 0; k < roots.size(); ++k) {
        std::vector<double> est, sd, centre;
        double bias_hat = 0.0;
        Index n_bias = 0;
        for (const auto* r : ok) {
            const RootOutcome& ro = r->roots[k];
            if (!ro.found) continue;
            est.push_back(ro.estimate);
            sd.push_back(ro.has_inference ? ro.sd_hat : nan_v);
            centre.push_back(ro.has_inference ? ro.estimate - ro.bias_hat : ro.estimate);
            if (ro.has_inference) {
                bias_hat += ro.bias_hat;
                ++n_bias;
            }
        }
        const std::string name = roots.size() == 1 ? "root" : "root" + std::to_string(k + 1);
        MetricSummary m = summarize_values(name, roots[k], est, sd, centre);
        m.bias_hat = n_bias ? bias_hat / static_cast<double>(n_bias) : nan_v;
        m.found_rate = ok.empty() ? nan_v
                                  : static_cast<double>(est.size()) / static_cast<double>(ok.size());
        out.push_back(m);
    }
    return out;
}

StudyReport run_study(const Scenario& scn, Case c, Index reps, std::uint64_t seed,
                      const EstimatorConfig& base, unsigned threads) {
    if (reps < 1) throw std::invalid_argument("run_study: need at least one replicate");
    scn.validate();
    const EstimatorConfig cfg = working_models(scn, c, base);
    const auto roots = true_roots(scn);

    StudyReport rep;
    rep.scenario = scn;
    rep.study_case = c;
    rep.reps = reps;
    rep.seed = seed;
    rep.init_rule = cfg.init == InitRule::ols ? "ols" : cfg.init == InitRule::zeros ? "zeros" : "given";
    rep.true_value = true_value_quadrature(scn);
    rep.replicates.resize(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
        rep.replicates[r] = run_replicate(scn, cfg, roots, stream_seed(seed, r));
    });
    for (const auto& r : rep.replicates) {
        if (!r.ok) ++rep.failures;
    }
    rep.metrics = summarize(rep.replicates, scn.beta0, rep.true_value, roots);
    return rep;
}

double q_at_zero_mse(const Scenario& scn, Case c, Index reps, std::uint64_t seed, double c_h,
                     const EstimatorConfig& base, unsigned threads) {
    const EstimatorConfig cfg = working_models(scn, c, base);
    const IndexVector beta(scn.beta0);
    const double truth = q0(scn, 0.0);
    std::vector<double> err(static_cast<std::size_t>(reps), nan_v);
    parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
        const Generated g = generate(scn, stream_seed(seed, r));
        const NuisanceFit fit = fit_nuisances(g.data, cfg);
        const Plugins pl = evaluate_plugins(fit, g.data.x());
        const VectorXd t = beta.index(g.data.x());
        const Bandwidth h(c_h * sample_sd(t) * std::pow(static_cast<double>(scn.n), -0.2));
        const QEstimator q = QEstimator::build(g.data, pl, beta, cfg.kernel, h);
        err[r] = q(0.0) - truth;
    });
    double s = 0.0;
    for (double e : err) s += e * e;
    return s / static_cast<double>(reps);
}

// -------------------------------------------------------------------------
// Serialization
// -------------------------------------------------------------------------

namespace {

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_json_vec(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

template <class E>
E enum_from(const nlohmann::json& j, std::initializer_list<std::pair<const char*, E>> table,
            const char* key) {
    const auto s = j.get<std::string>();
    for (const auto& [name, value] : table) {
        if (s == name) return value;
    }
    throw std::invalid_argument(std::string("scenario: unknown value '") + s + "' for " + key);
}

constexpr std::initializer_list<std::pair<const char*, QShape>> q_names = {
    {"linear_2t", QShape::linear_2t},
    {"t_plus_sin_t", QShape::t_plus_sin_t},
    {"t_sq_minus_2", QShape::t_sq_minus_2}};
constexpr std::initializer_list<std::pair<const char*, MuShape>> mu_names = {
    {"linear", MuShape::linear}, {"sin_plus_halfquad", MuShape::sin_plus_halfquad}};
constexpr std::initializer_list<std::pair<const char*, PiShape>> pi_names = {
    {"const_half", PiShape::const_half}, {"expit_gamma0", PiShape::expit_gamma0}};
constexpr std::initializer_list<std::pair<const char*, ErrorShape>> err_names = {
    {"normal_var_quarter", ErrorShape::normal_var_quarter}, {"hetero_log", ErrorShape::hetero_log}};

template <class E>
std::string enum_name(E v, std::initializer_list<std::pair<const char*, E>> table) {
    for (const auto& [name, value] : table) {
        if (v == value) return name;
    }
    return "?";
}

nlohmann::json num_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

std::string fmt(double v) {
    if (!std::isfinite(v)) return "NA";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

nlohmann::json to_json(const Scenario& s) {
    return {{"name", s.name},
            {"q0", enum_name(s.q0, q_names)},
            {"mu0", enum_name(s.mu0, mu_names)},
            {"pi0", enum_name(s.pi0, pi_names)},
            {"error", enum_name(s.error, err_names)},
            {"n", s.n},
            {"d", s.d},
            {"beta0", to_std(s.beta0)},
            {"alpha0", to_std(s.alpha0)},
            {"alpha10", to_std(s.alpha10)},
            {"alpha20", to_std(s.alpha20)},
            {"gamma0", to_std(s.gamma0)},
            {"noise_scale", s.noise_scale}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> keys = {"name", "q0",      "mu0",     "pi0",
                                                  "error", "n",      "d",       "beta0",
                                                  "alpha0", "alpha10", "alpha20", "gamma0",
                                                  "noise_scale"};
    if (!j.is_object()) throw std::invalid_argument("scenario must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            throw std::invalid_argument("scenario: unknown key '" + k + "'");
        }
    }
    for (const auto& k : keys) {
        if (!j.contains(k)) throw std::invalid_argument("scenario: missing key '" + k + "'");
    }
    Scenario s;
    s.name = j.at("name").get<std::string>();
    s.q0 = enum_from(j.at("q0"), q_names, "q0");
    s.mu0 = enum_from(j.at("mu0"), mu_names, "mu0");
    s.pi0 = enum_from(j.at("pi0"), pi_names, "pi0");
    s.error = enum_from(j.at("error"), err_names, "error");
    s.n = j.at("n").get<Index>();
    s.d = j.at("d").get<Index>();
    s.beta0 = from_json_vec(j.at("beta0"));
    s.alpha0 = from_json_vec(j.at("alpha0"));
    s.alpha10 = from_json_vec(j.at("alpha10"));
    s.alpha20 = from_json_vec(j.at("alpha20"));
    s.gamma0 = from_json_vec(j.at("gamma0"));
    s.noise_scale = j.at("noise_scale").get<double>();
    s.validate();
    return s;
}

nlohmann::json to_json(const StudyReport& r) {
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : r.metrics) {
        metrics.push_back({{"parameter", m.name},
                           {"true", m.truth},
                           {"count", m.count},
                           {"estimate", num_or_null(m.mean)},
                           {"bias", num_or_null(m.bias)},
                           {"sd", num_or_null(m.sd)},
                           {"sd_hat", num_or_null(m.sd_hat)},
                           {"cvg", num_or_null(m.coverage)},
                           {"mse", num_or_null(m.mse)},
                           {"bias_hat", num_or_null(m.bias_hat)},
                           {"found_rate", num_or_null(m.found_rate)}});
    }
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rr : r.replicates) {
        nlohmann::json roots = nlohmann::json::array();
        for (const auto& ro : rr.roots) {
            roots.push_back({{"truth", ro.truth},
                             {"found", ro.found},
                             {"estimate", ro.found ? nlohmann::json(ro.estimate) : nlohmann::json()},
                             {"bias_hat", ro.has_inference ? nlohmann::json(ro.bias_hat) : nlohmann::json()},
                             {"sd_hat", ro.has_inference ? nlohmann::json(ro.sd_hat) : nlohmann::json()}});
        }
        nlohmann::json beta = nlohmann::json::array(), beta_sd = nlohmann::json::array();
        for (Index k = 0; k < rr.beta.size(); ++k) {
            beta.push_back(num_or_null(rr.beta(k)));
            beta_sd.push_back(num_or_null(rr.beta_sd(k)));
        }
        reps.push_back({{"ok", rr.ok},
                        {"error", rr.error},
                        {"beta", beta},
                        {"beta_sd", beta_sd},
                        {"value", num_or_null(rr.value)},
                        {"value_sd", num_or_null(rr.value_sd)},
                        {"h_opt", num_or_null(rr.h_opt)},
                        {"roots", roots}});
    }
    return {{"scenario", to_json(r.scenario)},
            {"case", to_string(r.study_case)},
            {"reps", r.reps},
            {"failures", r.failures},
            {"seed", r.seed},
            {"init", r.init_rule},
            {"true_value", r.true_value},
            {"metrics", metrics},
            {"replicates", reps}};
}

std::string to_csv(const StudyReport& r) {
    std::ostringstream os;
    os << "parameter,true,estimate,sd,sd_hat,cvg,mse\n";
    for (const auto& m : r.metrics) {
        os << m.name << ',' << fmt(m.truth) << ',' << fmt(m.mean) << ',' << fmt(m.sd) << ','
           << fmt(m.sd_hat) << ',' << fmt(m.coverage) << ',' << fmt(m.mse) << '\n';
    }
    return os.str();
}

}  // namespace itr
