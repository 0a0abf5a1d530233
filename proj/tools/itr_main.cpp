// Command-line front end: simulation studies, fits on tabular data, and Q-curve bands.
//
// Exit codes: 0 success, 1 input or configuration error, 2 numerical failure.

#include "itr/config.hpp"
#include "itr/errors.hpp"
#include "itr/inference.hpp"
#include "itr/parallel.hpp"
#include "itr/pipeline.hpp"
#include "itr/sim_lab.hpp"
#include "itr/tabular.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using itr::MatrixXd;
using itr::VectorXd;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input = 1;
constexpr int exit_numeric = 2;

std::string fmt(double v) {
    if (!std::isfinite(v)) return "NA";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

json num(double v) { return std::isfinite(v) ? json(v) : json(); }

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write '" + path.string() + "'");
    out << text;
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::invalid_argument("cannot create output directory '" + dir + "'");
    return p;
}

struct DataOptions {
    std::string data;
    std::string treatment;
    std::string outcome;
    std::string covariates;
    std::string anchor;
    std::string continuous;
    std::string config;
    std::string out = ".";
    int threads = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
    cmd->add_option("--data", o.data, "CSV file with a header line")->required();
    cmd->add_option("--treatment", o.treatment, "0/1 treatment column")->required();
    cmd->add_option("--outcome", o.outcome, "outcome column")->required();
    cmd->add_option("--covariates", o.covariates, "comma-separated covariate columns")->required();
    cmd->add_option("--anchor", o.anchor, "covariate whose coefficient is fixed to 1");
    cmd->add_option("--continuous", o.continuous,
                    "comma-separated columns to standardize (default: every non-binary covariate)");
    cmd->add_option("--config", o.config, "JSON configuration");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--threads", o.threads, "worker threads (ITR_THREADS overrides)");
}

itr::TabularInput load_input(const DataOptions& o) {
    itr::TabularSpec spec;
    spec.treatment = o.treatment;
    spec.outcome = o.outcome;
    spec.covariates = itr::split_list(o.covariates);
    spec.anchor = o.anchor;
    spec.continuous = itr::split_list(o.continuous);
    return itr::load_tabular(itr::read_csv_file(o.data), spec);
}

itr::RunConfig load_run_config(const std::string& path, itr::RunMode mode) {
    return path.empty() ? itr::default_config(mode) : itr::load_config(path, mode);
}

json policy_json(const itr::TabularInput& in, const itr::PolicyReport& rep,
                 const itr::EstimatorConfig& cfg) {
    constexpr double z = 1.959963984540054;
    json beta = json::array();
    const VectorXd b = rep.solution.beta.free();
    for (itr::Index k = 0; k < b.size(); ++k) {
        const double sd = rep.beta_inference ? rep.beta_inference->sd(k) : NAN;
        beta.push_back({{"name", in.covariates[static_cast<std::size_t>(k + 1)]},
                        {"estimate", b(k)},
                        {"sd", num(sd)},
                        {"ci_lo", num(b(k) - z * sd)},
                        {"ci_hi", num(b(k) + z * sd)}});
    }
    json roots = json::array();
    for (const auto& r : rep.root_reports) {
        json jr = {{"root", r.root}};
        if (r.inference) {
            jr["bias_hat"] = r.inference->bias_hat;
            jr["sd_hat"] = r.inference->sd_hat;
            jr["ci_lo"] = r.root - r.inference->bias_hat - z * r.inference->sd_hat;
            jr["ci_hi"] = r.root - r.inference->bias_hat + z * r.inference->sd_hat;
        } else {
            jr["bias_hat"] = nullptr;
            jr["sd_hat"] = nullptr;
            jr["note"] = r.error;
        }
        roots.push_back(jr);
    }
    const auto& vi = rep.value_inference;
    json norm = json::array();
    for (std::size_t k = 0; k < in.covariates.size(); ++k) {
        norm.push_back({{"name", in.covariates[k]},
                        {"normalized", static_cast<bool>(in.normalized[k])},
                        {"center", in.center(static_cast<itr::Index>(k))},
                        {"scale", in.scale(static_cast<itr::Index>(k))}});
    }
    auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto diag_sd = [&](const MatrixXd& m) { return vec(m.diagonal().cwiseMax(0.0).cwiseSqrt()); };
    return {{"n", in.data.n()},
            {"anchor", in.covariates.front()},
            {"covariates", norm},
            {"estimator", itr::to_json(cfg)},
            {"pilot_h", rep.pilot_h},
            {"centre_h", rep.centre_h},
            {"h_opt", rep.h_opt()},
            {"solver",
             {{"converged", rep.solution.converged},
              {"iterations", rep.solution.iterations},
              {"equation_norm", rep.solution.equation_norm},
              {"init", rep.init_used},
              {"levenberg_marquardt", rep.solution.used_lm}}},
            {"beta", beta},
            {"beta_inference_note", rep.beta_inference_error},
            {"roots", roots},
            {"value",
             {{"v_hat", vi.v_hat},
              {"sigma_hat", vi.sigma_hat},
              {"sd", vi.sd},
              {"ci_lo", vi.v_hat - z * vi.sd},
              {"ci_hi", vi.v_hat + z * vi.sd},
              {"n_dropped", rep.value.n_dropped}}},
            {"propensity",
             {{"form", itr::to_string(rep.fit.propensity.form())},
              {"gamma", vec(rep.fit.propensity.gamma())},
              {"sd", diag_sd(rep.gamma_cov)},
              {"n_clipped", rep.n_clipped}}},
            {"outcome",
             {{"basis", itr::to_string(rep.fit.outcome.basis())},
              {"alpha", vec(rep.fit.outcome.alpha())},
              {"sd", diag_sd(rep.alpha_cov)}}}};
}

std::string cv_csv(const itr::CvResult& cv) {
    std::ostringstream os;
    os << "h,cv,n_skipped\n";
    for (const auto& p : cv.table) os << fmt(p.h) << ',' << fmt(p.cv) << ',' << p.n_skipped << '\n';
    return os.str();
}

std::string assignments_csv(const itr::TabularInput& in, const itr::PolicyReport& rep) {
    std::ostringstream os;
    os << "row_id,index_value,q_hat,assign\n";
    const VectorXd t = rep.solution.beta.index(in.data.x());
    for (itr::Index i = 0; i < t.size(); ++i) {
        const auto q = rep.q->try_eval(t(i));
        os << (i + 1) << ',' << fmt(t(i)) << ',' << (q ? fmt(*q) : "NA") << ','
           << (q ? (*q > 0.0 ? "1" : "0") : "NA") << '\n';
    }
    return os.str();
}

int cmd_simulate(const std::string& config_path, std::optional<itr::Index> reps,
                 std::optional<std::uint64_t> seed, const std::string& out_dir, int threads) {
    itr::RunConfig cfg = load_run_config(config_path, itr::RunMode::simulate);
    if (reps) cfg.reps = *reps;
    if (seed) cfg.seed = *seed;
    if (threads > 0) cfg.threads = threads;
    if (cfg.reps < 1) throw itr::ConfigError("--reps must be positive");
    if (!cfg.scenario) throw itr::ConfigError("config: simulate needs a \"scenario\"");
    const fs::path out = prepare_out(out_dir);
    const auto report = itr::run_study(*cfg.scenario, cfg.study_case, cfg.reps, cfg.seed, cfg.estimator,
                                       itr::resolve_threads(cfg.threads));
    json j = itr::to_json(report);
    j["config"] = itr::to_json(cfg);
    write_file(out / "report.json", j.dump(2) + "\n");
    write_file(out / "report.csv", itr::to_csv(report));
    std::cout << itr::to_csv(report);
    if (static_cast<double>(report.failures) > 0.05 * static_cast<double>(report.reps)) {
        std::cerr << "error: " << report.failures << " of " << report.reps << " replicates failed\n";
        return exit_numeric;
    }
    return exit_ok;
}

int cmd_fit(const DataOptions& o) {
    const itr::RunConfig cfg = load_run_config(o.config, itr::RunMode::fit);
    const auto in = load_input(o);
    const fs::path out = prepare_out(o.out);
    const auto rep = itr::fit_policy(in.data, cfg.estimator);
    write_file(out / "policy.json", policy_json(in, rep, cfg.estimator).dump(2) + "\n");
    write_file(out / "assignments.csv", assignments_csv(in, rep));
    write_file(out / "cv.csv", cv_csv(rep.cv));
    if (!rep.solution.converged) {
        std::cerr << "error: beta solver did not converge (|G| = " << rep.solution.equation_norm << ")\n";
        return exit_numeric;
    }
    return exit_ok;
}

int cmd_qcurve(const DataOptions& o, std::optional<int> draws, std::optional<double> level,
               std::optional<std::uint64_t> seed, int points) {
    itr::RunConfig cfg = load_run_config(o.config, itr::RunMode::qcurve);
    if (draws) cfg.bootstrap_draws = *draws;
    if (level) cfg.bootstrap_level = *level;
    if (seed) cfg.seed = *seed;
    if (cfg.bootstrap_draws < 50) throw itr::ConfigError("--bootstrap must be at least 50");
    if (!(cfg.bootstrap_level > 0.0 && cfg.bootstrap_level < 1.0)) {
        throw itr::ConfigError("--level must lie in (0, 1)");
    }
    if (points < 2) throw itr::ConfigError("--points must be at least 2");
    const auto in = load_input(o);
    const fs::path out = prepare_out(o.out);

    itr::EstimatorConfig est = cfg.estimator;
    est.beta_inference = false;
    est.root_inference = false;
    const auto rep = itr::fit_policy(in.data, est);
    if (!rep.solution.converged) {
        std::cerr << "error: beta solver did not converge (|G| = " << rep.solution.equation_norm << ")\n";
        return exit_numeric;
    }
    const auto [lo, hi] = itr::default_root_interval(rep.solution.beta.index(in.data.x()));
    const VectorXd grid = VectorXd::LinSpaced(points, lo, hi);
    itr::BandSettings bs;
    bs.draws = cfg.bootstrap_draws;
    bs.level = cfg.bootstrap_level;
    bs.seed = cfg.seed;
    bs.threads = itr::resolve_threads(o.threads > 0 ? o.threads : cfg.threads);
    const auto band = itr::residual_bootstrap_band(in.data, rep.fit, est.outcome, rep.solution.beta,
                                                   est.kernel, rep.cv.best, grid, bs);
    std::ostringstream os;
    os << "t,q_hat,lower,upper\n";
    for (itr::Index k = 0; k < grid.size(); ++k) {
        os << fmt(band.grid(k)) << ',' << fmt(band.center(k)) << ',' << fmt(band.lower(k)) << ','
           << fmt(band.upper(k)) << '\n';
    }
    write_file(out / "qcurve.csv", os.str());
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-index individualized treatment regimes"};
    app.require_subcommand(1);

    std::string sim_config, sim_out = ".";
    std::optional<itr::Index> sim_reps;
    std::optional<std::uint64_t> sim_seed;
    int sim_threads = 0;
    auto* sim = app.add_subcommand("simulate", "run a simulation study");
    sim->add_option("--config", sim_config, "JSON configuration with a scenario")->required();
    sim->add_option("--reps", sim_reps, "replicates");
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_option("--out", sim_out, "output directory");
    sim->add_option("--threads", sim_threads, "worker threads (ITR_THREADS overrides)");

    DataOptions fit_opts;
    auto* fit = app.add_subcommand("fit", "estimate the regime on a CSV file");
    add_data_options(fit, fit_opts);

    DataOptions qc_opts;
    std::optional<int> qc_draws;
    std::optional<double> qc_level;
    std::optional<std::uint64_t> qc_seed;
    int qc_points = 101;
    auto* qc = app.add_subcommand("qcurve", "Q curve with residual-bootstrap band");
    add_data_options(qc, qc_opts);
    qc->add_option("--bootstrap", qc_draws, "bootstrap draws");
    qc->add_option("--level", qc_level, "pointwise band level");
    qc->add_option("--seed", qc_seed, "bootstrap seed");
    qc->add_option("--points", qc_points, "grid points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_input;
    }

    try {
        if (*sim) return cmd_simulate(sim_config, sim_reps, sim_seed, sim_out, sim_threads);
        if (*fit) return cmd_fit(fit_opts);
        if (*qc) return cmd_qcurve(qc_opts, qc_draws, qc_level, qc_seed, qc_points);
    } catch (const itr::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return exit_input;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    return exit_input;
}
