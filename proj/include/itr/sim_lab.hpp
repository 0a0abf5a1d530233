#pragma once

#include "itr/dataset.hpp"
#include "itr/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace itr {

enum class QShape { linear_2t, t_plus_sin_t, t_sq_minus_2 };
enum class MuShape { linear, sin_plus_halfquad };
enum class PiShape { const_half, expit_gamma0 };
enum class ErrorShape { normal_var_quarter, hetero_log };

struct Scenario {
    std::string name = "sim1";
    QShape q0 = QShape::linear_2t;
    MuShape mu0 = MuShape::linear;
    PiShape pi0 = PiShape::const_half;
    ErrorShape error = ErrorShape::normal_var_quarter;
    Index n = 500;
    Index d = 4;
    VectorXd beta0;
    VectorXd alpha0;   // linear mu: 1 + alpha0' x
    VectorXd alpha10;  // sin_plus_halfquad: 1 + sin(alpha10' x) + 0.5 (alpha20' x)^2
    VectorXd alpha20;
    VectorXd gamma0;   // expit(gamma0' x), no intercept
    double noise_scale = 1.0;  // multiplies the error draw; 0 gives noiseless data

    void validate() const;
};

/// Simulation designs 1-6 at sample size n.
Scenario preset(int sim, Index n = 500);

enum class Case { I, II, III, IV };
Case parse_case(const std::string& name);
std::string to_string(Case c);

double q0(const Scenario& scn, double t);
double mu0(const Scenario& scn, const RowRef& x);
double pi0(const Scenario& scn, const RowRef& x);
double error_sd(const Scenario& scn, double t);

struct Generated {
    Dataset data;
    VectorXd y1;
    VectorXd y0;
};

/// X ~ N(0, I_d), A ~ Bernoulli(pi0(X)), Y0 = mu0(X) + e, Y1 = Y0 + Q0(beta0' X).
Generated generate(const Scenario& scn, std::uint64_t seed);

struct McValue {
    double value = 0.0;
    double se = 0.0;
};

/// Monte-Carlo mean of Y1 I{Q0 > 0} + Y0 I{Q0 <= 0} with its standard error.
McValue true_value_mc(const Scenario& scn, Index draws, std::uint64_t seed, unsigned threads = 1);

/// Zeros of Q0, increasing.
std::vector<double> true_roots(const Scenario& scn);

/// Working nuisance models for the case; the remaining settings come from `base`.
EstimatorConfig working_models(const Scenario& scn, Case c, EstimatorConfig base);

struct RootOutcome {
    double truth = 0.0;
    bool found = false;
    double estimate = 0.0;
    bool has_inference = false;
    double bias_hat = 0.0;
    double sd_hat = 0.0;
};

struct ReplicateResult {
    bool ok = false;
    std::string error;
    VectorXd beta;     // free components
    VectorXd beta_sd;  // NaN when unavailable
    double value = 0.0;
    double value_sd = 0.0;
    std::vector<RootOutcome> roots;
    bool converged = false;
    double h_opt = 0.0;
};

struct MetricSummary {
    std::string name;
    double truth = 0.0;
    Index count = 0;
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;        // empirical, NaN for a single replicate
    double sd_hat = 0.0;    // mean reported standard error
    double coverage = 0.0;  // share of nominal 95% intervals containing the truth
    double mse = 0.0;
    double bias_hat = 0.0;  // roots only: mean estimated bias
    double found_rate = 1.0;
};

struct StudyReport {
    Scenario scenario;
    Case study_case = Case::I;
    Index reps = 0;
    Index failures = 0;
    std::uint64_t seed = 0;
    std::string init_rule;
    std::vector<ReplicateResult> replicates;
    std::vector<MetricSummary> metrics;
    double true_value = 0.0;
};

/// Replicate r draws its data from stream (seed, r). Results do not depend on the
/// thread count. Replicates that throw or fail to converge are excluded and counted.
StudyReport run_study(const Scenario& scn, Case c, Index reps, std::uint64_t seed,
                      const EstimatorConfig& base, unsigned threads = 1);

/// Aggregates replicate results into per-target summaries.
std::vector<MetricSummary> summarize(const std::vector<ReplicateResult>& reps,
                                     const VectorXd& beta0, double true_value,
                                     const std::vector<double>& roots);

/// Closed-form value of the optimal rule, by quadrature over the index distribution.
double true_value_quadrature(const Scenario& scn);

/// Monte-Carlo MSE of Q(0) at the true index, h = c sd(index) n^{-1/5}.
double q_at_zero_mse(const Scenario& scn, Case c, Index reps, std::uint64_t seed, double c_h,
                     const EstimatorConfig& base, unsigned threads = 1);

nlohmann::json to_json(const Scenario& scn);
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyReport& report);
/// Flat table `parameter,true,estimate,sd,sd_hat,cvg,mse`.
std::string to_csv(const StudyReport& report);

}  // namespace itr
