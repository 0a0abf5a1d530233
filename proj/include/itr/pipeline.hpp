#pragma once

#include "itr/dataset.hpp"
#include "itr/index_estimation.hpp"
#include "itr/inference.hpp"
#include "itr/kernel.hpp"
#include "itr/nuisance.hpp"
#include "itr/policy.hpp"
#include "itr/treatment_effect.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace itr {

enum class InitRule { ols, zeros, given };

struct EstimatorConfig {
    KernelSpec kernel{KernelFamily::epanechnikov};
    double pilot_c = 7.25;
    /// Constant of the same c * sd * n^{-1/3} rule for the E(X_L | index) smoother.
    double centre_c = 1.0;
    double cv_lo = 0.2;
    double cv_hi = 3.0;
    int cv_count = 20;
    SolverSettings solver;
    InitRule init = InitRule::ols;
    VectorXd init_vector;  // used with InitRule::given
    /// Retry from zeros when the configured start does not converge.
    bool retry_from_zeros = true;
    /// Further attempts from the best iterate perturbed uniformly by +/- restart_spread
    /// per coordinate; the first that converges is kept.
    int restarts = 4;
    double restart_spread = 0.25;
    PropensitySpec propensity;
    OutcomeSpec outcome;
    bool beta_inference = true;
    bool root_inference = true;
};

struct RootReport {
    double root = 0.0;
    std::optional<RootInference> inference;
    std::string error;  // why inference is missing
};

/// Everything produced by one fit.
struct PolicyReport {
    NuisanceFit fit;
    Index n_clipped = 0;
    MatrixXd gamma_cov{};
    MatrixXd alpha_cov{};

    VectorXd init{};
    std::string init_used{};
    double pilot_h = 0.0;
    double centre_h = 0.0;
    BetaSolution solution{};
    std::optional<BetaInference> beta_inference{};
    std::string beta_inference_error{};

    CvResult cv{};
    std::shared_ptr<const QEstimator> q{};  // final estimator at h_opt

    RootSet roots{};
    std::vector<RootReport> root_reports{};

    ValueEstimate value{};
    ValueInference value_inference{};

    double h_opt() const { return cv.best.value(); }
    TreatmentRule rule() const { return TreatmentRule(solution.beta, as_curve(*q)); }
};

NuisanceFit fit_nuisances(const Dataset& data, const EstimatorConfig& config);

/// Full estimation: nuisances, beta, CV bandwidth, Q, roots, value, inference.
/// A solve that does not converge is reported through solution.converged; the
/// downstream steps still run at the best iterate.
PolicyReport fit_policy(const Dataset& data, const EstimatorConfig& config);

/// Nuisances and the beta solve only, with the same start and retry rules as fit_policy.
BetaSolution estimate_beta(const Dataset& data, const EstimatorConfig& config);

struct PairsBootstrap {
    MatrixXd draws;  // draws x (d - 1); NaN rows where the refit failed
    VectorXd sd;     // n - 1 divisor over the successful draws
    Index failures = 0;
};

/// Nonparametric bootstrap of beta-hat: rows are resampled with replacement and the
/// whole nuisance and beta fit is repeated. Draw b uses stream (seed, b).
PairsBootstrap pairs_bootstrap_beta(const Dataset& data, const EstimatorConfig& config, int draws,
                                    std::uint64_t seed, unsigned threads = 1);

}  // namespace itr
