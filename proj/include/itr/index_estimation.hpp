#pragma once

#include "itr/dataset.hpp"
#include "itr/kernel.hpp"
#include "itr/nuisance.hpp"
#include "itr/treatment_effect.hpp"

#include <optional>
#include <string>
#include <vector>

namespace itr {

/// Inputs to the estimating equation for beta_L: the sample, fitted nuisances
/// with their plug-in values, the kernel and fixed bandwidths. pilot_h smooths
/// Q; centre_h smooths E(X_L | index) and defaults to pilot_h.
struct EstimatingEquationContext {
    EstimatingEquationContext(Dataset data, NuisanceFit fit, KernelSpec kernel, Bandwidth pilot_h,
                              std::optional<Bandwidth> centre_h = std::nullopt);

    Dataset data;
    NuisanceFit fit;
    Plugins plugins;
    KernelSpec kernel;
    Bandwidth pilot_h;
    Bandwidth centre_h;

    /// Same sample and bandwidth, different nuisance parameters.
    EstimatingEquationContext with_fit(NuisanceFit other) const;
};

/// Per-observation pieces of the equation at one beta_L.
///   bracket_i = pseudo_i + (1 - A_i/pi_i) Q(t_i)
///   resid_i   = pseudo_i - (A_i/pi_i) Q(t_i)
///   centred_i = X_Li - E(X_L | t_i)
struct EquationTerms {
    VectorXd q;              // Q(t_i), NaN where dropped
    VectorXd bracket;
    VectorXd resid;
    MatrixXd centred;        // n x (d - 1)
    std::vector<char> kept;  // 0 where Q or E(X_L|.) is degenerate at t_i
    Index n_dropped = 0;
    VectorXd value;          // mean over kept of bracket_i * centred_i
};

/// Evaluates the equation. Throws NumericalError when more than 5% of points are dropped.
EquationTerms equation_terms(const EstimatingEquationContext& ctx, const VectorXd& beta_l);
VectorXd estimating_equation(const EstimatingEquationContext& ctx, const VectorXd& beta_l);

/// Forward-difference Jacobian of the equation in beta_L, step 1e-4 max(1, |b_j|).
MatrixXd equation_jacobian(const EstimatingEquationContext& ctx, const VectorXd& beta_l,
                           const VectorXd* g0 = nullptr);

struct SolverSettings {
    double tol = 1e-6;  // sup-norm of the equation
    int max_iter = 200;
};

struct BetaSolution {
    IndexVector beta{VectorXd::Ones(1)};
    double equation_norm = 0.0;  // sup-norm at beta
    int iterations = 0;
    bool converged = false;
    bool used_lm = false;  // Levenberg-Marquardt fallback was entered
};

/// Damped Newton with step halving on the equation, switching to
/// Levenberg-Marquardt on |G|^2 once Newton stalls. Returns the best iterate.
BetaSolution solve_beta(const EstimatingEquationContext& ctx, const VectorXd& init,
                        const SolverSettings& settings = {});

/// Start value from least squares of Y on (1, A, X, A X): the A X coefficients
/// divided by the first one. Falls back to zeros when that coefficient vanishes.
VectorXd ols_init(const Dataset& data);

/// h = c * sd(beta' X) * n^{-1/3}.
Bandwidth pilot_bandwidth(const Dataset& data, const IndexVector& beta, double c);

struct MultiStartResult {
    std::vector<VectorXd> starts;
    std::vector<BetaSolution> solutions;
    /// Distinct converged roots (sup-distance > 1e-3 apart).
    std::vector<VectorXd> distinct_roots;
};

/// Diagnostic: solve from `init` plus `extra` random starts in init +/- spread.
MultiStartResult multi_start(const EstimatingEquationContext& ctx, const VectorXd& init, int extra,
                             double spread, std::uint64_t seed, const SolverSettings& settings = {});

}  // namespace itr
