#pragma once

#include "itr/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace itr {

using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

// -------------------------------------------------------------------------
// Propensity model pi(x, gamma)
// -------------------------------------------------------------------------

/// constant: intercept-only logistic model, gamma = (logit p).
/// logistic_linear: expit(gamma' (1, x)) or expit(gamma' x) without intercept.
/// fixed: a user-supplied probability, no parameters.
enum class PropensityForm { constant, logistic_linear, fixed };

PropensityForm parse_propensity_form(const std::string& name);
std::string to_string(PropensityForm form);

struct PropensitySpec {
    PropensityForm form = PropensityForm::logistic_linear;
    bool intercept = true;
    double fixed_value = 0.5;
    double clip_floor = 1e-3;
    int max_iter = 100;
    double grad_tol = 1e-10;
};

class PropensityModel {
public:
    PropensityModel(PropensityForm form, VectorXd gamma, Index dim, bool intercept = true,
                    double clip_floor = 1e-3, double fixed_value = 0.5);

    PropensityForm form() const noexcept { return form_; }
    const VectorXd& gamma() const noexcept { return gamma_; }
    Index dim() const noexcept { return dim_; }
    bool intercept() const noexcept { return intercept_; }
    double clip_floor() const noexcept { return clip_floor_; }
    double fixed_value() const noexcept { return fixed_value_; }
    Index n_params() const noexcept { return gamma_.size(); }

    /// Regressors z(x) entering the linear predictor (empty for the fixed form).
    VectorXd design_row(const RowRef& x) const;
    /// Unclipped model probability.
    double raw(const RowRef& x) const;
    /// Probability clipped into [clip_floor, 1 - clip_floor].
    double predict(const RowRef& x) const;

    PropensityModel with_gamma(VectorXd gamma) const;

private:
    void check_dim(const RowRef& x) const;

    PropensityForm form_;
    VectorXd gamma_;
    Index dim_;
    bool intercept_;
    double clip_floor_;
    double fixed_value_;
};

/// Bernoulli maximum likelihood by damped Newton with step halving.
PropensityModel fit_propensity(const Dataset& data, const PropensitySpec& spec);
double predict_propensity(const PropensityModel& model, const RowRef& x);

/// Bernoulli log-likelihood and score (sum over observations) at the model's gamma.
double propensity_loglik(const PropensityModel& model, const Dataset& data);
VectorXd propensity_score(const PropensityModel& model, const Dataset& data);

// -------------------------------------------------------------------------
// Control-arm outcome model mu(x, alpha)
// -------------------------------------------------------------------------

/// polynomial: sum_k alpha_k prod_j x_j^{p_kj} over user-listed exponent rows.
/// sin_plus_halfquad: alpha_0 + sin(a1' x) + 0.5 (a2' x)^2, alpha = (alpha_0, a1, a2).
enum class OutcomeBasis { constant, linear, polynomial, sin_plus_halfquad };

OutcomeBasis parse_outcome_basis(const std::string& name);
std::string to_string(OutcomeBasis basis);

using Monomials = std::vector<std::vector<int>>;

struct OutcomeSpec {
    OutcomeBasis basis = OutcomeBasis::linear;
    Monomials terms;              // polynomial basis only
    std::optional<VectorXd> init;  // sin_plus_halfquad starting point
    int max_iter = 200;
};

class OutcomeModel {
public:
    OutcomeModel(OutcomeBasis basis, Index dim, VectorXd alpha, Monomials terms = {});

    OutcomeBasis basis() const noexcept { return basis_; }
    Index dim() const noexcept { return dim_; }
    const VectorXd& alpha() const noexcept { return alpha_; }
    const Monomials& terms() const noexcept { return terms_; }
    Index n_params() const noexcept { return alpha_.size(); }
    bool linear_in_alpha() const noexcept { return basis_ != OutcomeBasis::sin_plus_halfquad; }

    double predict(const RowRef& x) const;
    /// D(x, alpha) = d mu / d alpha. Also the default GEE weight W(x, alpha).
    VectorXd gradient(const RowRef& x) const;

    OutcomeModel with_alpha(VectorXd alpha) const;

    static Index expected_params(OutcomeBasis basis, Index dim, const Monomials& terms);

private:
    void check_dim(const RowRef& x) const;

    OutcomeBasis basis_;
    Index dim_;
    VectorXd alpha_;
    Monomials terms_;
};

/// Solves sum_{A_i=0} W(X_i)(Y_i - mu(X_i, alpha)) = 0 with W = D (quasi-score).
/// Linear-in-alpha bases reduce to least squares on the controls.
OutcomeModel fit_outcome_gee(const Dataset& data, const OutcomeSpec& spec);
double predict_outcome(const OutcomeModel& model, const RowRef& x);

/// sum over controls of W(X_i)(Y_i - mu_i).
VectorXd outcome_equation(const OutcomeModel& model, const Dataset& data);

// -------------------------------------------------------------------------
// Fitted nuisances evaluated on a sample
// -------------------------------------------------------------------------

struct NuisanceFit {
    PropensityModel propensity;
    OutcomeModel outcome;
};

struct Plugins {
    VectorXd pi;
    VectorXd mu;
    Index n_clipped = 0;  // propensities moved onto the clipping bounds
};

VectorXd predict_propensity_all(const PropensityModel& model, const MatrixXd& x,
                                Index* n_clipped = nullptr);
VectorXd predict_outcome_all(const OutcomeModel& model, const MatrixXd& x);
Plugins evaluate_plugins(const NuisanceFit& fit, const MatrixXd& x);

}  // namespace itr
