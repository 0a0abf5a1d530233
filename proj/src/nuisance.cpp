#include "itr/nuisance.hpp"

#include "itr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace itr {

namespace {

double expit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow
double log1pexp(double eta) {
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

MatrixXd propensity_design(PropensityForm form, bool intercept, const MatrixXd& x) {
    const Index n = x.rows();
    switch (form) {
        case PropensityForm::constant: return MatrixXd::Ones(n, 1);
        case PropensityForm::fixed: return MatrixXd(n, 0);
        case PropensityForm::logistic_linear:
            if (!intercept) return x;
            MatrixXd z(n, x.cols() + 1);
            z.col(0).setOnes();
            z.rightCols(x.cols()) = x;
            return z;
    }
    return MatrixXd(n, 0);
}

double loglik_from_eta(const VectorXd& eta, const VectorXd& a) {
    double ll = 0.0;
    for (Index i = 0; i < eta.size(); ++i) ll += a(i) * eta(i) - log1pexp(eta(i));
    return ll;
}

}  // namespace

// -------------------------------------------------------------------------
// Propensity
// -------------------------------------------------------------------------

PropensityForm parse_propensity_form(const std::string& name) {
    if (name == "constant") return PropensityForm::constant;
    if (name == "logistic_linear") return PropensityForm::logistic_linear;
    if (name == "fixed") return PropensityForm::fixed;
    throw std::invalid_argument("unknown propensity form '" + name + "'");
}

std::string to_string(PropensityForm form) {
    switch (form) {
        case PropensityForm::constant: return "constant";
        case PropensityForm::logistic_linear: return "logistic_linear";
        case PropensityForm::fixed: return "fixed";
    }
    return "unknown";
}

PropensityModel::PropensityModel(PropensityForm form, VectorXd gamma, Index dim, bool intercept,
                                 double clip_floor, double fixed_value)
    : form_(form),
      gamma_(std::move(gamma)),
      dim_(dim),
      intercept_(intercept),
      clip_floor_(clip_floor),
      fixed_value_(fixed_value) {
    if (!(clip_floor > 0.0 && clip_floor < 0.5)) {
        throw std::invalid_argument("propensity clip floor must lie in (0, 0.5)");
    }
    Index expected = 0;
    switch (form) {
        case PropensityForm::constant: expected = 1; break;
        case PropensityForm::logistic_linear: expected = dim + (intercept ? 1 : 0); break;
        case PropensityForm::fixed:
            if (!(fixed_value > 0.0 && fixed_value < 1.0)) {
                throw std::invalid_argument("fixed propensity must lie in (0, 1)");
            }
            break;
    }
    if (gamma_.size() != expected) {
        throw std::invalid_argument("propensity parameter length does not match its form");
    }
}

void PropensityModel::check_dim(const RowRef& x) const {
    if (x.size() != dim_) throw std::invalid_argument("propensity: covariate dimension mismatch");
}

VectorXd PropensityModel::design_row(const RowRef& x) const {
    check_dim(x);
    switch (form_) {
        case PropensityForm::constant: return VectorXd::Ones(1);
        case PropensityForm::fixed: return VectorXd(0);
        case PropensityForm::logistic_linear: {
            if (!intercept_) return x.transpose();
            VectorXd z(dim_ + 1);
            z(0) = 1.0;
            z.tail(dim_) = x.transpose();
            return z;
        }
    }
    return VectorXd(0);
}

double PropensityModel::raw(const RowRef& x) const {
    if (form_ == PropensityForm::fixed) {
        check_dim(x);
        return fixed_value_;
    }
    return expit(design_row(x).dot(gamma_));
}

double PropensityModel::predict(const RowRef& x) const {
    return std::clamp(raw(x), clip_floor_, 1.0 - clip_floor_);
}

PropensityModel PropensityModel::with_gamma(VectorXd gamma) const {
    return PropensityModel(form_, std::move(gamma), dim_, intercept_, clip_floor_, fixed_value_);
}

PropensityModel fit_propensity(const Dataset& data, const PropensitySpec& spec) {
    const Index d = data.d();
    if (spec.form == PropensityForm::fixed) {
        return PropensityModel(spec.form, VectorXd(0), d, spec.intercept, spec.clip_floor,
                               spec.fixed_value);
    }
    const MatrixXd z = propensity_design(spec.form, spec.intercept, data.x());
    const Index p = z.cols();
    if (p == 0) throw std::invalid_argument("propensity: no regressors");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
    if (qr.rank() < p) throw NumericalError("propensity: singular design matrix");

    const VectorXd& a = data.a();
    VectorXd gamma = VectorXd::Zero(p);
    if (spec.form == PropensityForm::constant || spec.intercept) {
        const double pbar = a.mean();
        gamma(0) = std::log(pbar / (1.0 - pbar));
    }

    VectorXd eta = z * gamma;
    double ll = loglik_from_eta(eta, a);
    bool converged = false;
    for (int iter = 0; iter < spec.max_iter; ++iter) {
        VectorXd prob = eta.unaryExpr([](double e) { return expit(e); });
        const VectorXd score = z.transpose() * (a - prob);
        if (score.lpNorm<Eigen::Infinity>() <= spec.grad_tol) {
            converged = true;
            break;
        }
        const VectorXd w = prob.cwiseProduct((VectorXd::Ones(prob.size()) - prob));
        const MatrixXd info = z.transpose() * w.asDiagonal() * z;
        Eigen::LDLT<MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw NumericalError("propensity: information matrix is singular (separation?)");
        }
        const VectorXd step = ldlt.solve(score);

        double scale = 1.0;
        bool accepted = false;
        for (int half = 0; half < 40; ++half) {
            const VectorXd trial = gamma + scale * step;
            const VectorXd trial_eta = z * trial;
            const double trial_ll = loglik_from_eta(trial_eta, a);
            if (trial_ll >= ll - 1e-12 * std::abs(ll)) {
                gamma = trial;
                eta = trial_eta;
                ll = trial_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break;
        if (gamma.lpNorm<Eigen::Infinity>() > 1e3 || eta.lpNorm<Eigen::Infinity>() > 30.0) {
            throw NumericalError("propensity: coefficients diverge (perfect separation)");
        }
    }
    if (!converged) {
        const VectorXd prob = eta.unaryExpr([](double e) { return expit(e); });
        const VectorXd score = z.transpose() * (a - prob);
        if (score.lpNorm<Eigen::Infinity>() > 1e-8) {
            throw NumericalError("propensity: Newton iterations did not converge");
        }
    }
    return PropensityModel(spec.form, std::move(gamma), d, spec.intercept, spec.clip_floor,
                           spec.fixed_value);
}

double predict_propensity(const PropensityModel& model, const RowRef& x) {
    return model.predict(x);
}

double propensity_loglik(const PropensityModel& model, const Dataset& data) {
    double ll = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
        const double p = model.raw(data.x().row(i));
        ll += data.a()(i) == 1.0 ? std::log(p) : std::log1p(-p);
    }
    return ll;
}

VectorXd propensity_score(const PropensityModel& model, const Dataset& data) {
    VectorXd score = VectorXd::Zero(model.n_params());
    for (Index i = 0; i < data.n(); ++i) {
        const auto row = data.x().row(i);
        score += (data.a()(i) - model.raw(row)) * model.design_row(row);
    }
    return score;
}

// -------------------------------------------------------------------------
// Outcome
// -------------------------------------------------------------------------

OutcomeBasis parse_outcome_basis(const std::string& name) {
    if (name == "constant") return OutcomeBasis::constant;
    if (name == "linear") return OutcomeBasis::linear;
    if (name == "polynomial") return OutcomeBasis::polynomial;
    if (name == "sin_plus_halfquad") return OutcomeBasis::sin_plus_halfquad;
    throw std::invalid_argument("unknown outcome basis '" + name + "'");
}

std::string to_string(OutcomeBasis basis) {
    switch (basis) {
        case OutcomeBasis::constant: return "constant";
        case OutcomeBasis::linear: return "linear";
        case OutcomeBasis::polynomial: return "polynomial";
        case OutcomeBasis::sin_plus_halfquad: return "sin_plus_halfquad";
    }
    return "unknown";
}

namespace {

Monomials standard_terms(OutcomeBasis basis, Index dim, const Monomials& terms) {
    switch (basis) {
        case OutcomeBasis::constant: return {std::vector<int>(static_cast<std::size_t>(dim), 0)};
        case OutcomeBasis::linear: {
            Monomials out{std::vector<int>(static_cast<std::size_t>(dim), 0)};
            for (Index j = 0; j < dim; ++j) {
                std::vector<int> e(static_cast<std::size_t>(dim), 0);
                e[static_cast<std::size_t>(j)] = 1;
                out.push_back(std::move(e));
            }
            return out;
        }
        case OutcomeBasis::polynomial:
            for (const auto& t : terms) {
                if (static_cast<Index>(t.size()) != dim) {
                    throw std::invalid_argument("polynomial term has wrong number of exponents");
                }
                for (int e : t) {
                    if (e < 0) throw std::invalid_argument("polynomial exponents must be >= 0");
                }
            }
            if (terms.empty()) throw std::invalid_argument("polynomial basis needs terms");
            return terms;
        case OutcomeBasis::sin_plus_halfquad: return {};
    }
    return {};
}

double monomial(const std::vector<int>& powers, const RowRef& x) {
    double v = 1.0;
    for (std::size_t j = 0; j < powers.size(); ++j) {
        for (int k = 0; k < powers[j]; ++k) v *= x(static_cast<Index>(j));
    }
    return v;
}

}  // namespace

Index OutcomeModel::expected_params(OutcomeBasis basis, Index dim, const Monomials& terms) {
    if (basis == OutcomeBasis::sin_plus_halfquad) return 1 + 2 * dim;
    return static_cast<Index>(standard_terms(basis, dim, terms).size());
}

OutcomeModel::OutcomeModel(OutcomeBasis basis, Index dim, VectorXd alpha, Monomials terms)
    : basis_(basis), dim_(dim), alpha_(std::move(alpha)) {
    terms_ = standard_terms(basis, dim, terms);
    if (alpha_.size() != expected_params(basis, dim, terms_)) {
        throw std::invalid_argument("outcome parameter length does not match its basis");
    }
}

void OutcomeModel::check_dim(const RowRef& x) const {
    if (x.size() != dim_) throw std::invalid_argument("outcome: covariate dimension mismatch");
}

double OutcomeModel::predict(const RowRef& x) const {
    check_dim(x);
    if (basis_ == OutcomeBasis::sin_plus_halfquad) {
        const double s = x.dot(alpha_.segment(1, dim_));
        const double q = x.dot(alpha_.segment(1 + dim_, dim_));
        return alpha_(0) + std::sin(s) + 0.5 * q * q;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
        acc += alpha_(static_cast<Index>(k)) * monomial(terms_[k], x);
    }
    return acc;
}

VectorXd OutcomeModel::gradient(const RowRef& x) const {
    check_dim(x);
    VectorXd g(alpha_.size());
    if (basis_ == OutcomeBasis::sin_plus_halfquad) {
        const double s = x.dot(alpha_.segment(1, dim_));
        const double q = x.dot(alpha_.segment(1 + dim_, dim_));
        g(0) = 1.0;
        g.segment(1, dim_) = std::cos(s) * x.transpose();
        g.segment(1 + dim_, dim_) = q * x.transpose();
        return g;
    }
    for (std::size_t k = 0; k < terms_.size(); ++k) g(static_cast<Index>(k)) = monomial(terms_[k], x);
    return g;
}

OutcomeModel OutcomeModel::with_alpha(VectorXd alpha) const {
    return OutcomeModel(basis_, dim_, std::move(alpha), terms_);
}

VectorXd outcome_equation(const OutcomeModel& model, const Dataset& data) {
    VectorXd eq = VectorXd::Zero(model.n_params());
    for (Index i = 0; i < data.n(); ++i) {
        if (data.a()(i) != 0.0) continue;
        const auto row = data.x().row(i);
        eq += model.gradient(row) * (data.y()(i) - model.predict(row));
    }
    return eq;
}

namespace {

OutcomeModel fit_linear_basis(const OutcomeModel& shape, const MatrixXd& xc, const VectorXd& yc) {
    const Index p = shape.n_params();
    MatrixXd design(xc.rows(), p);
    for (Index i = 0; i < xc.rows(); ++i) design.row(i) = shape.gradient(xc.row(i)).transpose();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    if (qr.rank() < p) throw NumericalError("outcome: basis design is rank deficient on controls");
    return shape.with_alpha(qr.solve(yc));
}

OutcomeModel fit_nonlinear(const OutcomeModel& start, const MatrixXd& xc, const VectorXd& yc,
                           int max_iter) {
    const Index n0 = xc.rows();
    const Index p = start.n_params();
    if (n0 < p) throw NumericalError("outcome: fewer controls than parameters");

    auto residuals = [&](const OutcomeModel& m) {
        VectorXd r(n0);
        for (Index i = 0; i < n0; ++i) r(i) = yc(i) - m.predict(xc.row(i));
        return r;
    };

    OutcomeModel model = start;
    VectorXd r = residuals(model);
    double ssr = r.squaredNorm();
    double lambda = 1e-3;
    const double tol = 1e-9;
    for (int iter = 0; iter < max_iter; ++iter) {
        MatrixXd jac(n0, p);
        for (Index i = 0; i < n0; ++i) jac.row(i) = model.gradient(xc.row(i)).transpose();
        const VectorXd eq = jac.transpose() * r;
        if (eq.lpNorm<Eigen::Infinity>() <= tol) return model;

        const MatrixXd jtj = jac.transpose() * jac;
        bool improved = false;
        for (int attempt = 0; attempt < 30; ++attempt) {
            MatrixXd lhs = jtj;
            lhs.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const VectorXd step = lhs.ldlt().solve(eq);
            OutcomeModel trial = model.with_alpha(model.alpha() + step);
            const VectorXd tr = residuals(trial);
            const double tssr = tr.squaredNorm();
            // Near the optimum the SSR is flat to round-off; then the equation itself decides.
            bool accept = std::isfinite(tssr) && tssr <= ssr;
            if (!accept && std::isfinite(tssr) && tssr <= ssr * (1.0 + 1e-12)) {
                MatrixXd tj(n0, p);
                for (Index i = 0; i < n0; ++i) tj.row(i) = trial.gradient(xc.row(i)).transpose();
                accept = (tj.transpose() * tr).lpNorm<Eigen::Infinity>() < eq.lpNorm<Eigen::Infinity>();
            }
            if (accept) {
                model = std::move(trial);
                r = tr;
                ssr = tssr;
                lambda = std::max(lambda * 0.3, 1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) break;
    }
    MatrixXd jac(n0, p);
    for (Index i = 0; i < n0; ++i) jac.row(i) = model.gradient(xc.row(i)).transpose();
    if ((jac.transpose() * r).lpNorm<Eigen::Infinity>() > 1e-8 * std::max<double>(1.0, n0)) {
        throw NumericalError("outcome: nonlinear GEE did not converge");
    }
    return model;
}

}  // namespace

OutcomeModel fit_outcome_gee(const Dataset& data, const OutcomeSpec& spec) {
    const Index n0 = data.n_control();
    if (n0 == 0) throw NumericalError("outcome: empty control arm");
    MatrixXd xc(n0, data.d());
    VectorXd yc(n0);
    for (Index i = 0, k = 0; i < data.n(); ++i) {
        if (data.a()(i) != 0.0) continue;
        xc.row(k) = data.x().row(i);
        yc(k) = data.y()(i);
        ++k;
    }
    const Index d = data.d();
    if (spec.basis == OutcomeBasis::sin_plus_halfquad) {
        VectorXd init;
        if (spec.init) {
            init = *spec.init;
        } else {
            init = VectorXd::Constant(1 + 2 * d, 0.1);
            init(0) = yc.mean();
        }
        return fit_nonlinear(OutcomeModel(spec.basis, d, init), xc, yc, spec.max_iter);
    }
    const Index p = OutcomeModel::expected_params(spec.basis, d, spec.terms);
    OutcomeModel shape(spec.basis, d, VectorXd::Zero(p), spec.terms);
    return fit_linear_basis(shape, xc, yc);
}

double predict_outcome(const OutcomeModel& model, const RowRef& x) { return model.predict(x); }

VectorXd predict_propensity_all(const PropensityModel& model, const MatrixXd& x, Index* n_clipped) {
    VectorXd pi(x.rows());
    Index clipped = 0;
    for (Index i = 0; i < x.rows(); ++i) {
        const double raw = model.raw(x.row(i));
        const double p = std::clamp(raw, model.clip_floor(), 1.0 - model.clip_floor());
        if (p != raw) ++clipped;
        pi(i) = p;
    }
    if (n_clipped) *n_clipped = clipped;
    return pi;
}

VectorXd predict_outcome_all(const OutcomeModel& model, const MatrixXd& x) {
    VectorXd mu(x.rows());
    for (Index i = 0; i < x.rows(); ++i) mu(i) = model.predict(x.row(i));
    return mu;
}

Plugins evaluate_plugins(const NuisanceFit& fit, const MatrixXd& x) {
    Plugins out;
    out.pi = predict_propensity_all(fit.propensity, x, &out.n_clipped);
    out.mu = predict_outcome_all(fit.outcome, x);
    return out;
}

}  // namespace itr
