#include "itr/inference.hpp"

#include "itr/errors.hpp"
#include "itr/parallel.hpp"
#include "itr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace itr {

namespace {

MatrixXd checked_inverse(const MatrixXd& m, const char* what) {
    Eigen::FullPivLU<MatrixXd> lu(m);
    if (!lu.isInvertible()) throw NumericalError(std::string(what) + ": singular matrix");
    return lu.inverse();
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

MatrixXd propensity_influence(const Dataset& data, const PropensityModel& model) {
    const Index n = data.n();
    const Index p = model.n_params();
    if (p == 0) return MatrixXd(n, 0);
    MatrixXd w = MatrixXd::Zero(p, p);
    MatrixXd scores(n, p);
    for (Index i = 0; i < n; ++i) {
        const auto row = data.x().row(i);
        const VectorXd z = model.design_row(row);
        const double pr = model.raw(row);
        w.noalias() += pr * (1.0 - pr) * z * z.transpose();
        scores.row(i) = (data.a()(i) - pr) * z.transpose();
    }
    w /= static_cast<double>(n);
    return scores * checked_inverse(w, "propensity information").transpose();
}

MatrixXd sandwich_gamma(const Dataset& data, const PropensityModel& model) {
    const Index n = data.n();
    const Index p = model.n_params();
    if (p == 0) return MatrixXd(0, 0);
    const MatrixXd phi = propensity_influence(data, model);
    return symmetrize(phi.transpose() * phi / static_cast<double>(n) / static_cast<double>(n));
}

MatrixXd sandwich_alpha(const Dataset& data, const OutcomeModel& model) {
    const Index p = model.n_params();
    const Index n0 = data.n_control();
    MatrixXd m = MatrixXd::Zero(p, p);
    MatrixXd s = MatrixXd::Zero(p, p);
    for (Index i = 0; i < data.n(); ++i) {
        if (data.a()(i) != 0.0) continue;
        const auto row = data.x().row(i);
        const VectorXd dvec = model.gradient(row);
        const double r = data.y()(i) - model.predict(row);
        m.noalias() += dvec * dvec.transpose();
        s.noalias() += (r * r) * dvec * dvec.transpose();
    }
    m /= static_cast<double>(n0);
    s /= static_cast<double>(n0);
    const MatrixXd mi = checked_inverse(m, "outcome bread");
    return symmetrize(mi * s * mi.transpose() / static_cast<double>(n0));
}

MatrixXd outcome_influence(const Dataset& data, const OutcomeModel& model) {
    const Index n = data.n();
    const Index p = model.n_params();
    MatrixXd m = MatrixXd::Zero(p, p);
    MatrixXd terms = MatrixXd::Zero(n, p);
    for (Index i = 0; i < n; ++i) {
        if (data.a()(i) != 0.0) continue;
        const auto row = data.x().row(i);
        const VectorXd dvec = model.gradient(row);
        m.noalias() += dvec * dvec.transpose();
        terms.row(i) = (data.y()(i) - model.predict(row)) * dvec.transpose();
    }
    m /= static_cast<double>(n);
    return terms * checked_inverse(m, "outcome bread").transpose();
}

// -------------------------------------------------------------------------

BetaInference beta_covariance(const EstimatingEquationContext& ctx, const BetaSolution& solution) {
    const VectorXd bl = solution.beta.free();
    const Index q = bl.size();
    const Index n = ctx.data.n();
    BetaInference out;
    if (q == 0) {
        out.cov = MatrixXd(0, 0);
        out.sd = VectorXd(0);
        return out;
    }

    const EquationTerms terms = equation_terms(ctx, bl);
    InfluenceAssembly& parts = out.parts;
    parts.phi_beta = MatrixXd::Zero(n, q);
    for (Index i = 0; i < n; ++i) {
        if (terms.kept[static_cast<std::size_t>(i)]) {
            parts.phi_beta.row(i) = terms.resid(i) * terms.centred.row(i);
        }
    }
    parts.b_hat = equation_jacobian(ctx, bl, &terms.value);

    const PropensityModel& prop = ctx.fit.propensity;
    const OutcomeModel& outc = ctx.fit.outcome;
    parts.b_gamma = MatrixXd(q, prop.n_params());
    for (Index k = 0; k < prop.n_params(); ++k) {
        VectorXd g = prop.gamma();
        const double step = 1e-4 * std::max(1.0, std::abs(g(k)));
        g(k) += step;
        const auto shifted = ctx.with_fit({prop.with_gamma(g), outc});
        parts.b_gamma.col(k) = (estimating_equation(shifted, bl) - terms.value) / step;
    }
    parts.b_alpha = MatrixXd(q, outc.n_params());
    for (Index k = 0; k < outc.n_params(); ++k) {
        VectorXd al = outc.alpha();
        const double step = 1e-4 * std::max(1.0, std::abs(al(k)));
        al(k) += step;
        const auto shifted = ctx.with_fit({prop, outc.with_alpha(al)});
        parts.b_alpha.col(k) = (estimating_equation(shifted, bl) - terms.value) / step;
    }

    parts.phi_gamma = propensity_influence(ctx.data, prop);
    parts.phi_alpha = outcome_influence(ctx.data, outc);

    MatrixXd psi = parts.phi_beta;
    if (parts.phi_gamma.cols() > 0) psi += parts.phi_gamma * parts.b_gamma.transpose();
    if (parts.phi_alpha.cols() > 0) psi += parts.phi_alpha * parts.b_alpha.transpose();
    parts.v1 = psi.transpose() * psi / static_cast<double>(n);

    const MatrixXd binv = checked_inverse(parts.b_hat, "beta Jacobian");
    out.cov = symmetrize(binv * parts.v1 * binv.transpose() / static_cast<double>(n));
    out.sd = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

// -------------------------------------------------------------------------

LocalQuadratic local_quadratic(const std::function<std::optional<double>(double)>& f, double z,
                               double h) {
    constexpr int points = 21;
    MatrixXd design(points, 3);
    VectorXd rhs(points);
    Index used = 0;
    for (int k = 0; k < points; ++k) {
        const double u = -2.0 * h + 4.0 * h * k / (points - 1);
        const auto v = f(z + u);
        if (!v) continue;
        design.row(used) << 1.0, u, u * u;
        rhs(used) = *v;
        ++used;
    }
    if (used < 5) throw NumericalError("local quadratic fit: too few supported points");
    const MatrixXd dz = design.topRows(used);
    const VectorXd coef = dz.colPivHouseholderQr().solve(rhs.head(used));
    return {coef(0), coef(1), 2.0 * coef(2)};
}

RootInference root_inference(const RootPlugins& plugins, double root) {
    if (!plugins.q || !plugins.density || !plugins.variance) {
        throw std::invalid_argument("root_inference: missing plug-in curve");
    }
    if (plugins.n <= 0) throw std::invalid_argument("root_inference: sample size must be positive");
    const double h = plugins.h.value();

    RootInference out;
    out.root = root;
    const LocalQuadratic qfit = local_quadratic(plugins.q, root, h);
    out.q_prime = qfit.d1;
    out.q_second = qfit.d2;
    if (!(std::abs(out.q_prime) >= 1e-4)) {
        throw NumericalError("root_inference: Q is nearly flat at the root");
    }
    const auto dens = [&](double t) -> std::optional<double> { return plugins.density(t); };
    out.density_prime = local_quadratic(dens, root, h).d1;
    out.density = plugins.density(root);
    if (!(out.density > 0.0)) throw NumericalError("root_inference: zero index density at root");
    const auto var = plugins.variance(root);
    if (!var) throw NumericalError("root_inference: variance smooth has no support at root");
    out.variance = *var;

    const double mu2 = plugins.kernel.second_moment();
    const double rk = plugins.kernel.roughness();
    out.bias_hat = -h * h * (out.density_prime / out.density + out.q_second / (2.0 * out.q_prime)) * mu2;
    out.sd_hat = std::sqrt(out.variance * rk /
                           (static_cast<double>(plugins.n) * h * out.density * out.q_prime * out.q_prime));
    return out;
}

RootPlugins root_plugins(const QEstimator& q, const Dataset& data, const Plugins& plugins) {
    const Index n = data.n();
    const VectorXd& t = q.index_values();
    MatrixXd sq(n, 2);
    for (Index i = 0; i < n; ++i) {
        const double r = data.y()(i) - plugins.mu(i);
        const double a = data.a()(i);
        const double p = plugins.pi(i);
        sq(i, 0) = a * r * r / (p * p);
        sq(i, 1) = (1.0 - a) * r * r / ((1.0 - p) * (1.0 - p));
    }
    auto smoother = std::make_shared<IndexSmoother>(t, sq, q.kernel(), q.bandwidth());
    auto sample = std::make_shared<std::vector<double>>(t.data(), t.data() + t.size());

    RootPlugins rp;
    rp.q = as_curve(q);
    rp.density = [sample, k = q.kernel(), h = q.bandwidth()](double z) {
        return kde(k, h, *sample, z);
    };
    rp.variance = [smoother](double z) -> std::optional<double> {
        if (auto v = smoother->try_eval(z)) return (*v)(0) + (*v)(1);
        return std::nullopt;
    };
    rp.n = n;
    rp.h = q.bandwidth();
    rp.kernel = q.kernel();
    return rp;
}

RootInference root_inference(const QEstimator& q, double root, const Dataset& data,
                             const Plugins& plugins) {
    return root_inference(root_plugins(q, data, plugins), root);
}

// -------------------------------------------------------------------------

ValueInference value_inference(const Dataset& data, const Plugins& plugins,
                               const ValueEstimate& value, const OutcomeModel& outcome) {
    ValueInference out;
    out.v_hat = value.v_hat;
    double ss = 0.0;
    // Representative correction: the outcome-parameter derivative of the value
    // contribution carries the factor (pi_ref - pi-hat); with pi_ref = pi-hat it is zero.
    VectorXd correction = VectorXd::Zero(outcome.n_params());
    for (Index i = 0; i < data.n(); ++i) {
        const double term = value.terms(i);
        if (std::isnan(term)) continue;
        const double c = term - value.v_hat;
        ss += c * c;
        const double pi_ref = plugins.pi(i);
        const double j = value.j(i);
        const double den = plugins.pi(i) + (1.0 - 2.0 * plugins.pi(i)) * j;
        correction += (pi_ref - plugins.pi(i)) / den * outcome.gradient(data.x().row(i));
    }
    out.sigma_hat = std::sqrt(ss / static_cast<double>(value.n));
    out.sd = out.sigma_hat / std::sqrt(static_cast<double>(value.n));
    out.correction_check =
        correction.size() ? correction.lpNorm<Eigen::Infinity>() / static_cast<double>(value.n) : 0.0;
    if (!(out.correction_check <= 1e-10)) {
        throw NumericalError("value_inference: plug-in correction term does not vanish");
    }
    return out;
}

// -------------------------------------------------------------------------

CurveBand residual_bootstrap_band(const Dataset& data, const NuisanceFit& fit,
                                  const OutcomeSpec& outcome_spec, const IndexVector& beta,
                                  KernelSpec kernel, Bandwidth h, const VectorXd& grid,
                                  const BandSettings& settings) {
    if (settings.draws < 50) throw std::invalid_argument("bootstrap band: need at least 50 draws");
    if (!(settings.level > 0.0 && settings.level < 1.0)) {
        throw std::invalid_argument("bootstrap band: level must lie in (0, 1)");
    }
    const Index n = data.n();
    const Index g = grid.size();
    const Plugins plugins = evaluate_plugins(fit, data.x());
    const QEstimator est = QEstimator::build(data, plugins, beta, kernel, h);
    const VectorXd& t = est.index_values();

    CurveBand band;
    band.grid = grid;
    band.level = settings.level;
    band.center.resize(g);
    for (Index k = 0; k < g; ++k) band.center(k) = est(grid(k));

    VectorXd fitted(n);
    for (Index i = 0; i < n; ++i) {
        fitted(i) = plugins.mu(i) + (data.a()(i) == 1.0 ? est(t(i)) : 0.0);
    }
    const VectorXd resid = data.y() - fitted;

    OutcomeSpec spec = outcome_spec;
    if (!fit.outcome.linear_in_alpha()) spec.init = fit.outcome.alpha();

    const auto b_count = static_cast<std::size_t>(settings.draws);
    band.draws = MatrixXd::Constant(settings.draws, g, std::numeric_limits<double>::quiet_NaN());
    parallel_for(b_count, settings.threads, [&](std::size_t b) {
        auto rng = make_stream(settings.seed, b);
        VectorXd ystar(n);
        for (Index i = 0; i < n; ++i) {
            const auto pick = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
            ystar(i) = fitted(i) + resid(pick);
        }
        try {
            const Dataset boot = data.with_outcome(ystar);
            const OutcomeModel refit = fit_outcome_gee(boot, spec);
            const VectorXd mu = predict_outcome_all(refit, data.x());
            const QEstimator qb(t, data.a(), ystar, plugins.pi, mu, kernel, h);
            for (Index k = 0; k < g; ++k) {
                if (auto v = qb.try_eval(grid(k))) band.draws(static_cast<Index>(b), k) = *v;
            }
        } catch (const NumericalError&) {
            // whole draw stays NaN
        }
    });

    band.lower.resize(g);
    band.upper.resize(g);
    const double tail = 0.5 * (1.0 - settings.level);
    for (Index k = 0; k < g; ++k) {
        std::vector<double> col;
        col.reserve(b_count);
        for (Index b = 0; b < settings.draws; ++b) {
            const double v = band.draws(b, k);
            if (!std::isnan(v)) col.push_back(v);
        }
        if (static_cast<double>(settings.draws) - static_cast<double>(col.size()) >
            0.1 * settings.draws) {
            throw NumericalError("bootstrap band: grid point unsupported in more than 10% of draws");
        }
        band.lower(k) = std::min(quantile7(col, tail), band.center(k));
        band.upper(k) = std::max(quantile7(col, 1.0 - tail), band.center(k));
    }
    return band;
}

}  // namespace itr
