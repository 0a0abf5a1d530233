#include "itr/pipeline.hpp"

#include "itr/errors.hpp"
#include "itr/parallel.hpp"
#include "itr/rng.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace itr {

NuisanceFit fit_nuisances(const Dataset& data, const EstimatorConfig& config) {
    return NuisanceFit{fit_propensity(data, config.propensity), fit_outcome_gee(data, config.outcome)};
}

namespace {

VectorXd start_value(const Dataset& data, const EstimatorConfig& config, std::string& label) {
    switch (config.init) {
        case InitRule::ols: label = "ols"; return ols_init(data);
        case InitRule::zeros: label = "zeros"; return VectorXd::Zero(data.d() - 1);
        case InitRule::given:
            if (config.init_vector.size() != data.d() - 1) {
                throw std::invalid_argument("solver init vector must have d - 1 entries");
            }
            label = "given";
            return config.init_vector;
    }
    return VectorXd::Zero(data.d() - 1);
}

// Configured start, then zeros, then perturbed restarts around the best iterate.
BetaSolution solve_with_retries(const EstimatingEquationContext& ctx, const VectorXd& init,
                                const EstimatorConfig& config, std::string& label) {
    BetaSolution sol = solve_beta(ctx, init, config.solver);
    if (!sol.converged && config.retry_from_zeros && init.size() > 0 && !init.isZero(0.0)) {
        BetaSolution retry = solve_beta(ctx, VectorXd::Zero(init.size()), config.solver);
        if (retry.equation_norm < sol.equation_norm) {
            sol = retry;
            label += "+zeros";
        }
    }
    for (int k = 0; k < config.restarts && !sol.converged && init.size() > 0; ++k) {
        auto rng = make_stream(0x7265737461727473ULL, static_cast<std::uint64_t>(k));
        VectorXd s = sol.beta.free();
        for (Index j = 0; j < s.size(); ++j) s(j) += config.restart_spread * (2.0 * uniform01(rng) - 1.0);
        try {
            BetaSolution retry = solve_beta(ctx, s, config.solver);
            if (retry.converged) {
                sol = retry;
                label += "+restart" + std::to_string(k + 1);
            }
        } catch (const NumericalError&) {
        }
    }
    return sol;
}

}  // namespace

PolicyReport fit_policy(const Dataset& data, const EstimatorConfig& config) {
    PolicyReport rep{.fit = fit_nuisances(data, config)};
    rep.gamma_cov = sandwich_gamma(data, rep.fit.propensity);
    rep.alpha_cov = sandwich_alpha(data, rep.fit.outcome);

    rep.init = start_value(data, config, rep.init_used);
    const IndexVector start = IndexVector::from_free(rep.init);
    const Bandwidth pilot = pilot_bandwidth(data, start, config.pilot_c);
    const Bandwidth centre = pilot_bandwidth(data, start, config.centre_c);
    rep.pilot_h = pilot.value();
    rep.centre_h = centre.value();

    const EstimatingEquationContext ctx(data, rep.fit, config.kernel, pilot, centre);
    rep.n_clipped = ctx.plugins.n_clipped;
    rep.solution = solve_with_retries(ctx, rep.init, config, rep.init_used);

    if (config.beta_inference) {
        try {
            rep.beta_inference = beta_covariance(ctx, rep.solution);
        } catch (const NumericalError& e) {
            rep.beta_inference_error = e.what();
        }
    }

    const IndexVector& beta = rep.solution.beta;
    const VectorXd index = beta.index(data.x());
    const auto grid = default_cv_grid(index, config.cv_lo, config.cv_hi, config.cv_count);
    const QEstimator base = QEstimator::build(data, ctx.plugins, beta, config.kernel, grid.front());
    rep.cv = cv_bandwidth(base, grid);
    rep.q = std::make_shared<const QEstimator>(base.with_bandwidth(rep.cv.best));

    const auto [lo, hi] = default_root_interval(index);
    rep.roots = find_roots(as_curve(*rep.q), lo, hi, (hi - lo) / 400.0);
    for (double r : rep.roots.roots) {
        RootReport rr;
        rr.root = r;
        if (config.root_inference) {
            try {
                rr.inference = root_inference(*rep.q, r, data, ctx.plugins);
            } catch (const NumericalError& e) {
                rr.error = e.what();
            }
        }
        rep.root_reports.push_back(std::move(rr));
    }

    rep.value = value_estimate(data, ctx.plugins, rep.rule());
    rep.value_inference = value_inference(data, ctx.plugins, rep.value, rep.fit.outcome);
    rep.value.sigma_hat = rep.value_inference.sigma_hat;
    return rep;
}

BetaSolution estimate_beta(const Dataset& data, const EstimatorConfig& config) {
    const NuisanceFit fit = fit_nuisances(data, config);
    std::string label;
    const VectorXd init = start_value(data, config, label);
    const IndexVector start = IndexVector::from_free(init);
    const EstimatingEquationContext ctx(data, fit, config.kernel, pilot_bandwidth(data, start, config.pilot_c),
                                        pilot_bandwidth(data, start, config.centre_c));
    return solve_with_retries(ctx, init, config, label);
}

PairsBootstrap pairs_bootstrap_beta(const Dataset& data, const EstimatorConfig& config, int draws,
                                    std::uint64_t seed, unsigned threads) {
    if (draws < 2) throw std::invalid_argument("pairs bootstrap needs at least 2 draws");
    const Index n = data.n();
    const Index p = data.d() - 1;
    PairsBootstrap out;
    out.draws = MatrixXd::Constant(draws, p, std::numeric_limits<double>::quiet_NaN());
    parallel_for(static_cast<std::size_t>(draws), threads, [&](std::size_t b) {
        auto rng = make_stream(seed, b);
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (auto& r : rows) r = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        try {
            const BetaSolution sol = estimate_beta(data.rows(rows), config);
            if (sol.converged) out.draws.row(static_cast<Index>(b)) = sol.beta.free().transpose();
        } catch (const std::exception&) {
        }
    });

    out.sd = VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    for (Index b = 0; b < draws; ++b) {
        if (out.draws.row(b).hasNaN()) ++out.failures;
    }
    const Index ok = draws - out.failures;
    if (ok < 2) return out;
    VectorXd mean = VectorXd::Zero(p);
    for (Index b = 0; b < draws; ++b) {
        if (!out.draws.row(b).hasNaN()) mean += out.draws.row(b).transpose();
    }
    mean /= static_cast<double>(ok);
    VectorXd ss = VectorXd::Zero(p);
    for (Index b = 0; b < draws; ++b) {
        if (!out.draws.row(b).hasNaN()) ss += (out.draws.row(b).transpose() - mean).cwiseAbs2();
    }
    out.sd = (ss / static_cast<double>(ok - 1)).cwiseSqrt();
    return out;
}

}  // namespace itr
