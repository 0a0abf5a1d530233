#include "itr/index_estimation.hpp"

#include "itr/errors.hpp"
#include "itr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace itr {

EstimatingEquationContext::EstimatingEquationContext(Dataset data_, NuisanceFit fit_,
                                                     KernelSpec kernel_, Bandwidth pilot_h_,
                                                     std::optional<Bandwidth> centre_h_)
    : data(std::move(data_)),
      fit(std::move(fit_)),
      plugins(evaluate_plugins(fit, data.x())),
      kernel(kernel_),
      pilot_h(pilot_h_),
      centre_h(centre_h_.value_or(pilot_h_)) {}

EstimatingEquationContext EstimatingEquationContext::with_fit(NuisanceFit other) const {
    return EstimatingEquationContext(data, std::move(other), kernel, pilot_h, centre_h);
}

EquationTerms equation_terms(const EstimatingEquationContext& ctx, const VectorXd& beta_l) {
    const Dataset& data = ctx.data;
    const Index n = data.n();
    const Index d = data.d();
    const Index p = d - 1;
    if (beta_l.size() != p) throw std::invalid_argument("estimating equation: beta_L has wrong length");
    if (!beta_l.allFinite()) throw std::invalid_argument("estimating equation: non-finite beta_L");

    EquationTerms out;
    out.q = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    out.bracket = VectorXd::Zero(n);
    out.resid = VectorXd::Zero(n);
    out.centred = MatrixXd::Zero(n, p);
    out.kept.assign(static_cast<std::size_t>(n), 1);
    out.value = VectorXd::Zero(p);
    if (p == 0) return out;

    const IndexVector beta = IndexVector::from_free(beta_l);
    const VectorXd t = beta.index(data.x());
    const VectorXd& a = data.a();
    const VectorXd& y = data.y();
    const VectorXd& pi = ctx.plugins.pi;
    const VectorXd& mu = ctx.plugins.mu;

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return t(i) < t(j); });

    std::vector<double> ts(order.size()), num(order.size()), den(order.size());
    MatrixXd xl(n, p);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Index i = order[k];
        ts[k] = t(i);
        num[k] = (a(i) - pi(i)) * (y(i) - mu(i)) / (pi(i) * (1.0 - pi(i)));
        den[k] = a(i) / pi(i);
        xl.row(static_cast<Index>(k)) = data.x().row(i).tail(p);
    }

    // Two sliding windows over the sorted index: one for Q, one for the centring.
    const double bw = ctx.pilot_h.value();
    const double bw_c = ctx.centre_h.value();
    const bool shared = bw_c == bw;
    const double radius = ctx.kernel.support_radius() * bw;
    const double radius_c = ctx.kernel.support_radius() * bw_c;
    const double floor = degeneracy_floor(n);
    std::size_t lo = 0, hi = 0, lo_c = 0, hi_c = 0;
    VectorXd sx(p);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double tk = ts[k];
        while (lo < ts.size() && ts[lo] < tk - radius) ++lo;
        if (hi < lo) hi = lo;
        while (hi < ts.size() && ts[hi] <= tk + radius) ++hi;
        double s_num = 0.0, s_den = 0.0, s_mass = 0.0;
        sx.setZero();
        for (std::size_t m = lo; m < hi; ++m) {
            const double w = ctx.kernel((ts[m] - tk) / bw) / bw;
            s_num += w * num[m];
            s_den += w * den[m];
            if (shared) {
                s_mass += w;
                sx.noalias() += w * xl.row(static_cast<Index>(m)).transpose();
            }
        }
        if (!shared) {
            while (lo_c < ts.size() && ts[lo_c] < tk - radius_c) ++lo_c;
            if (hi_c < lo_c) hi_c = lo_c;
            while (hi_c < ts.size() && ts[hi_c] <= tk + radius_c) ++hi_c;
            for (std::size_t m = lo_c; m < hi_c; ++m) {
                const double w = ctx.kernel((ts[m] - tk) / bw_c) / bw_c;
                s_mass += w;
                sx.noalias() += w * xl.row(static_cast<Index>(m)).transpose();
            }
        }
        const Index i = order[k];
        if (!(s_den >= floor) || !(s_mass >= floor)) {
            out.kept[static_cast<std::size_t>(i)] = 0;
            ++out.n_dropped;
            continue;
        }
        const double q = s_num / s_den;
        out.q(i) = q;
        out.bracket(i) = num[k] + (1.0 - den[k]) * q;
        out.resid(i) = num[k] - den[k] * q;
        out.centred.row(i) = xl.row(static_cast<Index>(k)) - (sx / s_mass).transpose();
    }

    if (static_cast<double>(out.n_dropped) > 0.05 * static_cast<double>(n)) {
        std::ostringstream msg;
        msg << "estimating equation: " << out.n_dropped << " of " << n
            << " sample points have empty kernel windows (limit 5%) at pilot bandwidth "
            << ctx.pilot_h.value() << "; a larger pilot constant widens the window";
        throw NumericalError(msg.str());
    }
    for (Index i = 0; i < n; ++i) {
        if (out.kept[static_cast<std::size_t>(i)]) out.value += out.bracket(i) * out.centred.row(i).transpose();
    }
    out.value /= static_cast<double>(n - out.n_dropped);
    if (!out.value.allFinite()) throw NumericalError("estimating equation: non-finite value");
    return out;
}

VectorXd estimating_equation(const EstimatingEquationContext& ctx, const VectorXd& beta_l) {
    return equation_terms(ctx, beta_l).value;
}

MatrixXd equation_jacobian(const EstimatingEquationContext& ctx, const VectorXd& beta_l,
                           const VectorXd* g0) {
    const Index p = beta_l.size();
    const VectorXd base = g0 ? *g0 : estimating_equation(ctx, beta_l);
    MatrixXd jac(p, p);
    for (Index j = 0; j < p; ++j) {
        VectorXd b = beta_l;
        const double step = 1e-4 * std::max(1.0, std::abs(beta_l(j)));
        b(j) += step;
        jac.col(j) = (estimating_equation(ctx, b) - base) / step;
    }
    return jac;
}

namespace {

std::optional<VectorXd> try_equation(const EstimatingEquationContext& ctx, const VectorXd& b) {
    try {
        return estimating_equation(ctx, b);
    } catch (const NumericalError&) {
        return std::nullopt;
    }
}

}  // namespace

BetaSolution solve_beta(const EstimatingEquationContext& ctx, const VectorXd& init,
                        const SolverSettings& settings) {
    const Index p = ctx.data.d() - 1;
    if (init.size() != p) throw std::invalid_argument("solve_beta: init has wrong length");
    if (!init.allFinite()) throw std::invalid_argument("solve_beta: non-finite init");

    BetaSolution sol;
    if (p == 0) {
        sol.beta = IndexVector(VectorXd::Ones(1));
        sol.converged = true;
        return sol;
    }

    VectorXd x = init;
    VectorXd g = estimating_equation(ctx, x);
    bool lm = false;
    double lambda = 1e-3;
    int iter = 0;
    for (; iter < settings.max_iter; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() <= settings.tol) break;
        MatrixXd jac;
        try {
            jac = equation_jacobian(ctx, x, &g);
        } catch (const NumericalError&) {
            break;
        }
        if (!jac.allFinite()) break;

        bool accepted = false;
        if (!lm) {
            Eigen::ColPivHouseholderQR<MatrixXd> qr(jac);
            if (qr.rank() == p) {
                const VectorXd step = qr.solve(-g);
                double s = 1.0;
                for (int half = 0; half < 20; ++half, s *= 0.5) {
                    const VectorXd trial = x + s * step;
                    const auto gt = try_equation(ctx, trial);
                    if (gt && gt->squaredNorm() < g.squaredNorm()) {
                        x = trial;
                        g = *gt;
                        accepted = true;
                        break;
                    }
                }
            }
            if (!accepted) lm = true;
        }
        if (lm && !accepted) {
            const MatrixXd jtj = jac.transpose() * jac;
            const VectorXd rhs = -jac.transpose() * g;
            const VectorXd scale = jtj.diagonal().cwiseMax(1e-12);
            for (int attempt = 0; attempt < 40; ++attempt) {
                MatrixXd lhs = jtj;
                lhs.diagonal() += lambda * scale;
                const VectorXd step = lhs.ldlt().solve(rhs);
                if (step.allFinite()) {
                    const auto gt = try_equation(ctx, x + step);
                    if (gt && gt->squaredNorm() < g.squaredNorm()) {
                        x += step;
                        g = *gt;
                        lambda = std::max(lambda / 3.0, 1e-10);
                        accepted = true;
                        break;
                    }
                }
                lambda *= 4.0;
            }
        }
        if (!accepted) break;
    }

    sol.beta = IndexVector::from_free(x);
    sol.equation_norm = g.lpNorm<Eigen::Infinity>();
    sol.iterations = iter;
    sol.converged = sol.equation_norm <= settings.tol;
    sol.used_lm = lm;
    return sol;
}

VectorXd ols_init(const Dataset& data) {
    const Index n = data.n();
    const Index d = data.d();
    MatrixXd z(n, 2 + 2 * d);
    z.col(0).setOnes();
    z.col(1) = data.a();
    z.middleCols(2, d) = data.x();
    z.rightCols(d) = data.a().asDiagonal() * data.x();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
    if (qr.rank() < z.cols()) return VectorXd::Zero(d - 1);
    const VectorXd coef = qr.solve(data.y());
    const VectorXd c = coef.tail(d);
    if (!c.allFinite() || c(0) == 0.0 || std::abs(c(0)) < 1e-8 * c.lpNorm<Eigen::Infinity>()) {
        return VectorXd::Zero(d - 1);
    }
    return c.tail(d - 1) / c(0);
}

Bandwidth pilot_bandwidth(const Dataset& data, const IndexVector& beta, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("pilot bandwidth constant must be positive");
    const double sd = sample_sd(beta.index(data.x()));
    if (!(sd > 0.0)) throw NumericalError("pilot bandwidth: index has zero spread");
    return Bandwidth(c * sd * std::pow(static_cast<double>(data.n()), -1.0 / 3.0));
}

MultiStartResult multi_start(const EstimatingEquationContext& ctx, const VectorXd& init, int extra,
                             double spread, std::uint64_t seed, const SolverSettings& settings) {
    MultiStartResult out;
    out.starts.push_back(init);
    for (int k = 0; k < extra; ++k) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(k));
        VectorXd s = init;
        for (Index j = 0; j < s.size(); ++j) s(j) += spread * (2.0 * uniform01(rng) - 1.0);
        out.starts.push_back(std::move(s));
    }
    for (const auto& s : out.starts) {
        BetaSolution sol;
        try {
            sol = solve_beta(ctx, s, settings);
        } catch (const NumericalError&) {
            sol.beta = IndexVector::from_free(s);
            sol.equation_norm = std::numeric_limits<double>::infinity();
        }
        if (sol.converged) {
            const VectorXd b = sol.beta.free();
            const bool seen = std::any_of(out.distinct_roots.begin(), out.distinct_roots.end(),
                                          [&](const VectorXd& r) {
                                              return (r - b).lpNorm<Eigen::Infinity>() <= 1e-3;
                                          });
            if (!seen) out.distinct_roots.push_back(b);
        }
        out.solutions.push_back(std::move(sol));
    }
    return out;
}

}  // namespace itr
