#include "itr/policy.hpp"

#include "itr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace itr {

QCurve as_curve(const QEstimator& est) {
    return [est](double t) { return est.try_eval(t); };
}

TreatmentRule::TreatmentRule(IndexVector beta, QCurve q) : beta_(std::move(beta)), q_(std::move(q)) {
    if (!q_) throw std::invalid_argument("TreatmentRule: empty Q function");
}

double TreatmentRule::q(double t) const {
    if (auto v = q_(t)) return *v;
    throw NoSupportError("treatment rule: Q is not available at t", t);
}

int TreatmentRule::assign(const RowRef& x) const { return q(index(x)) > 0.0 ? 1 : 0; }

double value_term(double a, double y, double pi, double mu, double q, double j) {
    const double den = pi + (1.0 - 2.0 * pi) * j;
    return (a + (1.0 - 2.0 * a) * j) * y / den + (pi - a) * (mu + q - (2.0 * mu + q) * j) / den;
}

double j_smooth(double t, double a) {
    if (!(a > 0.0)) throw std::invalid_argument("j_smooth: a must be positive");
    if (t <= -a) return 1.0;
    if (t >= a) return 0.0;
    return 0.5 * (1.0 + std::sin(-std::numbers::pi * t / (2.0 * a)));
}

ValueEstimate value_from_q(const Dataset& data, const Plugins& plugins, const VectorXd& q,
                           std::optional<double> smoothing) {
    const Index n = data.n();
    if (q.size() != n || plugins.pi.size() != n || plugins.mu.size() != n) {
        throw std::invalid_argument("value estimate: length mismatch");
    }
    ValueEstimate out;
    out.terms = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    out.j = out.terms;
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (std::isnan(q(i))) {
            ++out.n_dropped;
            continue;
        }
        const double j = smoothing ? j_smooth(q(i), *smoothing) : (q(i) <= 0.0 ? 1.0 : 0.0);
        const double term =
            value_term(data.a()(i), data.y()(i), plugins.pi(i), plugins.mu(i), q(i), j);
        out.terms(i) = term;
        out.j(i) = j;
        acc += term;
    }
    if (static_cast<double>(out.n_dropped) > 0.05 * static_cast<double>(n)) {
        throw NumericalError("value estimate: Q unavailable at more than 5% of sample points");
    }
    out.n = n - out.n_dropped;
    out.v_hat = acc / static_cast<double>(out.n);
    return out;
}

namespace {

VectorXd q_at_sample(const Dataset& data, const TreatmentRule& rule) {
    const VectorXd t = rule.beta().index(data.x());
    VectorXd q(t.size());
    for (Index i = 0; i < t.size(); ++i) {
        const auto v = rule.try_q(t(i));
        q(i) = v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
    return q;
}

}  // namespace

ValueEstimate value_estimate(const Dataset& data, const Plugins& plugins, const TreatmentRule& rule) {
    return value_from_q(data, plugins, q_at_sample(data, rule));
}

ValueEstimate smoothed_value(const Dataset& data, const Plugins& plugins, const TreatmentRule& rule,
                             double a) {
    if (!(a > 0.0)) throw std::invalid_argument("smoothed_value: a must be positive");
    return value_from_q(data, plugins, q_at_sample(data, rule), a);
}

RootSet find_roots(const QCurve& q, double lo, double hi, double grid_step) {
    if (!(grid_step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
        throw std::invalid_argument("find_roots: need lo < hi and a positive grid step");
    }
    RootSet out;
    out.lo = lo;
    out.hi = hi;
    out.grid_step = grid_step;

    const auto steps = static_cast<long>(std::ceil((hi - lo) / grid_step - 1e-9));
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(steps) + 1);
    for (long k = 0; k < steps; ++k) grid.push_back(lo + static_cast<double>(k) * grid_step);
    grid.push_back(hi);

    std::vector<std::pair<double, double>> pts;  // (t, Q(t)) at non-degenerate grid points
    pts.reserve(grid.size());
    for (double t : grid) {
        if (auto v = q(t)) {
            pts.emplace_back(t, *v);
        } else {
            ++out.n_degenerate;
        }
    }
    if (static_cast<double>(out.n_degenerate) > 0.1 * static_cast<double>(grid.size())) {
        throw NumericalError("find_roots: Q unavailable at more than 10% of grid points");
    }

    auto add_root = [&](double r) {
        if (out.roots.empty() || r > out.roots.back()) out.roots.push_back(r);
    };
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto [t1, q1] = pts[k];
        if (q1 == 0.0) {
            add_root(t1);
            continue;
        }
        if (k + 1 == pts.size()) break;
        const auto [t2, q2] = pts[k + 1];
        if (q2 == 0.0 || (q1 > 0.0) == (q2 > 0.0)) continue;

        double a = t1, b = t2, qa = q1;
        double mid = 0.5 * (a + b);
        for (int it = 0; it < 200; ++it) {
            mid = 0.5 * (a + b);
            const auto qm = q(mid);
            if (!qm) break;  // keep the last bracket midpoint
            if (std::abs(*qm) <= 1e-6 || b - a <= 1e-10) break;
            if ((*qm > 0.0) == (qa > 0.0)) {
                a = mid;
                qa = *qm;
            } else {
                b = mid;
            }
        }
        add_root(mid);
    }
    return out;
}

double quantile7(std::vector<double> v, double prob) {
    if (v.empty()) throw std::invalid_argument("quantile7: empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile7: prob outside [0,1]");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::pair<double, double> default_root_interval(const VectorXd& index) {
    std::vector<double> v(index.data(), index.data() + index.size());
    return {quantile7(v, 0.025), quantile7(v, 0.975)};
}

}  // namespace itr
