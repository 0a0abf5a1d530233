#pragma once

#include "itr/dataset.hpp"
#include "itr/nuisance.hpp"
#include "itr/treatment_effect.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace itr {

/// Partial function t -> Q(t); nullopt where the estimate has no support.
using QCurve = std::function<std::optional<double>(double)>;

/// Wraps a fitted estimator as a QCurve.
QCurve as_curve(const QEstimator& est);

/// Treat iff Q(beta' x) > 0. Q exactly 0 assigns control.
class TreatmentRule {
public:
    TreatmentRule(IndexVector beta, QCurve q);

    const IndexVector& beta() const noexcept { return beta_; }
    double index(const RowRef& x) const { return beta_.index(x); }
    /// Throws NoSupportError when Q is not available at beta' x.
    double q(double t) const;
    std::optional<double> try_q(double t) const { return q_(t); }
    int assign(const RowRef& x) const;

private:
    IndexVector beta_;
    QCurve q_;
};

/// Per-observation value contribution with j = I{Q <= 0} (or its smoothed version):
///   [A + (1 - 2A) j] Y / den + (pi - A)[mu + Q - (2 mu + Q) j] / den,
///   den = pi + (1 - 2 pi) j.
double value_term(double a, double y, double pi, double mu, double q, double j);

/// Sinusoidal ramp: 1 for t <= -a, 0 for t >= a, [1 + sin(-pi t / (2a))] / 2 between.
double j_smooth(double t, double a);

struct ValueEstimate {
    double v_hat = 0.0;
    double sigma_hat = std::numeric_limits<double>::quiet_NaN();  // filled by inference
    Index n = 0;           // observations used
    Index n_dropped = 0;   // observations where Q was not available
    VectorXd terms;        // per-observation contributions, NaN where dropped
    VectorXd j;            // indicator (or ramp) of Q_i <= 0, NaN where dropped
};

/// Augmented IPW value of the rule. Throws NumericalError if more than 5% of points drop.
ValueEstimate value_estimate(const Dataset& data, const Plugins& plugins, const TreatmentRule& rule);

/// The same estimator with I{Q <= 0} replaced by j_smooth(Q, a).
ValueEstimate smoothed_value(const Dataset& data, const Plugins& plugins, const TreatmentRule& rule,
                             double a);

/// Same computations on precomputed Q_i values (NaN marks a dropped point).
ValueEstimate value_from_q(const Dataset& data, const Plugins& plugins, const VectorXd& q,
                           std::optional<double> smoothing = std::nullopt);

struct RootSet {
    std::vector<double> roots;  // strictly increasing
    double lo = 0.0;
    double hi = 0.0;
    double grid_step = 0.0;
    Index n_degenerate = 0;  // grid points where Q was unavailable
};

/// Scans [lo, hi] on a grid for sign changes, then bisects each bracket until
/// |Q| <= 1e-6 or the bracket is narrower than 1e-10. Throws NumericalError when more
/// than 10% of grid points are degenerate.
RootSet find_roots(const QCurve& q, double lo, double hi, double grid_step);

/// [2.5%, 97.5%] sample quantiles of the index.
std::pair<double, double> default_root_interval(const VectorXd& index);

/// Type-7 sample quantile (linear interpolation between order statistics).
double quantile7(std::vector<double> v, double prob);

}  // namespace itr
