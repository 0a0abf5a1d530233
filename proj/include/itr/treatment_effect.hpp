#pragma once

#include "itr/dataset.hpp"
#include "itr/kernel.hpp"
#include "itr/nuisance.hpp"

#include <optional>
#include <vector>

namespace itr {

/// Single-index coefficient beta = (1, beta_L). The leading 1 anchors the scale.
class IndexVector {
public:
    explicit IndexVector(VectorXd beta);
    static IndexVector from_free(const VectorXd& beta_l);

    const VectorXd& full() const noexcept { return beta_; }
    VectorXd free() const { return beta_.tail(beta_.size() - 1); }
    Index dim() const noexcept { return beta_.size(); }

    /// beta' x_i for every row of x.
    VectorXd index(const MatrixXd& x) const;
    double index(const RowRef& x) const;

private:
    VectorXd beta_;
};

/// Sample standard deviation (n - 1 divisor).
double sample_sd(const VectorXd& v);

/// Relative floor applied to every kernel denominator: sums below 1e-8 n are degenerate.
inline double degeneracy_floor(Index n) { return 1e-8 * static_cast<double>(n); }

/// Sorted-window evaluation of the kernel ratio
///
///   Q(t) = sum_i K_h(t_i - t) (A_i - pi_i)(Y_i - mu_i) / {pi_i (1 - pi_i)}
///          / sum_i K_h(t_i - t) A_i / pi_i.
///
/// Observations are held sorted by index; every sum runs over the kernel window
/// in that order, so dropping an observation from the loop gives bitwise the same
/// result as deleting its row.
class QEstimator {
public:
    QEstimator(const VectorXd& index, const VectorXd& a, const VectorXd& y, const VectorXd& pi,
               const VectorXd& mu, KernelSpec kernel, Bandwidth h);

    static QEstimator build(const Dataset& data, const Plugins& plugins, const IndexVector& beta,
                            KernelSpec kernel, Bandwidth h);

    Index n() const noexcept { return static_cast<Index>(t_.size()); }
    const KernelSpec& kernel() const noexcept { return kernel_; }
    Bandwidth bandwidth() const noexcept { return h_; }

    /// Throws NoSupportError when the treated-weight denominator is below the floor.
    double operator()(double t) const;
    std::optional<double> try_eval(double t) const;

    /// Leave-one-out estimate with observation j (original row order) removed.
    double loo(Index j, double t) const;
    std::optional<double> try_loo(Index j, double t) const;

    /// Per-observation pseudo-outcome (A - pi)(Y - mu)/{pi(1 - pi)} and weight A/pi,
    /// in original row order.
    VectorXd pseudo() const;
    VectorXd weight() const;
    const VectorXd& index_values() const noexcept { return index_; }

    QEstimator with_bandwidth(Bandwidth h) const;

private:
    QEstimator() = default;
    std::optional<double> ratio(double t, Index skip_sorted) const;

    VectorXd index_;                 // original order
    std::vector<double> t_;          // sorted index
    std::vector<double> num_;        // pseudo-outcomes, sorted order
    std::vector<double> den_;        // A / pi, sorted order
    std::vector<Index> rank_;        // rank_[j] = sorted position of row j
    KernelSpec kernel_;
    Bandwidth h_{1.0};
};

double q_tilde(const QEstimator& est, double t);
double q_tilde_loo(const QEstimator& est, Index j, double t);

/// Nadaraya-Watson smooth of the columns of `values` against a scalar index.
class IndexSmoother {
public:
    IndexSmoother(const VectorXd& index, const MatrixXd& values, KernelSpec kernel, Bandwidth h);

    Index n() const noexcept { return static_cast<Index>(t_.size()); }
    Index columns() const noexcept { return values_.cols(); }

    /// Throws NoSupportError when the kernel mass sum_i K_h(t_i - t) is below the floor.
    VectorXd operator()(double t) const;
    std::optional<VectorXd> try_eval(double t) const;

private:
    std::vector<double> t_;
    MatrixXd values_;  // rows in sorted order
    KernelSpec kernel_;
    Bandwidth h_;
};

/// E(X_L | beta' X = t) where X_L are the trailing d - 1 covariate columns.
VectorXd cond_mean_xl(const Dataset& data, const IndexVector& beta, KernelSpec kernel, Bandwidth h,
                      double t);

struct CvPoint {
    double h = 0.0;
    double cv = 0.0;       // NaN when the grid point is invalid
    Index n_skipped = 0;   // treated observations whose leave-one-out window is degenerate
    bool valid = false;
};

struct CvResult {
    Bandwidth best{1.0};
    std::vector<CvPoint> table;
};

/// Leave-one-out CV over the grid:
///   CV(h) = mean_i [pseudo_i - (A_i / pi_i) Q_{-i}(t_i)]^2.
/// Controls need no leave-one-out fit. A grid point is valid when at least 90% of
/// observations contribute; skipped ones are excluded from the mean. Ties go to the
/// smaller bandwidth.
CvResult cv_bandwidth(const QEstimator& est, const std::vector<Bandwidth>& grid);
CvResult cv_bandwidth(const Dataset& data, const Plugins& plugins, const IndexVector& beta,
                      KernelSpec kernel, const std::vector<Bandwidth>& grid);

/// `count` log-spaced bandwidths in [lo, hi] * sd(index) * n^{-1/5}.
std::vector<Bandwidth> default_cv_grid(const VectorXd& index, double lo = 0.2, double hi = 3.0,
                                       int count = 20);

}  // namespace itr
