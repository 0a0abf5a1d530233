#include "itr/treatment_effect.hpp"

#include "itr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace itr {

IndexVector::IndexVector(VectorXd beta) : beta_(std::move(beta)) {
    if (beta_.size() < 1 || beta_(0) != 1.0) {
        throw std::invalid_argument("index vector must have leading component exactly 1");
    }
    if (!beta_.allFinite()) throw std::invalid_argument("index vector must be finite");
}

IndexVector IndexVector::from_free(const VectorXd& beta_l) {
    VectorXd b(beta_l.size() + 1);
    b(0) = 1.0;
    b.tail(beta_l.size()) = beta_l;
    return IndexVector(std::move(b));
}

VectorXd IndexVector::index(const MatrixXd& x) const {
    if (x.cols() != beta_.size()) throw std::invalid_argument("index: dimension mismatch");
    return x * beta_;
}

double IndexVector::index(const RowRef& x) const {
    if (x.size() != beta_.size()) throw std::invalid_argument("index: dimension mismatch");
    return x.dot(beta_.transpose());
}

double sample_sd(const VectorXd& v) {
    if (v.size() < 2) return 0.0;
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

namespace {

std::vector<Index> sorted_order(const VectorXd& t) {
    std::vector<Index> order(static_cast<std::size_t>(t.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return t(i) < t(j); });
    return order;
}

// Half-open range of sorted positions within the kernel support around t.
std::pair<std::size_t, std::size_t> window(const std::vector<double>& sorted, double t,
                                           double radius) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), t - radius);
    const auto hi = std::upper_bound(lo, sorted.end(), t + radius);
    return {static_cast<std::size_t>(lo - sorted.begin()),
            static_cast<std::size_t>(hi - sorted.begin())};
}

}  // namespace

QEstimator::QEstimator(const VectorXd& index, const VectorXd& a, const VectorXd& y,
                       const VectorXd& pi, const VectorXd& mu, KernelSpec kernel, Bandwidth h)
    : index_(index), kernel_(kernel), h_(h) {
    const Index n = index.size();
    if (n == 0) throw std::invalid_argument("QEstimator: empty sample");
    if (a.size() != n || y.size() != n || pi.size() != n || mu.size() != n) {
        throw std::invalid_argument("QEstimator: input lengths differ");
    }
    if (!index.allFinite()) throw std::invalid_argument("QEstimator: non-finite index value");
    const auto order = sorted_order(index);
    t_.resize(order.size());
    num_.resize(order.size());
    den_.resize(order.size());
    rank_.resize(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Index i = order[k];
        const double p = pi(i);
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("QEstimator: propensity outside (0,1)");
        t_[k] = index(i);
        num_[k] = (a(i) - p) * (y(i) - mu(i)) / (p * (1.0 - p));
        den_[k] = a(i) / p;
        rank_[static_cast<std::size_t>(i)] = static_cast<Index>(k);
    }
}

QEstimator QEstimator::build(const Dataset& data, const Plugins& plugins, const IndexVector& beta,
                             KernelSpec kernel, Bandwidth h) {
    return QEstimator(beta.index(data.x()), data.a(), data.y(), plugins.pi, plugins.mu, kernel, h);
}

std::optional<double> QEstimator::ratio(double t, Index skip_sorted) const {
    const double bw = h_.value();
    const auto [lo, hi] = window(t_, t, kernel_.support_radius() * bw);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
        if (static_cast<Index>(k) == skip_sorted) continue;
        const double w = kernel_((t_[k] - t) / bw) / bw;
        num += w * num_[k];
        den += w * den_[k];
    }
    const Index m = skip_sorted >= 0 ? n() - 1 : n();
    if (!(den >= degeneracy_floor(m)) || den == 0.0) return std::nullopt;
    return num / den;
}

double QEstimator::operator()(double t) const {
    if (auto v = try_eval(t)) return *v;
    throw NoSupportError("Q estimate has no treated support near t", t);
}

std::optional<double> QEstimator::try_eval(double t) const {
    if (!std::isfinite(t)) throw std::invalid_argument("QEstimator: non-finite evaluation point");
    return ratio(t, -1);
}

double QEstimator::loo(Index j, double t) const {
    if (auto v = try_loo(j, t)) return *v;
    throw NoSupportError("leave-one-out Q estimate has no treated support near t", t);
}

std::optional<double> QEstimator::try_loo(Index j, double t) const {
    if (j < 0 || j >= n()) throw std::out_of_range("QEstimator: leave-one-out row");
    if (!std::isfinite(t)) throw std::invalid_argument("QEstimator: non-finite evaluation point");
    return ratio(t, rank_[static_cast<std::size_t>(j)]);
}

VectorXd QEstimator::pseudo() const {
    VectorXd out(n());
    for (Index j = 0; j < n(); ++j) out(j) = num_[static_cast<std::size_t>(rank_[static_cast<std::size_t>(j)])];
    return out;
}

VectorXd QEstimator::weight() const {
    VectorXd out(n());
    for (Index j = 0; j < n(); ++j) out(j) = den_[static_cast<std::size_t>(rank_[static_cast<std::size_t>(j)])];
    return out;
}

QEstimator QEstimator::with_bandwidth(Bandwidth h) const {
    QEstimator copy = *this;
    copy.h_ = h;
    return copy;
}

double q_tilde(const QEstimator& est, double t) { return est(t); }
double q_tilde_loo(const QEstimator& est, Index j, double t) { return est.loo(j, t); }

// -------------------------------------------------------------------------

IndexSmoother::IndexSmoother(const VectorXd& index, const MatrixXd& values, KernelSpec kernel,
                             Bandwidth h)
    : kernel_(kernel), h_(h) {
    if (index.size() == 0) throw std::invalid_argument("IndexSmoother: empty sample");
    if (values.rows() != index.size()) throw std::invalid_argument("IndexSmoother: row mismatch");
    if (!index.allFinite()) throw std::invalid_argument("IndexSmoother: non-finite index value");
    const auto order = sorted_order(index);
    t_.resize(order.size());
    values_.resize(values.rows(), values.cols());
    for (std::size_t k = 0; k < order.size(); ++k) {
        t_[k] = index(order[k]);
        values_.row(static_cast<Index>(k)) = values.row(order[k]);
    }
}

std::optional<VectorXd> IndexSmoother::try_eval(double t) const {
    if (!std::isfinite(t)) throw std::invalid_argument("IndexSmoother: non-finite evaluation point");
    const double bw = h_.value();
    const auto [lo, hi] = window(t_, t, kernel_.support_radius() * bw);
    VectorXd acc = VectorXd::Zero(values_.cols());
    double mass = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
        const double w = kernel_((t_[k] - t) / bw) / bw;
        mass += w;
        acc += w * values_.row(static_cast<Index>(k)).transpose();
    }
    if (!(mass >= degeneracy_floor(n())) || mass == 0.0) return std::nullopt;
    return VectorXd(acc / mass);
}

VectorXd IndexSmoother::operator()(double t) const {
    if (auto v = try_eval(t)) return *v;
    throw NoSupportError("kernel smoother has no support near t", t);
}

VectorXd cond_mean_xl(const Dataset& data, const IndexVector& beta, KernelSpec kernel, Bandwidth h,
                      double t) {
    const Index d = data.d();
    if (beta.dim() != d) throw std::invalid_argument("cond_mean_xl: dimension mismatch");
    IndexSmoother sm(beta.index(data.x()), data.x().rightCols(d - 1), kernel, h);
    return sm(t);
}

// -------------------------------------------------------------------------

CvResult cv_bandwidth(const QEstimator& est, const std::vector<Bandwidth>& grid) {
    if (grid.empty()) throw std::invalid_argument("cv_bandwidth: empty grid");
    const Index n = est.n();
    const VectorXd pseudo = est.pseudo();
    const VectorXd weight = est.weight();
    const VectorXd& t = est.index_values();

    CvResult out;
    out.table.reserve(grid.size());
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const QEstimator e = est.with_bandwidth(grid[g]);
        double acc = 0.0;
        Index skipped = 0;
        for (Index i = 0; i < n; ++i) {
            double r = pseudo(i);
            if (weight(i) != 0.0) {
                const auto q = e.try_loo(i, t(i));
                if (!q) {
                    ++skipped;
                    continue;
                }
                r -= weight(i) * *q;
            }
            acc += r * r;
        }
        CvPoint p;
        p.h = grid[g].value();
        p.n_skipped = skipped;
        p.valid = static_cast<double>(n - skipped) >= 0.9 * static_cast<double>(n);
        p.cv = p.valid ? acc / static_cast<double>(n - skipped)
                       : std::numeric_limits<double>::quiet_NaN();
        out.table.push_back(p);
        if (!p.valid) continue;
        if (!best) {
            best = g;
            continue;
        }
        const CvPoint& b = out.table[*best];
        if (p.cv < b.cv || (p.cv == b.cv && p.h < b.h)) best = g;
    }
    if (!best) throw NumericalError("cv_bandwidth: every grid bandwidth is degenerate");
    out.best = Bandwidth(out.table[*best].h);
    return out;
}

CvResult cv_bandwidth(const Dataset& data, const Plugins& plugins, const IndexVector& beta,
                      KernelSpec kernel, const std::vector<Bandwidth>& grid) {
    if (grid.empty()) throw std::invalid_argument("cv_bandwidth: empty grid");
    return cv_bandwidth(QEstimator::build(data, plugins, beta, kernel, grid.front()), grid);
}

std::vector<Bandwidth> default_cv_grid(const VectorXd& index, double lo, double hi, int count) {
    if (count < 1 || !(lo > 0.0) || !(hi >= lo)) {
        throw std::invalid_argument("default_cv_grid: need count >= 1 and 0 < lo <= hi");
    }
    const double scale = sample_sd(index) * std::pow(static_cast<double>(index.size()), -0.2);
    if (!(scale > 0.0)) throw NumericalError("default_cv_grid: index has zero spread");
    std::vector<Bandwidth> grid;
    grid.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const double f = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
        grid.emplace_back(scale * lo * std::pow(hi / lo, f));
    }
    return grid;
}

}  // namespace itr
