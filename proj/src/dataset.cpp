#include "itr/dataset.hpp"

#include <stdexcept>
#include <string>

namespace itr {

Dataset::Dataset(MatrixXd x, VectorXd a, VectorXd y)
    : x_(std::move(x)), a_(std::move(a)), y_(std::move(y)) {
    if (a_.size() != x_.rows() || y_.size() != x_.rows()) {
        throw std::invalid_argument("dataset: x, a and y must have the same number of rows");
    }
    if (x_.rows() == 0 || x_.cols() == 0) throw std::invalid_argument("dataset: empty");
    if (!x_.allFinite() || !y_.allFinite()) {
        throw std::invalid_argument("dataset: non-finite covariate or outcome");
    }
    for (Index i = 0; i < a_.size(); ++i) {
        if (a_(i) == 1.0) {
            ++n_treated_;
        } else if (a_(i) != 0.0) {
            throw std::invalid_argument("dataset: treatment at row " + std::to_string(i) +
                                        " is not 0/1");
        }
    }
    if (n_treated_ == 0 || n_treated_ == n()) {
        throw std::invalid_argument("dataset: both treatment arms must be present");
    }
}

Dataset Dataset::without_row(Index j) const {
    if (j < 0 || j >= n()) throw std::out_of_range("dataset: row index");
    MatrixXd x(n() - 1, d());
    VectorXd a(n() - 1), y(n() - 1);
    for (Index i = 0, k = 0; i < n(); ++i) {
        if (i == j) continue;
        x.row(k) = x_.row(i);
        a(k) = a_(i);
        y(k) = y_(i);
        ++k;
    }
    return Dataset(std::move(x), std::move(a), std::move(y));
}

Dataset Dataset::rows(std::span<const Index> idx) const {
    const auto m = static_cast<Index>(idx.size());
    MatrixXd x(m, d());
    VectorXd a(m), y(m);
    for (Index k = 0; k < m; ++k) {
        const Index i = idx[static_cast<std::size_t>(k)];
        if (i < 0 || i >= n()) throw std::out_of_range("dataset: row index");
        x.row(k) = x_.row(i);
        a(k) = a_(i);
        y(k) = y_(i);
    }
    return Dataset(std::move(x), std::move(a), std::move(y));
}

Dataset Dataset::with_outcome(VectorXd y) const { return Dataset(x_, a_, std::move(y)); }

}  // namespace itr
