#pragma once

#include <Eigen/Dense>

#include <span>

namespace itr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Observational sample (X, A, Y). Immutable after construction.
///
/// Invariants: A is 0/1, every entry finite, and both treatment arms are present.
class Dataset {
public:
    Dataset(MatrixXd x, VectorXd a, VectorXd y);

    Index n() const noexcept { return x_.rows(); }
    Index d() const noexcept { return x_.cols(); }

    const MatrixXd& x() const noexcept { return x_; }
    const VectorXd& a() const noexcept { return a_; }
    const VectorXd& y() const noexcept { return y_; }

    Index n_treated() const noexcept { return n_treated_; }
    Index n_control() const noexcept { return n() - n_treated_; }

    /// Copy with row j removed.
    Dataset without_row(Index j) const;
    /// Copy holding the listed rows, in order (duplicates allowed).
    Dataset rows(std::span<const Index> idx) const;
    /// Copy with a replaced outcome vector.
    Dataset with_outcome(VectorXd y) const;

private:
    MatrixXd x_;
    VectorXd a_;
    VectorXd y_;
    Index n_treated_ = 0;
};

}  // namespace itr
