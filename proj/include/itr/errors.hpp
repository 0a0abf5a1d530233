#pragma once

#include <stdexcept>
#include <string>

namespace itr {

/// Failure of a numerical procedure on otherwise valid input
/// (separation, rank deficiency, non-convergence, empty kernel windows).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A kernel window around `where()` carries no usable mass.
class NoSupportError : public NumericalError {
public:
    NoSupportError(const std::string& what, double t) : NumericalError(what), t_(t) {}
    double where() const noexcept { return t_; }

private:
    double t_;
};

}  // namespace itr
