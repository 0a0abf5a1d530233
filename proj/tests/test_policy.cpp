#include "itr/errors.hpp"
#include "itr/policy.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace itr;

namespace {

QCurve constant_curve(double v) {
    return [v](double) -> std::optional<double> { return v; };
}

Dataset two_arm(Index n, std::uint64_t seed) {
    const MatrixXd x = fixtures::normal_matrix(n, 2, seed);
    VectorXd a(n), y(n);
    for (Index i = 0; i < n; ++i) {
        a(i) = (i % 3 == 0) ? 1.0 : 0.0;
        y(i) = x(i, 0) - 0.5 * x(i, 1) + a(i) * (x(i, 0) * x(i, 0) - 0.5);
    }
    return Dataset(x, a, y);
}

}  // namespace

TEST_CASE("assignment follows the sign of Q") {
    Eigen::RowVectorXd x(3);
    x << 0.2, -1.0, 4.0;
    const IndexVector b = IndexVector::from_free(VectorXd::Zero(2));
    CHECK(TreatmentRule(b, constant_curve(1.0)).assign(x) == 1);
    CHECK(TreatmentRule(b, constant_curve(0.0)).assign(x) == 0);
    CHECK(TreatmentRule(b, constant_curve(-0.3)).assign(x) == 0);
    const TreatmentRule none(b, [](double) -> std::optional<double> { return std::nullopt; });
    CHECK_THROWS_AS(none.assign(x), NoSupportError);
    CHECK_THROWS_AS(TreatmentRule(b, QCurve{}), std::invalid_argument);
}

TEST_CASE("single-observation value terms") {
    // Treated, Q > 0: 2 * 3 - (1 + 1).
    CHECK(value_term(1.0, 3.0, 0.5, 1.0, 1.0, 0.0) == doctest::Approx(4.0).epsilon(1e-15));
    // Control, Q <= 0: 2 * 2 + 0.5 * (2 - 1 - (4 - 1)) / 0.5.
    CHECK(value_term(0.0, 2.0, 0.5, 2.0, -1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("value estimate averages the terms and counts dropped points") {
    const Dataset data = two_arm(30, 3);
    Plugins pl;
    pl.pi = VectorXd::Constant(30, 1.0 / 3.0);
    pl.mu = VectorXd::Zero(30);
    VectorXd q(30);
    for (Index i = 0; i < 30; ++i) q(i) = (i % 2 == 0) ? 0.4 : -0.2;
    const ValueEstimate v = value_from_q(data, pl, q);
    double s = 0.0;
    for (Index i = 0; i < 30; ++i) {
        s += value_term(data.a()(i), data.y()(i), pl.pi(i), pl.mu(i), q(i), q(i) <= 0.0 ? 1.0 : 0.0);
    }
    CHECK(v.v_hat == doctest::Approx(s / 30.0).epsilon(1e-14));
    CHECK(v.n == 30);
    CHECK(v.n_dropped == 0);

    q(4) = std::numeric_limits<double>::quiet_NaN();
    const ValueEstimate d = value_from_q(data, pl, q);
    CHECK(d.n_dropped == 1);
    CHECK(d.n == 29);
    CHECK(std::isnan(d.terms(4)));
    q(5) = q(4);
    CHECK_THROWS_AS(value_from_q(data, pl, q), NumericalError);
}

TEST_CASE("sinusoidal ramp") {
    CHECK(j_smooth(0.0, 0.7) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(j_smooth(-0.5, 1.0) == doctest::Approx((1.0 + std::sqrt(0.5)) / 2.0).epsilon(1e-14));
    CHECK(j_smooth(-0.5, 1.0) == doctest::Approx(0.85355).epsilon(1e-5));
    CHECK(j_smooth(-1.0, 1.0) == 1.0);
    CHECK(j_smooth(2.0, 1.0) == 0.0);
    CHECK_THROWS_AS(j_smooth(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("smoothed value equals the indicator version when the ramp is narrow") {
    const Dataset data = two_arm(60, 4);
    Plugins pl;
    pl.pi = VectorXd::Constant(60, 0.4);
    pl.mu = data.x().col(0);
    VectorXd q(60);
    for (Index i = 0; i < 60; ++i) q(i) = data.x()(i, 0) * data.x()(i, 0) - 0.5;
    const double amin = q.cwiseAbs().minCoeff();
    const ValueEstimate v = value_from_q(data, pl, q);
    const ValueEstimate s = value_from_q(data, pl, q, 0.5 * amin);
    CHECK(v.v_hat == s.v_hat);
}

TEST_CASE("root finding examples") {
    const RootSet none = find_roots(constant_curve(0.3), -2.0, 2.0, 0.01);
    CHECK(none.roots.empty());

    const QCurve cubic = [](double t) -> std::optional<double> { return t * t * t - t; };
    const RootSet r = find_roots(cubic, -2.0, 2.0, 4.0 / 400.0);
    REQUIRE(r.roots.size() == 3);
    CHECK(std::abs(r.roots[0] + 1.0) <= 1e-6);
    CHECK(std::abs(r.roots[1]) <= 1e-6);
    CHECK(std::abs(r.roots[2] - 1.0) <= 1e-6);
    for (double z : r.roots) CHECK(std::abs(*cubic(z)) <= 1e-6);

    const QCurve shifted = [](double t) -> std::optional<double> { return (t - 0.123) * (t + 0.77); };
    const RootSet s1 = find_roots(shifted, -2.0, 2.0, 0.013);
    const RootSet s2 = find_roots(shifted, -2.0, 2.0, 0.013);
    REQUIRE(s1.roots.size() == 2);
    CHECK(s1.roots == s2.roots);
    CHECK(std::abs(s1.roots[0] + 0.77) <= 1e-6);
}

TEST_CASE("root finding refuses curves that are mostly unavailable") {
    const QCurve gaps = [](double t) -> std::optional<double> {
        if (t > 0.5) return std::nullopt;
        return t;
    };
    CHECK_THROWS_AS(find_roots(gaps, -1.0, 1.0, 0.01), NumericalError);
    CHECK_THROWS_AS(find_roots(gaps, 1.0, -1.0, 0.01), std::invalid_argument);
}

TEST_CASE("type-7 quantiles and the default root interval") {
    CHECK(quantile7({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
    CHECK(quantile7({5.0, 1.0, 3.0}, 0.25) == 2.0);
    CHECK(quantile7({7.0}, 0.9) == 7.0);
    VectorXd t = VectorXd::LinSpaced(201, -1.0, 1.0);
    const auto [lo, hi] = default_root_interval(t);
    CHECK(lo == doctest::Approx(-0.95).epsilon(1e-12));
    CHECK(hi == doctest::Approx(0.95).epsilon(1e-12));
}
