#include "itr/errors.hpp"
#include "itr/nuisance.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace itr;
using fixtures::normal_matrix;
using fixtures::sup_norm;

namespace {

PropensitySpec constant_spec() {
    PropensitySpec s;
    s.form = PropensityForm::constant;
    return s;
}

Eigen::RowVectorXd row(std::initializer_list<double> v) {
    Eigen::RowVectorXd r(static_cast<Index>(v.size()));
    Index k = 0;
    for (double x : v) r(k++) = x;
    return r;
}

}  // namespace

TEST_CASE("intercept-only propensity is the treated share") {
    {
        MatrixXd x = MatrixXd::Zero(4, 1);
        VectorXd a(4), y = VectorXd::Zero(4);
        a << 1, 0, 1, 0;
        const auto m = fit_propensity(Dataset(x, a, y), constant_spec());
        CHECK(m.predict(row({0.0})) == doctest::Approx(0.5).epsilon(1e-12));
    }
    {
        MatrixXd x = normal_matrix(10, 2, 3);
        VectorXd a(10), y = VectorXd::Zero(10);
        a << 1, 1, 1, 0, 1, 1, 0, 1, 0, 1;
        const auto m = fit_propensity(Dataset(x, a, y), constant_spec());
        REQUIRE(m.gamma().size() == 1);
        CHECK(m.gamma()(0) == doctest::Approx(std::log(0.7 / 0.3)).epsilon(1e-10));
        CHECK(m.gamma()(0) == doctest::Approx(0.8473).epsilon(1e-4));
    }
}

TEST_CASE("logistic MLE matches a brute-force grid maximiser") {
    const Index n = 10;
    const MatrixXd x = normal_matrix(n, 1, 21);
    VectorXd a(n);
    a << 1, 0, 0, 1, 1, 0, 1, 0, 1, 1;  // not separable in x (checked below)
    const Dataset data(x, a, VectorXd::Zero(n));
    const auto m = fit_propensity(data, PropensitySpec{});
    MatrixXd z(n, 2);
    z.col(0).setOnes();
    z.col(1) = x.col(0);
    const VectorXd g = oracle::logistic_grid(z, a, -3.0, 3.0, 0.01);
    REQUIRE(std::abs(g(0)) < 2.99);
    REQUIRE(std::abs(g(1)) < 2.99);
    CHECK(std::abs(m.gamma()(0) - g(0)) <= 1e-3);
    CHECK(std::abs(m.gamma()(1) - g(1)) <= 1e-3);
}

TEST_CASE("propensity predictions") {
    const PropensityModel constant(PropensityForm::constant, VectorXd::Zero(1), 4);
    CHECK(constant.predict(row({3, -1, 2, 0})) == 0.5);
    const PropensityModel zero(PropensityForm::logistic_linear, VectorXd::Zero(5), 4);
    CHECK(zero.predict(row({1, 2, 3, 4})) == 0.5);
    VectorXd g(4);
    g << 0.1, 0.0, -0.1, 0.0;
    const PropensityModel sim4(PropensityForm::logistic_linear, g, 4, false);
    CHECK(sim4.predict(row({1, 1, 1, 1})) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(predict_propensity(sim4, row({1, 1, 1, 1})) == doctest::Approx(0.5).epsilon(1e-15));
    const PropensityModel fixed(PropensityForm::fixed, VectorXd(), 4, true, 1e-3, 0.4);
    CHECK(fixed.predict(row({0, 0, 0, 0})) == 0.4);
}

TEST_CASE("predictions respect the clipping bounds") {
    VectorXd g(3);
    g << 0.0, 40.0, -40.0;
    const PropensityModel m(PropensityForm::logistic_linear, g, 2, true, 0.02);
    const MatrixXd x = normal_matrix(200, 2, 5);
    Index clipped = 0;
    const VectorXd p = predict_propensity_all(m, x, &clipped);
    CHECK(p.minCoeff() >= 0.02);
    CHECK(p.maxCoeff() <= 0.98);
    CHECK(clipped > 0);
    CHECK(m.raw(row({1.0, -1.0})) > 0.98);
}

TEST_CASE("propensity score vanishes and the likelihood is maximal at the MLE") {
    const auto scn = preset(4, 500);
    const Dataset data = generate(scn, 77).data;
    const auto m = fit_propensity(data, PropensitySpec{});
    CHECK(sup_norm(propensity_score(m, data)) <= 1e-8);
    const double ll = propensity_loglik(m, data);
    auto rng = make_stream(78, 0);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        VectorXd d(m.n_params());
        for (Index j = 0; j < d.size(); ++j) d(j) = z(rng);
        d *= 0.1 / d.norm();
        CHECK(propensity_loglik(m.with_gamma(m.gamma() + d), data) <= ll);
    }
}

TEST_CASE("nuisance fits are invariant to row order") {
    const Dataset data = fixtures::sim_data(4, 300, 9);
    const auto idx = fixtures::scrambled(data.n(), 10);
    const Dataset perm = data.rows(idx);
    const auto p1 = fit_propensity(data, PropensitySpec{});
    const auto p2 = fit_propensity(perm, PropensitySpec{});
    CHECK(sup_norm(p1.gamma() - p2.gamma()) <= 1e-10);
    const auto o1 = fit_outcome_gee(data, OutcomeSpec{});
    const auto o2 = fit_outcome_gee(perm, OutcomeSpec{});
    CHECK(sup_norm(o1.alpha() - o2.alpha()) <= 1e-10);
}

TEST_CASE("separated treatment is reported") {
    MatrixXd x(8, 1);
    x << -4, -3, -2, -1, 1, 2, 3, 4;
    VectorXd a(8);
    a << 0, 0, 0, 0, 1, 1, 1, 1;
    CHECK_THROWS_AS(fit_propensity(Dataset(x, a, VectorXd::Zero(8)), PropensitySpec{}), NumericalError);
}

TEST_CASE("singular propensity design is reported") {
    MatrixXd x(6, 2);
    x << 1, 2, 2, 4, 3, 6, -1, -2, 0.5, 1, 2, 4;
    VectorXd a(6);
    a << 1, 0, 1, 0, 0, 1;
    CHECK_THROWS_AS(fit_propensity(Dataset(x, a, VectorXd::Zero(6)), PropensitySpec{}), NumericalError);
}

TEST_CASE("constant outcome model is the control mean") {
    MatrixXd x = normal_matrix(6, 2, 4);
    VectorXd a(6), y(6);
    a << 0, 1, 0, 0, 1, 0;
    y << 1.0, 50.0, 2.0, 4.0, -9.0, 5.0;
    OutcomeSpec s;
    s.basis = OutcomeBasis::constant;
    const auto m = fit_outcome_gee(Dataset(x, a, y), s);
    CHECK(m.alpha()(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(OutcomeModel(OutcomeBasis::constant, 2, VectorXd::Constant(1, 2.0)).predict(row({7, 8})) == 2.0);
}

TEST_CASE("linear outcome model interpolates noiseless controls") {
    const Index n = 40;
    const MatrixXd x = normal_matrix(n, 4, 6);
    VectorXd alpha0(4);
    alpha0 << 1, -1, 1, 1;
    VectorXd a(n);
    for (Index i = 0; i < n; ++i) a(i) = i % 3 == 0 ? 1.0 : 0.0;
    const VectorXd y = (1.0 + (x * alpha0).array()).matrix() + 5.0 * a;
    const auto m = fit_outcome_gee(Dataset(x, a, y), OutcomeSpec{});
    CHECK(std::abs(m.alpha()(0) - 1.0) <= 1e-10);
    CHECK(sup_norm(m.alpha().tail(4) - alpha0) <= 1e-10);
}

TEST_CASE("linear outcome model matches the normal equations") {
    MatrixXd x = normal_matrix(9, 3, 8);
    VectorXd a(9), y(9);
    a << 0, 1, 0, 0, 1, 0, 1, 0, 1;  // five controls, four parameters
    y << 0.3, 9.0, -1.2, 2.2, 7.0, 0.9, 3.0, -0.4, 1.0;
    const auto m = fit_outcome_gee(Dataset(x, a, y), OutcomeSpec{});
    MatrixXd xc(5, 4);
    VectorXd yc(5);
    Index k = 0;
    for (Index i = 0; i < 9; ++i) {
        if (a(i) != 0.0) continue;
        xc(k, 0) = 1.0;
        xc.row(k).tail(3) = x.row(i);
        yc(k++) = y(i);
    }
    CHECK(sup_norm(m.alpha() - oracle::normal_equations(xc, yc)) <= 1e-10);
}

TEST_CASE("outcome predictions") {
    VectorXd alpha(5);
    alpha << 1, 1, -1, 1, 1;
    const OutcomeModel m(OutcomeBasis::linear, 4, alpha);
    CHECK(m.predict(row({0, 0, 0, 0})) == 1.0);
    CHECK(predict_outcome(m, row({1, 1, 1, 1})) == 3.0);
    const Monomials terms{{0, 0}, {2, 0}, {1, 1}};
    const OutcomeModel p(OutcomeBasis::polynomial, 2, (VectorXd(3) << 1.0, 2.0, -1.0).finished(), terms);
    CHECK(p.predict(row({3, 2})) == doctest::Approx(1.0 + 18.0 - 6.0));
}

TEST_CASE("GEE residuals are orthogonal to the working gradient") {
    const Dataset data = fixtures::sim_data(2, 500, 31);
    const auto lin = fit_outcome_gee(data, OutcomeSpec{});
    CHECK(sup_norm(outcome_equation(lin, data)) <= 1e-8);

    const auto scn = preset(2, 500);
    OutcomeSpec s;
    s.basis = OutcomeBasis::sin_plus_halfquad;
    VectorXd init(1 + 2 * scn.d);
    init << 1.0, scn.alpha10, scn.alpha20;
    s.init = init;
    const auto nl = fit_outcome_gee(data, s);
    CHECK(sup_norm(outcome_equation(nl, data)) <= 1e-8);
    CHECK(sup_norm(nl.alpha() - init) <= 0.25);
}

TEST_CASE("outcome model rejects inconsistent parameters") {
    CHECK_THROWS_AS(OutcomeModel(OutcomeBasis::linear, 3, VectorXd::Zero(3)), std::invalid_argument);
    CHECK_THROWS_AS(OutcomeModel(OutcomeBasis::polynomial, 2, VectorXd::Zero(1), Monomials{{1}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_outcome_basis("spline"), std::invalid_argument);
    CHECK_THROWS_AS(parse_propensity_form("probit"), std::invalid_argument);
}
