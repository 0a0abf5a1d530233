#include "itr/sim_lab.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace itr;

TEST_CASE("noiseless designs reproduce the structural model") {
    for (int sim = 1; sim <= 6; ++sim) {
        auto scn = preset(sim, 100);
        scn.noise_scale = 0.0;
        const Generated g = generate(scn, 3);
        for (Index i = 0; i < g.data.n(); ++i) {
            const auto x = g.data.x().row(i);
            const double t = x.dot(scn.beta0.transpose());
            const double expected = mu0(scn, x) + g.data.a()(i) * q0(scn, t);
            CHECK(g.data.y()(i) == expected);
            CHECK(g.y0(i) == mu0(scn, x));
            CHECK(g.y1(i) == mu0(scn, x) + q0(scn, t));
        }
    }
}

TEST_CASE("constant propensity design treats half the sample") {
    const Generated g = generate(preset(1, 100000), 8);
    CHECK(std::abs(g.data.a().mean() - 0.5) <= 0.005);
}

TEST_CASE("generation is reproducible from the seed") {
    const auto scn = preset(4, 300);
    const Generated a = generate(scn, 42), b = generate(scn, 42), c = generate(scn, 43);
    CHECK(a.data.x() == b.data.x());
    CHECK(a.data.a() == b.data.a());
    CHECK(a.data.y() == b.data.y());
    CHECK(a.data.y() != c.data.y());
}

TEST_CASE("true roots and contrast shapes") {
    const auto r1 = true_roots(preset(1));
    REQUIRE(r1.size() == 1);
    CHECK(r1[0] == 0.0);
    const auto r3 = true_roots(preset(3));
    REQUIRE(r3.size() == 2);
    CHECK(r3[0] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r3[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(q0(preset(3), 2.0) == 2.0);
    CHECK(q0(preset(1), 1.5) == 3.0);
    CHECK(q0(preset(2), 1.0) == doctest::Approx(1.0 + std::sin(1.0)).epsilon(1e-15));
}

TEST_CASE("Sim 1 value by Monte Carlo") {
    const McValue v = true_value_mc(preset(1), 1000000, 1);
    CHECK(std::abs(v.value - 2.5958) <= 0.01);
    CHECK(v.se > 0.0);
    CHECK(std::abs(true_value_quadrature(preset(1)) - 2.5958) <= 1e-4);
    CHECK(std::abs(true_value_quadrature(preset(3)) - 4.7166) <= 1e-4);
}

TEST_CASE("working models by case") {
    const auto s1 = preset(1), s4 = preset(4), s2 = preset(2);
    const EstimatorConfig base;
    CHECK(working_models(s1, Case::I, base).propensity.form == PropensityForm::constant);
    CHECK(working_models(s1, Case::I, base).outcome.basis == OutcomeBasis::linear);
    CHECK(working_models(s1, Case::II, base).outcome.basis == OutcomeBasis::constant);
    const auto c3 = working_models(s1, Case::III, base);
    CHECK(c3.propensity.form == PropensityForm::fixed);
    CHECK(c3.propensity.fixed_value == 0.4);
    CHECK(working_models(s4, Case::I, base).propensity.form == PropensityForm::logistic_linear);
    CHECK(working_models(s4, Case::III, base).propensity.form == PropensityForm::constant);
    CHECK(working_models(s2, Case::I, base).outcome.basis == OutcomeBasis::sin_plus_halfquad);
    CHECK(working_models(s2, Case::II, base).outcome.basis == OutcomeBasis::linear);
    CHECK(parse_case("III") == Case::III);
    CHECK(to_string(Case::IV) == "IV");
    CHECK_THROWS_AS(parse_case("V"), std::invalid_argument);
    CHECK_THROWS_AS(preset(7), std::invalid_argument);
}

TEST_CASE("single replicate study") {
    EstimatorConfig base;
    base.beta_inference = false;
    const StudyReport rep = run_study(preset(1, 300), Case::I, 1, 5, base);
    REQUIRE(rep.replicates.size() == 1);
    const ReplicateResult& r = rep.replicates[0];
    REQUIRE(r.ok);
    CHECK(rep.metrics.size() == 5);
    CHECK(rep.metrics[0].name == "beta2");
    CHECK(rep.metrics[0].mean == r.beta(0));
    CHECK(std::isnan(rep.metrics[0].sd));
    CHECK(rep.metrics[3].name == "V");
    CHECK(rep.metrics[3].mean == r.value);
    CHECK(std::isnan(rep.metrics[3].sd));
}

TEST_CASE("summaries follow their definitions") {
    EstimatorConfig base;
    base.beta_inference = false;
    const StudyReport rep = run_study(preset(1, 300), Case::I, 6, 2, base);
    std::vector<double> v;
    for (const auto& r : rep.replicates) {
        if (r.ok) v.push_back(r.value);
    }
    REQUIRE(v.size() >= 2);
    const MetricSummary& m = rep.metrics[3];
    double mean = 0.0, mse = 0.0, ss = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    for (double e : v) {
        mse += (e - rep.true_value) * (e - rep.true_value);
        ss += (e - mean) * (e - mean);
    }
    mse /= static_cast<double>(v.size());
    CHECK(m.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(m.mse == doctest::Approx(mse).epsilon(1e-14));
    CHECK(m.sd == doctest::Approx(std::sqrt(ss / static_cast<double>(v.size() - 1))).epsilon(1e-14));
    const double k = static_cast<double>(v.size());
    CHECK(m.mse == doctest::Approx(m.bias * m.bias + m.sd * m.sd * (k - 1.0) / k).epsilon(1e-12));
}

TEST_CASE("scenario JSON round trip") {
    for (int sim = 1; sim <= 6; ++sim) {
        const Scenario s = preset(sim, 321);
        const Scenario back = scenario_from_json(to_json(s));
        CHECK(to_json(back) == to_json(s));
        CHECK(back.n == 321);
        CHECK(back.beta0 == s.beta0);
    }
}

TEST_CASE("report CSV layout") {
    EstimatorConfig base;
    base.beta_inference = false;
    const StudyReport rep = run_study(preset(1, 300), Case::I, 2, 3, base);
    const std::string csv = to_csv(rep);
    CHECK(csv.rfind("parameter,true,estimate,sd,sd_hat,cvg,mse\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
