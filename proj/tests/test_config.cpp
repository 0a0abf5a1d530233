#include "itr/config.hpp"
#include "itr/tabular.hpp"

#include <doctest.h>

#include <sstream>
#include <string>

using namespace itr;
using nlohmann::json;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

CsvTable table(const std::string& text) {
    std::istringstream in(text);
    return read_csv(in);
}

}  // namespace

TEST_CASE("mode defaults") {
    const EstimatorConfig sim = default_estimator(RunMode::simulate);
    CHECK(sim.kernel.family == KernelFamily::epanechnikov);
    CHECK(sim.pilot_c == 7.25);
    const EstimatorConfig fit = default_estimator(RunMode::fit);
    CHECK(fit.kernel.family == KernelFamily::quartic);
    CHECK(fit.pilot_c == 0.05);
    CHECK(fit.propensity.form == PropensityForm::logistic_linear);
    CHECK(default_config(RunMode::qcurve).bootstrap_draws == 500);
    CHECK(parse_run_mode("qcurve") == RunMode::qcurve);
    CHECK(to_string(RunMode::fit) == "fit");
}

TEST_CASE("config round trip is the identity") {
    const std::string text = R"({
        "scenario": {"preset": 4, "n": 250},
        "case": "III",
        "reps": 17,
        "seed": 99,
        "threads": 2,
        "estimator": {
            "kernel": "quartic",
            "pilot_c": 6.5,
            "centre_c": 1.5,
            "cv_grid": {"lo": 0.3, "hi": 2.5, "count": 12},
            "solver": {"tol": 1e-7, "max_iter": 50, "init": [0.5, -0.5, 0.25]},
            "propensity": {"form": "logistic_linear", "intercept": false, "clip_floor": 0.01},
            "outcome": {"basis": "polynomial", "terms": [[0,0,0,0],[1,0,0,0],[0,2,0,0]]},
            "beta_inference": false,
            "restarts": 2
        },
        "bootstrap": {"draws": 80, "level": 0.9}
    })";
    for (RunMode mode : {RunMode::simulate, RunMode::fit, RunMode::qcurve}) {
        const RunConfig c = parse_config_text(text, mode);
        const json once = to_json(c);
        const RunConfig again = parse_config(once, mode);
        CHECK(to_json(again) == once);
    }
    const RunConfig c = parse_config_text(text, RunMode::simulate);
    REQUIRE(c.scenario);
    CHECK(c.scenario->n == 250);
    CHECK(c.study_case == Case::III);
    CHECK(c.reps == 17);
    CHECK(c.estimator.init == InitRule::given);
    CHECK(c.estimator.init_vector.size() == 3);
    CHECK(c.estimator.outcome.terms.size() == 3);
    CHECK(c.bootstrap_level == 0.9);
    CHECK(c.estimator.centre_c == 1.5);
}

TEST_CASE("defaults round trip in every mode") {
    for (RunMode mode : {RunMode::simulate, RunMode::fit, RunMode::qcurve}) {
        const RunConfig c = default_config(mode);
        CHECK(to_json(parse_config(to_json(c), mode)) == to_json(c));
    }
}

TEST_CASE("invalid configurations name the offending key") {
    CHECK(error_of([] { parse_config_text(R"({"sead": 1})", RunMode::simulate); }).find("sead") !=
          std::string::npos);
    CHECK(error_of([] { parse_config_text(R"({"estimator": {"pilot_c": -1}})", RunMode::fit); })
              .find("pilot_c") != std::string::npos);
    CHECK(error_of([] { parse_config_text(R"({"estimator": {"solver": {"tool": 1}}})", RunMode::fit); })
              .find("tool") != std::string::npos);
    CHECK(error_of([] { parse_config_text(R"({"reps": 0})", RunMode::simulate); }).find("reps") !=
          std::string::npos);
    CHECK(error_of([] { parse_config_text(R"({"scenario": {"preset": 1, "m": 3}})", RunMode::simulate); })
              .find("'m'") != std::string::npos);
    CHECK(error_of([] { parse_config_text("{\n\"seed\": 1,\n oops}", RunMode::simulate); })
              .find("line 3") != std::string::npos);
    CHECK_THROWS_AS(parse_config_text(R"({"bootstrap": {"draws": 10}})", RunMode::qcurve), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"estimator": {"kernel": "box"}})", RunMode::fit), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.json", RunMode::fit), ConfigError);
}

TEST_CASE("csv reading") {
    const CsvTable t = table("a,b,\"c,d\"\n1, 2 ,\"3\"\n\n4,5,6\n");
    REQUIRE(t.header.size() == 3);
    CHECK(t.header[2] == "c,d");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "2");
    CHECK(t.rows[0][2] == "3");
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(t.column("z"), std::invalid_argument);
    CHECK(error_of([] { table("a,b\n1,2,3\n"); }).find("line 2") != std::string::npos);
    CHECK_THROWS_AS(table(""), std::invalid_argument);
    CHECK(split_list(" x, y ,,z") == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("tabular ingestion") {
    const std::string text =
        "id,A,Y,x1,x2,flag\n"
        "1,1,2.5,10,0.5,1\n"
        "2,0,1.0,12,0.1,0\n"
        "3,1,3.0,14,0.9,0\n"
        "4,0,0.5,16,0.3,1\n";
    TabularSpec spec;
    spec.treatment = "A";
    spec.outcome = "Y";
    spec.covariates = {"x1", "x2", "flag"};
    spec.anchor = "x2";
    const TabularInput in = load_tabular(table(text), spec);
    CHECK(in.covariates == std::vector<std::string>{"x2", "x1", "flag"});
    CHECK(in.normalized == std::vector<bool>{true, true, false});
    CHECK(in.data.x().col(1).mean() == doctest::Approx(0.0).scale(1.0));
    CHECK(in.data.x().col(2) == (VectorXd(4) << 1, 0, 0, 1).finished());
    CHECK(in.center(1) == 13.0);

    spec.continuous = {"x1"};
    const TabularInput only = load_tabular(table(text), spec);
    CHECK(only.normalized == std::vector<bool>{false, true, false});
    CHECK(only.data.x()(0, 0) == 0.5);
}

TEST_CASE("tabular ingestion rejects bad cells with their position") {
    TabularSpec spec;
    spec.treatment = "A";
    spec.outcome = "Y";
    spec.covariates = {"x1", "x2"};
    const std::string missing = "A,Y,x1,x2\n1,2,3,4\n0,1,,2\n1,0,1,1\n";
    const std::string msg = error_of([&] { load_tabular(table(missing), spec); });
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'x1'") != std::string::npos);
    CHECK(msg.find("missing") != std::string::npos);
    CHECK(error_of([&] { load_tabular(table("A,Y,x1,x2\n1,2,3,4\n0,NA,1,2\n"), spec); }).find("'Y'") !=
          std::string::npos);
    CHECK(error_of([&] { load_tabular(table("A,Y,x1,x2\n1,2,3,4\n0,1,abc,2\n"), spec); }).find("non-numeric") !=
          std::string::npos);
    CHECK(error_of([&] { load_tabular(table("A,Y,x1,x2\n1,2,3,4\n2,1,1,2\n"), spec); }).find("0/1") !=
          std::string::npos);
    spec.anchor = "x9";
    CHECK_THROWS_AS(load_tabular(table("A,Y,x1,x2\n1,2,3,4\n0,1,1,2\n"), spec), std::invalid_argument);
    spec.anchor.clear();
    spec.covariates = {"x1", "x1"};
    CHECK_THROWS_AS(load_tabular(table("A,Y,x1,x2\n1,2,3,4\n0,1,1,2\n"), spec), std::invalid_argument);
}
