#include "itr/kernel.hpp"
#include "itr/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

using namespace itr;

namespace {

double phi(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

TEST_CASE("kernel values") {
    const KernelSpec epa{KernelFamily::epanechnikov};
    const KernelSpec quart{KernelFamily::quartic};
    CHECK(epa(0.0) == 0.75);
    CHECK(epa(1.5) == 0.0);
    CHECK(quart(0.5) == doctest::Approx(0.52734375).epsilon(1e-15));
    CHECK(kernel_eval(epa, -1.0) == 0.0);
    CHECK(kernel_eval(KernelSpec{KernelFamily::gaussian}, 1.0) == doctest::Approx(phi(1.0)).epsilon(1e-15));
}

TEST_CASE("kernel family names") {
    CHECK(parse_kernel_family("quartic") == KernelFamily::quartic);
    CHECK(to_string(KernelFamily::gaussian) == "gaussian");
    CHECK_THROWS_AS(parse_kernel_family("triweight"), std::invalid_argument);
}

TEST_CASE("bandwidth must be positive and finite") {
    CHECK_THROWS_AS(Bandwidth(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Bandwidth(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(Bandwidth(NAN), std::invalid_argument);
    CHECK(Bandwidth(0.3).value() == 0.3);
}

TEST_CASE("scaled_weights examples") {
    const KernelSpec epa{KernelFamily::epanechnikov};
    {
        const std::vector<double> c{0.0};
        const auto w = scaled_weights(epa, Bandwidth(1.0), c, 0.0);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == 0.75);
    }
    {
        const std::vector<double> c{0.0, 3.0};
        const auto w = scaled_weights(epa, Bandwidth(2.0), c, 0.0);
        CHECK(w[0] == 0.375);
        CHECK(w[1] == 0.0);
    }
    {
        const std::vector<double> c{0.0, 1.0, 2.0};
        const auto w = scaled_weights(KernelSpec{KernelFamily::gaussian}, Bandwidth(1.0), c, 1.0);
        CHECK(w[0] == doctest::Approx(phi(1.0)).epsilon(1e-14));
        CHECK(w[1] == doctest::Approx(phi(0.0)).epsilon(1e-14));
        CHECK(w[2] == doctest::Approx(phi(1.0)).epsilon(1e-14));
    }
}

TEST_CASE("kde examples") {
    const KernelSpec epa{KernelFamily::epanechnikov};
    const std::vector<double> one{0.0};
    const std::vector<double> two{0.0, 10.0};
    CHECK(kde(epa, Bandwidth(1.0), one, 0.0) == 0.75);
    CHECK(kde(epa, Bandwidth(1.0), two, 0.0) == 0.375);

    auto rng = make_stream(11, 0);
    std::vector<double> u(1000);
    for (double& v : u) v = uniform01(rng);
    CHECK(std::abs(kde(epa, Bandwidth(0.5), u, 0.5) - 1.0) <= 0.1);
}

TEST_CASE("kde is permutation invariant") {
    auto rng = make_stream(12, 0);
    std::vector<double> s(200);
    for (double& v : s) v = 4.0 * uniform01(rng) - 2.0;
    for (auto fam : {KernelFamily::epanechnikov, KernelFamily::quartic, KernelFamily::gaussian}) {
        const KernelSpec k{fam};
        const double a = kde(k, Bandwidth(0.4), s, 0.1);
        std::vector<double> r(s.rbegin(), s.rend());
        std::rotate(r.begin(), r.begin() + 37, r.end());
        CHECK(kde(k, Bandwidth(0.4), r, 0.1) == doctest::Approx(a).epsilon(1e-13));
    }
}

TEST_CASE("scaled weights recover a density") {
    // Mean of K_h(c_j - x) over a large uniform sample approaches the density 1/4.
    auto rng = make_stream(13, 0);
    std::vector<double> c(10000);
    for (double& v : c) v = 4.0 * uniform01(rng) - 2.0;
    for (auto fam : {KernelFamily::epanechnikov, KernelFamily::quartic, KernelFamily::gaussian}) {
        const auto w = scaled_weights(KernelSpec{fam}, Bandwidth(0.3), c, 0.2);
        double s = 0.0;
        for (double v : w) s += v;
        CHECK(std::abs(s / c.size() - 0.25) <= 0.025);
    }
}

TEST_CASE("kernel constants match closed forms") {
    CHECK(KernelSpec{KernelFamily::epanechnikov}.second_moment() == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(KernelSpec{KernelFamily::epanechnikov}.roughness() == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(KernelSpec{KernelFamily::quartic}.second_moment() == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
    CHECK(KernelSpec{KernelFamily::quartic}.roughness() == doctest::Approx(5.0 / 7.0).epsilon(1e-14));
    CHECK(KernelSpec{KernelFamily::gaussian}.second_moment() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(KernelSpec{KernelFamily::gaussian}.roughness() ==
          doctest::Approx(1.0 / (2.0 * std::sqrt(std::numbers::pi))).epsilon(1e-14));
}

TEST_CASE("simpson integrates cubics exactly") {
    const double v = simpson([](double x) { return x * x * x - 2.0 * x + 1.0; }, -1.0, 2.0, 3);
    CHECK(v == doctest::Approx(3.75 - 3.0 + 3.0).epsilon(1e-13));
}
