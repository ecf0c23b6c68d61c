#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rankfolio/rng.hpp"

using namespace rankfolio;

TEST_CASE("streams are deterministic and distinct per path") {
    auto a1 = path_rng(42, 7);
    auto a2 = path_rng(42, 7);
    auto b = path_rng(42, 8);
    bool all_equal_ab = true;
    for (int i = 0; i < 64; ++i) {
        const auto va = a1.next();
        CHECK(va == a2.next());
        if (va != b.next()) all_equal_ab = false;
    }
    CHECK(!all_equal_ab);
}

TEST_CASE("uniform_open01 stays inside the open interval") {
    auto g = Xoshiro256pp::seeded(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = uniform_open01(g);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("inverse normal cdf hits known quantiles") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-7));
    CHECK(inverse_normal_cdf(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-7));
    CHECK(inverse_normal_cdf(0.841344746068543) == doctest::Approx(1.0).epsilon(1e-7));
    // symmetry
    for (double p : {0.01, 0.1, 0.3, 0.45})
        CHECK(inverse_normal_cdf(p) == doctest::Approx(-inverse_normal_cdf(1.0 - p)).epsilon(1e-9));
}

TEST_CASE("normal draws have the right first moments") {
    auto g = Xoshiro256pp::seeded(123);
    const int n = 1000000;
    double s = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = standard_normal(g);
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    const double kurt = s4 / n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(var == doctest::Approx(1.0).epsilon(0.01));
    CHECK(kurt == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("distinct paths are uncorrelated at lag zero") {
    const int n = 20000;
    double acc = 0.0;
    auto a = path_rng(9, 1);
    auto b = path_rng(9, 2);
    for (int i = 0; i < n; ++i) acc += standard_normal(a) * standard_normal(b);
    CHECK(std::abs(acc / n) < 4.0 / std::sqrt(static_cast<double>(n)));
}
