#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <charconv>
#include <cmath>

#include "nonprob/rng.hpp"
#include "nonprob/stats.hpp"

using namespace nonprob;

TEST_CASE("normal quantile matches reference values") {
    CHECK(stats::normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(stats::normal_quantile(0.975) ==
          doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(stats::normal_quantile(0.9999) ==
          doctest::Approx(3.719016485455709).epsilon(1e-10));
    CHECK(stats::normal_quantile(0.025) ==
          doctest::Approx(-1.959963984540054).epsilon(1e-12));
    CHECK_THROWS_AS((void)stats::normal_quantile(0.0), Error);
}

TEST_CASE("chi-square(1) quantile") {
    CHECK(stats::chi2_quantile_1df(0.95) ==
          doctest::Approx(3.841458820694124).epsilon(1e-12));
    CHECK(stats::chi2_quantile_1df(0.99) ==
          doctest::Approx(6.6348966010212145).epsilon(1e-10));
}

TEST_CASE("percentile is nearest-rank") {
    std::vector<double> v{5, 1, 4, 2, 3};
    CHECK(stats::percentile(v, 0.0) == 1.0);
    CHECK(stats::percentile(v, 0.2) == 1.0);
    CHECK(stats::percentile(v, 0.21) == 2.0);
    CHECK(stats::percentile(v, 0.95) == 5.0);
    CHECK(stats::percentile(v, 1.0) == 5.0);
}

TEST_CASE("format_double round-trips") {
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const double x = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-8, 8));
        const std::string s = stats::format_double(x);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == x);
    }
}

TEST_CASE("moments helpers") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(stats::mean(v) == doctest::Approx(2.5));
    CHECK(stats::sample_variance(v) == doctest::Approx(5.0 / 3.0));
    CHECK(stats::population_variance(v) == doctest::Approx(1.25));
    std::vector<double> a{1, 2, 3}, b{2, 4, 6};
    CHECK(stats::correlation(a, b) == doctest::Approx(1.0));
}

TEST_CASE("seed derivation separates streams") {
    CHECK(derive_seed(1, 1, 0) != derive_seed(1, 2, 0));
    CHECK(derive_seed(1, 1, 0) != derive_seed(1, 1, 1));
    CHECK(derive_seed(1, 1, 7) == derive_seed(1, 1, 7));
    CHECK(derive_seed(2, 1, 7) != derive_seed(1, 1, 7));
}

TEST_CASE("rng determinism and ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.uniform_below(10) < 10);
    }
    // sample_without_replacement returns distinct elements
    std::vector<int> items{1, 2, 3, 4, 5, 6};
    auto taken = r.sample_without_replacement(items, 4);
    std::sort(taken.begin(), taken.end());
    CHECK(std::adjacent_find(taken.begin(), taken.end()) == taken.end());
}
