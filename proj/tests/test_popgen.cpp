#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "nonprob/popgen.hpp"
#include "nonprob/stats.hpp"

using namespace nonprob;
using namespace nonprob::popgen;

namespace {

DgpSpec three_strata() {
    DgpSpec spec;
    spec.population_size = 9000;
    spec.strata = {{0.5, 0.0, 0.2, 0.0, 1.0},
                   {0.3, 1.0, 0.3, 0.0, 1.0},
                   {0.2, 2.0, 0.4, 0.0, 1.0}};
    return spec;
}

}  // namespace

TEST_CASE("zero amplitudes give exact stratum values") {
    auto spec = three_strata();
    const auto pop = generate_population(spec, 1);
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        const auto& st = spec.strata[static_cast<std::size_t>(pop.x[u])];
        CHECK(pop.p_true[u] == st.propensity);
        CHECK((*pop.mu)[u] == st.mean);
    }
}

TEST_CASE("mean-preserving amplitudes hold exactly per stratum") {
    auto spec = three_strata();
    spec.population_size = 9001;  // odd stratum counts exercised too
    spec.mean_heterogeneity = 0.7;
    spec.propensity_heterogeneity = 0.15;
    SUBCASE("independent assignment") {}
    SUBCASE("informative assignment") { spec.propensity_heterogeneity_informative = true; }
    const auto pop = generate_population(spec, 3);
    std::map<int, double> p_sum, mu_sum;
    std::map<int, Index> count;
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        p_sum[pop.x[u]] += pop.p_true[u];
        mu_sum[pop.x[u]] += (*pop.mu)[u];
        ++count[pop.x[u]];
    }
    for (const auto& [label, n] : count) {
        const auto& st = spec.strata[static_cast<std::size_t>(label)];
        CHECK(std::abs(p_sum[label] / static_cast<double>(n) - st.propensity) < 1e-12);
        CHECK(std::abs(mu_sum[label] / static_cast<double>(n) - st.mean) < 1e-12);
    }
}

TEST_CASE("informative propensity assignment correlates with outcomes") {
    auto spec = three_strata();
    spec.propensity_heterogeneity = 0.1;
    spec.propensity_heterogeneity_informative = true;
    const auto pop = generate_population(spec, 5);
    // within stratum 0, the +h half must hold the larger outcomes
    double y_up = 0.0, y_down = 0.0;
    Index n_up = 0, n_down = 0;
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (pop.x[u] != 0) continue;
        if (pop.p_true[u] > 0.2) {
            y_up += pop.y[u];
            ++n_up;
        } else if (pop.p_true[u] < 0.2) {
            y_down += pop.y[u];
            ++n_down;
        }
    }
    CHECK(n_up > 0);
    CHECK(n_down > 0);
    CHECK(y_up / static_cast<double>(n_up) > y_down / static_cast<double>(n_down));
}

TEST_CASE("undercoverage forces the exact count of zeros") {
    DgpSpec spec;
    spec.population_size = 1000;
    spec.strata = {{1.0, 0.0, 0.5, 0.0, 1.0}};
    spec.undercoverage_fraction = 0.2;
    const auto pop = generate_population(spec, 11);
    Index zeros = 0;
    for (double p : pop.p_true)
        if (p == 0.0) ++zeros;
    CHECK(zeros == 200);

    // largest-y mode removes the top of the outcome distribution
    double max_covered = -1e300, min_uncovered = 1e300;
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (pop.p_true[u] == 0.0)
            min_uncovered = std::min(min_uncovered, pop.y[u]);
        else
            max_covered = std::max(max_covered, pop.y[u]);
    }
    CHECK(min_uncovered >= max_covered);
}

TEST_CASE("uniform z independent of outcomes") {
    DgpSpec spec;
    spec.population_size = 100000;
    spec.strata = {{1.0, 0.5, 0.3, 0.0, 1.0}};
    spec.z_kind = ZKind::uniform;
    const auto pop = generate_population(spec, 17);
    REQUIRE(pop.z.has_value());
    const double corr = stats::correlation(pop.y, *pop.z);
    CHECK(std::abs(corr) < 3.0 / std::sqrt(100000.0));
}

TEST_CASE("normal z tracks the requested outcome correlation") {
    DgpSpec spec;
    spec.population_size = 100000;
    spec.strata = {{1.0, 0.0, 0.3, 0.0, 1.0}};
    spec.z_kind = ZKind::normal;
    spec.z_outcome_correlation = 0.6;
    const auto pop = generate_population(spec, 19);
    CHECK(stats::correlation(pop.y, *pop.z) == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("generation is deterministic bit for bit") {
    auto spec = three_strata();
    spec.mean_heterogeneity = 0.3;
    spec.z_kind = ZKind::uniform;
    const auto a = generate_population(spec, 123);
    const auto b = generate_population(spec, 123);
    CHECK(a.y == b.y);
    CHECK(a.p_true == b.p_true);
    CHECK(*a.z == *b.z);
    const auto c = generate_population(spec, 124);
    CHECK(a.y != c.y);
}

TEST_CASE("spec validation rejects bad configurations") {
    DgpSpec spec;
    spec.population_size = 100;
    spec.strata = {{0.6, 0.0, 0.5, 0.0, 1.0}, {0.5, 0.0, 0.5, 0.0, 1.0}};
    CHECK_THROWS_AS((void)generate_population(spec, 1), ConfigError);
    spec.strata = {{1.0, 0.0, 0.5, 0.0, 1.0}};
    spec.noise_scale = -1.0;
    CHECK_THROWS_AS((void)generate_population(spec, 1), ConfigError);
    spec.noise_scale = 1.0;
    spec.propensity_heterogeneity = 0.6;  // 0.5 + 0.6 > 1
    CHECK_THROWS_AS((void)generate_population(spec, 1), ConfigError);
}

TEST_CASE("b-draw includes everyone at certainty and never the impossible") {
    DgpSpec spec;
    spec.population_size = 50;
    spec.strata = {{1.0, 0.0, 1.0, 0.0, 1.0}};
    auto pop = generate_population(spec, 2);
    const auto b = draw_b_sample(pop, 7);
    CHECK(b.size() == 50);

    pop.p_true[0] = 0.0;
    pop.p_true[1] = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto bb = draw_b_sample(pop, static_cast<std::uint64_t>(rep));
        for (Index id : bb.members) CHECK(id >= 2);
    }

    std::fill(pop.p_true.begin(), pop.p_true.end(), 0.0);
    CHECK_THROWS_AS((void)draw_b_sample(pop, 1), Error);
}

TEST_CASE("b-draw sample fraction falls in the binomial band") {
    DgpSpec spec;
    spec.population_size = 10000;
    spec.strata = {{1.0, 0.0, 0.3, 0.0, 1.0}};
    const auto pop = generate_population(spec, 3);
    int inside = 0;
    const int reps = 400;
    for (int rep = 0; rep < reps; ++rep) {
        const auto b = draw_b_sample(pop, 1000 + static_cast<std::uint64_t>(rep));
        const double frac = static_cast<double>(b.size()) / 10000.0;
        if (std::abs(frac - 0.3) <= 0.015) ++inside;
    }
    CHECK(static_cast<double>(inside) / reps >= 0.99);
}

TEST_CASE("empty draws are redrawn with a seed advance") {
    DgpSpec spec;
    spec.population_size = 3;
    spec.strata = {{1.0, 0.0, 0.05, 0.0, 1.0}};
    const auto pop = generate_population(spec, 4);
    int total_redraws = 0;
    for (int rep = 0; rep < 500; ++rep) {
        int redraws = 0;
        const auto b = draw_b_sample(pop, static_cast<std::uint64_t>(rep), &redraws);
        CHECK(b.size() >= 1);
        total_redraws += redraws;
    }
    CHECK(total_redraws > 0);
}

TEST_CASE("srs covers the frame exhaustively at full size") {
    DgpSpec spec;
    spec.population_size = 30;
    spec.strata = {{1.0, 0.0, 0.5, 0.0, 1.0}};
    const auto pop = generate_population(spec, 5);
    const auto s = draw_s_sample(pop, SrsSpec{30}, Frame::full, nullptr, 9);
    CHECK(s.size() == 30);
    for (double pi : s.pi) CHECK(pi == 1.0);
}

TEST_CASE("stratified fractions give the designed sizes and probabilities") {
    DgpSpec spec;
    spec.population_size = 1100;
    spec.strata = {{100.0 / 1100.0, 0.0, 0.5, 0.0, 1.0},
                   {1000.0 / 1100.0, 1.0, 0.5, 0.0, 1.0}};
    const auto pop = generate_population(spec, 6);
    const auto sizes = pop.stratum_sizes();
    REQUIRE(sizes.at(0) == 100);
    REQUIRE(sizes.at(1) == 1000);
    const auto s = draw_s_sample(pop, StratifiedSrsSpec{{{0, 0.5}, {1, 0.1}}},
                                 Frame::full, nullptr, 10);
    Index n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < s.members.size(); ++i) {
        if ((*s.x)[i] == 0) {
            ++n0;
            CHECK(s.pi[i] == 0.5);
        } else {
            ++n1;
            CHECK(s.pi[i] == 0.1);
        }
    }
    CHECK(n0 == 50);
    CHECK(n1 == 100);

    CHECK_THROWS_AS((void)draw_s_sample(pop, StratifiedSrsSpec{{{0, 0.5}}},
                                        Frame::full, nullptr, 10),
                    ConfigError);
}

TEST_CASE("srs per-unit inclusion frequencies match the design rate") {
    DgpSpec spec;
    spec.population_size = 50;
    spec.strata = {{1.0, 0.0, 0.5, 0.0, 1.0}};
    const auto pop = generate_population(spec, 7);
    std::vector<int> hits(50, 0);
    const int reps = 10000;
    for (int rep = 0; rep < reps; ++rep) {
        const auto s = draw_s_sample(pop, SrsSpec{10}, Frame::full, nullptr,
                                     static_cast<std::uint64_t>(rep));
        for (Index id : s.members) ++hits[static_cast<std::size_t>(id)];
    }
    const double p = 10.0 / 50.0;
    const double band = 3.0 * std::sqrt(p * (1.0 - p) / reps);
    for (int h : hits)
        CHECK(std::abs(static_cast<double>(h) / reps - p) <= band);
}

TEST_CASE("frame exclusion never returns a B member") {
    DgpSpec spec;
    spec.population_size = 200;
    spec.strata = {{1.0, 0.0, 0.4, 0.0, 1.0}};
    const auto pop = generate_population(spec, 8);
    for (int rep = 0; rep < 200; ++rep) {
        const auto b = draw_b_sample(pop, static_cast<std::uint64_t>(rep));
        const auto s = draw_s_sample(pop, SrsSpec{50}, Frame::excluding_b, &b,
                                     static_cast<std::uint64_t>(rep) + 9000);
        std::set<Index> b_set(b.members.begin(), b.members.end());
        for (Index id : s.members) CHECK(!b_set.count(id));
    }
}

TEST_CASE("design size larger than the frame is rejected") {
    DgpSpec spec;
    spec.population_size = 20;
    spec.strata = {{1.0, 0.0, 0.5, 0.0, 1.0}};
    const auto pop = generate_population(spec, 9);
    CHECK_THROWS_AS((void)draw_s_sample(pop, SrsSpec{21}, Frame::full, nullptr, 1),
                    ConfigError);
}

TEST_CASE("uniform-random undercoverage spreads across the outcome range") {
    DgpSpec spec;
    spec.population_size = 2000;
    spec.strata = {{1.0, 0.0, 0.5, 0.0, 1.0}};
    spec.undercoverage_fraction = 0.25;
    spec.undercoverage_mode = UndercoverageMode::uniform_random;
    const auto pop = generate_population(spec, 13);
    Index zeros = 0;
    double y_zero_sum = 0.0;
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (pop.p_true[u] == 0.0) {
            ++zeros;
            y_zero_sum += pop.y[u];
        }
    }
    CHECK(zeros == 500);
    // uncovered mean close to the overall mean rather than the top tail
    CHECK(std::abs(y_zero_sum / 500.0) < 0.2);
}

TEST_CASE("apportioned stratum sizes match the generated population") {
    DgpSpec spec;
    spec.population_size = 1003;
    spec.strata = {{0.35, 0.0, 0.4, 0.0, 1.0},
                   {0.33, 0.0, 0.4, 0.0, 1.0},
                   {0.32, 0.0, 0.4, 0.0, 1.0}};
    const auto sizes = stratum_sizes_for(spec);
    Index total = 0;
    for (const auto& [label, n] : sizes) total += n;
    CHECK(total == 1003);
    const auto pop = generate_population(spec, 14);
    CHECK(pop.stratum_sizes() == sizes);
}
