#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "nonprob/diagnostics.hpp"
#include "nonprob/matching.hpp"
#include "nonprob/popgen.hpp"
#include "nonprob/rng.hpp"
#include "oracles.hpp"

using namespace nonprob;
using namespace nonprob::estimators;

namespace {

NonProbSample donors(std::vector<double> z, std::vector<double> y,
                     std::vector<int> x = {}) {
    NonProbSample b;
    for (std::size_t i = 0; i < z.size(); ++i) b.members.push_back(static_cast<Index>(i));
    b.y = std::move(y);
    b.x = x.empty() ? std::vector<int>(z.size(), 0) : std::move(x);
    b.z = std::move(z);
    return b;
}

ProbSample queries(std::vector<double> z, std::vector<int> x = {}) {
    ProbSample s;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s.members.push_back(1000 + static_cast<Index>(i));
        s.pi.push_back(0.5);
        s.d.push_back(2.0);
    }
    s.x = x.empty() ? std::vector<int>(z.size(), 0) : std::move(x);
    s.z = std::move(z);
    s.design = SrsDesign{static_cast<Index>(2 * s.members.size()),
                         static_cast<Index>(s.members.size())};
    return s;
}

}  // namespace

TEST_CASE("nearest neighbour arithmetic on a line") {
    const auto b = donors({0.2, 0.6}, {10.0, 20.0});
    const auto s = queries({0.5});
    MatchMetric metric;
    metric.z_scale = 1.0;
    const auto match = nn_match(s, b, metric);
    CHECK(match.donor[0] == 1);
    CHECK(match.distance[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(match.imputed_y[0] == 20.0);
}

TEST_CASE("every query value present among donors gives exact matches") {
    const auto b = donors({0.1, 0.4, 0.9}, {1.0, 2.0, 3.0});
    const auto s = queries({0.9, 0.1, 0.4});
    const auto match = nn_match(s, b);
    for (double d : match.distance) CHECK(d == 0.0);
    const auto q = diagnostics::match_quality(match);
    CHECK(q.fraction_exact == 1.0);
    CHECK(q.max_distance == 0.0);
}

TEST_CASE("distance ties resolve to the smallest donor index") {
    // donors at 0.4 and 0.6 are equidistant from 0.5
    const auto b = donors({0.6, 0.4}, {1.0, 2.0});
    const auto s = queries({0.5});
    MatchMetric metric;
    metric.z_scale = 1.0;
    const auto match = nn_match(s, b, metric);
    CHECK(match.donor[0] == 0);  // smaller donor position wins

    // duplicate donor values: the smallest index among the run wins
    const auto b2 = donors({0.4, 0.4, 0.4}, {1.0, 2.0, 3.0});
    const auto match2 = nn_match(s, b2, metric);
    CHECK(match2.donor[0] == 0);
}

TEST_CASE("accelerated search agrees with the all-pairs oracle") {
    Rng rng(555);
    for (int instance = 0; instance < 200; ++instance) {
        const std::size_t n_b = 1 + static_cast<std::size_t>(rng.uniform_below(40));
        const std::size_t n_s = 1 + static_cast<std::size_t>(rng.uniform_below(40));
        const bool with_cells = instance % 3 == 0;
        std::vector<double> bz, sz, by;
        std::vector<int> bx, sx;
        for (std::size_t i = 0; i < n_b; ++i) {
            // coarse grid so exact ties happen often
            bz.push_back(std::floor(rng.uniform(0.0, 10.0)) / 5.0);
            by.push_back(rng.uniform(-1.0, 1.0));
            bx.push_back(with_cells ? static_cast<int>(rng.uniform_below(3)) : 0);
        }
        for (std::size_t i = 0; i < n_s; ++i) {
            sz.push_back(std::floor(rng.uniform(0.0, 10.0)) / 5.0);
            sx.push_back(with_cells ? static_cast<int>(rng.uniform_below(3)) : 0);
        }
        auto b = donors(bz, by, bx);
        auto s = queries(sz, sx);
        MatchMetric metric;
        metric.z_scale = 1.0;
        metric.exact_on_x = with_cells;

        const auto brute = oracles::brute_force_match(&sz, with_cells ? &sx : nullptr,
                                                      &bz, with_cells ? &bx : nullptr,
                                                      n_s, n_b, 1.0);
        bool any_unmatched = false;
        for (std::size_t i = 0; i < n_s; ++i)
            if (brute.donor[i] == SIZE_MAX) any_unmatched = true;

        if (any_unmatched) {
            CHECK_THROWS_AS((void)nn_match(s, b, metric), Error);
            const auto dist = nn_min_distances(s, b, metric);
            for (std::size_t i = 0; i < n_s; ++i)
                if (brute.donor[i] == SIZE_MAX) CHECK(std::isinf(dist[i]));
        } else {
            const auto match = nn_match(s, b, metric);
            for (std::size_t i = 0; i < n_s; ++i) {
                CHECK(match.donor[i] == brute.donor[i]);
                CHECK(match.distance[i] == doctest::Approx(brute.distance[i]));
            }
        }
    }
}

TEST_CASE("empty donor pool raises") {
    NonProbSample empty;
    const auto s = queries({0.5});
    CHECK_THROWS_AS((void)nn_match(s, empty), Error);
}

TEST_CASE("design-weighted aggregation of imputed values") {
    const auto b = donors({0.0, 1.0}, {5.0, 9.0});
    auto s = queries({0.0, 1.0});
    const auto match = nn_match(s, b);
    const auto est = sm_estimate(s, match);
    CHECK(est.value == doctest::Approx(2.0 * 5.0 + 2.0 * 9.0));
    CHECK(est.diagnostics.at("max_match_distance") == "0");
}

TEST_CASE("census with exact matching and cell-constant outcomes is exact") {
    // donor per cell holds the cell's constant outcome; S = U with d = 1
    NonProbSample b = donors({0.0, 1.0, 2.0}, {3.0, 5.0, 7.0}, {0, 1, 2});
    ProbSample s;
    std::vector<double> pop_y;
    for (Index i = 0; i < 9; ++i) {
        s.members.push_back(i);
        s.pi.push_back(1.0);
        s.d.push_back(1.0);
        pop_y.push_back(3.0 + 2.0 * static_cast<double>(i % 3));
    }
    s.x = std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2};
    s.z = std::vector<double>{0, 1, 2, 0, 1, 2, 0, 1, 2};
    s.design = SrsDesign{9, 9};
    MatchMetric metric;
    metric.exact_on_x = true;
    const auto est = sm_estimate(s, nn_match(s, b, metric));
    double y_total = 0.0;
    for (double y : pop_y) y_total += y;
    CHECK(est.value == doctest::Approx(y_total));
}

TEST_CASE("mean matching distance shrinks like the donor density") {
    Rng rng(808);
    const auto draw_uniform = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform();
        return v;
    };
    const auto s = queries(draw_uniform(2000));
    MatchMetric metric;
    metric.z_scale = 1.0;
    double mean_small = 0.0, mean_large = 0.0;
    {
        auto bz = draw_uniform(1000);
        std::vector<double> by(bz.size(), 0.0);
        const auto match = nn_match(s, donors(bz, by), metric);
        mean_small = diagnostics::match_quality(match).mean_distance;
    }
    {
        auto bz = draw_uniform(100000);
        std::vector<double> by(bz.size(), 0.0);
        const auto match = nn_match(s, donors(bz, by), metric);
        mean_large = diagnostics::match_quality(match).mean_distance;
    }
    const double ratio = mean_small / mean_large;
    CHECK(ratio > 30.0);
    CHECK(ratio < 300.0);
}

TEST_CASE("two-phase with a generous radius reduces to plain matching") {
    popgen::DgpSpec spec;
    spec.population_size = 2000;
    spec.strata = {{1.0, 0.0, 0.4, 0.0, 1.0}};
    spec.z_kind = popgen::ZKind::uniform;
    spec.z_mean_slope = 1.0;
    const auto pop = popgen::generate_population(spec, 41);
    const auto b = popgen::draw_b_sample(pop, 42);
    const auto s = popgen::draw_s_sample(pop, popgen::SrsSpec{300},
                                         popgen::Frame::full, nullptr, 43);
    const auto two_phase = two_phase_sm(s, b, 1e9, STmap::intercept_z);
    const auto plain = sm_estimate(s, nn_match(s, b));
    CHECK(two_phase.value == doctest::Approx(plain.value).epsilon(1e-10));
    CHECK(two_phase.diagnostics.at("s0_size") == "0");
    CHECK(std::stod(two_phase.diagnostics.at("max_w2_deviation")) <= 1e-10);
}

TEST_CASE("unsupported queries go to the excluded part") {
    const auto b = donors({0.0, 0.01, 0.02, 0.03}, {1.0, 1.0, 1.0, 1.0});
    // two queries near the donors, one far away
    auto s = queries({0.005, 0.015, 5.0});
    const auto est = two_phase_sm(s, b, std::nullopt, STmap::intercept_only);
    CHECK(est.diagnostics.at("s0_size") == "1");

    // a radius nobody satisfies
    auto far = queries({100.0, 200.0});
    CHECK_THROWS_AS((void)two_phase_sm(far, b, 1e-6, STmap::intercept_only), Error);
}

TEST_CASE("second-phase weights restore the full design totals") {
    popgen::DgpSpec spec;
    spec.population_size = 5000;
    spec.strata = {{0.8, 0.0, 0.3, 0.0, 1.0}, {0.2, 3.0, 0.0, 1.0, 1.25}};
    spec.z_kind = popgen::ZKind::uniform;
    const auto pop = popgen::generate_population(spec, 44);
    const auto b = popgen::draw_b_sample(pop, 45);
    const auto s = popgen::draw_s_sample(pop, popgen::SrsSpec{500},
                                         popgen::Frame::full, nullptr, 46);
    const auto est = two_phase_sm(s, b, 0.05, STmap::intercept_z);
    CHECK(std::stod(est.diagnostics.at("s0_fraction")) > 0.1);
    CHECK(std::stod(est.diagnostics.at("max_w2_deviation")) > 0.0);
}
