#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "nonprob/calibration.hpp"
#include "nonprob/estimators.hpp"
#include "nonprob/popgen.hpp"
#include "nonprob/rng.hpp"
#include "oracles.hpp"

using namespace nonprob;
using namespace nonprob::estimators;

namespace {

struct Instance {
    Population pop;
    NonProbSample b;
    std::map<int, Index> sizes;
};

Instance random_instance(std::uint64_t seed, int n_strata = 3, Index n = 900) {
    popgen::DgpSpec spec;
    spec.population_size = n;
    Rng rng(seed);
    double left = 1.0;
    for (int h = 0; h < n_strata; ++h) {
        const double prop = h + 1 == n_strata ? left : left * rng.uniform(0.2, 0.5);
        left -= h + 1 == n_strata ? 0.0 : prop;
        spec.strata.push_back({prop, rng.uniform(-2.0, 2.0), rng.uniform(0.2, 0.8),
                               0.0, 1.0});
    }
    Instance inst;
    inst.pop = popgen::generate_population(spec, seed + 1);
    inst.b = popgen::draw_b_sample(inst.pop, seed + 2);
    inst.sizes = inst.pop.stratum_sizes();
    return inst;
}

}  // namespace

TEST_CASE("dummy calibration reproduces post-stratification weights") {
    const auto inst = random_instance(10);
    CalibrationSpec spec;
    spec.t_map = dummy_tmap(inst.b.x);
    spec.totals = totals_from_stratum_sizes(spec.t_map, inst.sizes);
    spec.population_size = inst.pop.size();
    const auto fit = calibrate(inst.b, spec);

    const auto counts = inst.b.cell_counts();
    for (std::size_t i = 0; i < fit.weights.size(); ++i) {
        const int label = inst.b.x[i];
        const double expected = static_cast<double>(inst.sizes.at(label)) /
                                static_cast<double>(counts.at(label));
        CHECK(fit.weights[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    const auto est = calibration_estimate(fit, inst.b);
    const auto ps = post_stratified(inst.b, inst.sizes);
    CHECK(est.value == doctest::Approx(ps.value).epsilon(1e-12));
}

TEST_CASE("intercept-only calibration equals expansion") {
    const auto inst = random_instance(11);
    CalibrationSpec spec;
    spec.t_map = intercept_tmap(inst.b.x);
    spec.totals = {static_cast<double>(inst.pop.size())};
    spec.population_size = inst.pop.size();
    const auto fit = calibrate(inst.b, spec);
    const double uniform = static_cast<double>(inst.pop.size()) /
                           static_cast<double>(inst.b.size());
    for (double w : fit.weights) CHECK(w == doctest::Approx(uniform).epsilon(1e-14));
    const auto est = calibration_estimate(fit, inst.b);
    const auto exp = expansion(inst.b, inst.pop.size());
    CHECK(est.value == doctest::Approx(exp.value).epsilon(1e-12));
}

TEST_CASE("weights agree with the dense QP oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = random_instance(100 + seed);
        CalibrationSpec spec;
        spec.t_map = dummy_tmap(inst.b.x);
        // make it a genuine 2-column problem too: dummies or (1, score)
        if (seed % 2 == 1) {
            spec.t_map.clear();
            for (const auto& [label, n] : inst.sizes)
                spec.t_map[label] = {1.0, static_cast<double>(label * label + 1)};
        }
        spec.totals = totals_from_stratum_sizes(spec.t_map, inst.sizes);
        spec.population_size = inst.pop.size();
        const auto fit = calibrate(inst.b, spec);

        std::vector<std::vector<double>> t_per_member;
        for (int label : inst.b.x) t_per_member.push_back(spec.t_map.at(label));
        const double a0 = static_cast<double>(inst.pop.size()) /
                          static_cast<double>(inst.b.size());
        const std::vector<double> initial(t_per_member.size(), a0);
        const auto oracle =
            oracles::qp_calibration_weights(t_per_member, initial, spec.totals);

        double max_rel = 0.0;
        for (std::size_t i = 0; i < oracle.size(); ++i)
            max_rel = std::max(max_rel, std::abs(fit.weights[i] - oracle[i]) /
                                            std::max(1.0, std::abs(oracle[i])));
        CHECK(max_rel <= 1e-8);
    }
}

TEST_CASE("constraints hold and weights are cell-constant") {
    const auto inst = random_instance(12);
    CalibrationSpec spec;
    spec.t_map = dummy_tmap(inst.b.x);
    spec.totals = totals_from_stratum_sizes(spec.t_map, inst.sizes);
    spec.population_size = inst.pop.size();
    const auto fit = calibrate(inst.b, spec);
    CHECK(fit.constraint_residual <= 1e-8);

    std::map<int, double> w_min, w_max;
    for (std::size_t i = 0; i < fit.weights.size(); ++i) {
        const int cell = fit.cell_of[i];
        const auto [it_min, fresh] = w_min.emplace(cell, fit.weights[i]);
        if (!fresh) it_min->second = std::min(it_min->second, fit.weights[i]);
        const auto [it_max, fresh2] = w_max.emplace(cell, fit.weights[i]);
        if (!fresh2) it_max->second = std::max(it_max->second, fit.weights[i]);
    }
    for (const auto& [cell, lo] : w_min)
        CHECK(w_max.at(cell) - lo <= 1e-10 * std::max(1.0, std::abs(lo)));
}

TEST_CASE("collinear t components raise a rank error naming them") {
    const auto inst = random_instance(13, 2);
    CalibrationSpec spec;
    for (const auto& [label, n] : inst.sizes)
        spec.t_map[label] = {1.0, 2.0};  // second column is twice the first
    spec.totals = {static_cast<double>(inst.pop.size()),
                   2.0 * static_cast<double>(inst.pop.size())};
    spec.population_size = inst.pop.size();
    try {
        (void)calibrate(inst.b, spec);
        FAIL("expected rank-deficiency");
    } catch (const Error& e) {
        CHECK(e.code() == "rank-deficiency");
        CHECK(std::string(e.what()).find("0") != std::string::npos);
    }
}

TEST_CASE("zero sample-total component is rejected") {
    NonProbSample b;
    b.members = {0, 1};
    b.y = {1.0, 2.0};
    b.x = {0, 0};
    CalibrationSpec spec;
    spec.t_map[0] = {1.0, 0.0};
    spec.t_map[1] = {0.0, 1.0};  // label 1 absent from B
    spec.totals = {10.0, 5.0};
    spec.population_size = 15;
    try {
        (void)calibrate(b, spec);
        FAIL("expected zero-sample-total");
    } catch (const Error& e) {
        CHECK(e.code() == "zero-sample-total");
    }
}

TEST_CASE("census with unit weights recovers the exact total") {
    const auto inst = random_instance(14);
    NonProbSample census;
    for (Index i = 0; i < inst.pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        census.members.push_back(i);
        census.y.push_back(inst.pop.y[u]);
        census.x.push_back(inst.pop.x[u]);
    }
    CalibrationSpec spec;
    spec.t_map = dummy_tmap(census.x);
    spec.totals = totals_from_stratum_sizes(spec.t_map, inst.sizes);
    spec.population_size = inst.pop.size();
    const auto fit = calibrate(census, spec);
    double y_total = 0.0;
    for (double y : inst.pop.y) y_total += y;
    CHECK(calibration_estimate(fit, census).value ==
          doctest::Approx(y_total).epsilon(1e-12));
    for (double w : fit.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimated totals from S feed the unknown-margins branch") {
    const auto inst = random_instance(15);
    const auto s = popgen::draw_s_sample(inst.pop, popgen::SrsSpec{300},
                                         popgen::Frame::full, nullptr, 77);
    const auto t_map = dummy_tmap(inst.b.x);
    const auto est_totals = totals_from_s(t_map, s);
    REQUIRE(est_totals.totals.size() == t_map.begin()->second.size());
    // HT totals of dummies estimate the stratum sizes
    std::size_t k = 0;
    for (const auto& [label, t] : t_map) {
        const double truth = static_cast<double>(inst.sizes.at(label));
        CHECK(est_totals.totals[k] == doctest::Approx(truth).epsilon(0.25));
        CHECK(est_totals.variance[k] >= 0.0);
        ++k;
    }

    CalibrationSpec spec;
    spec.t_map = t_map;
    spec.totals = est_totals.totals;
    spec.totals_variance = est_totals.variance;
    spec.population_size = inst.pop.size();
    const auto fit = calibrate(inst.b, spec);
    CHECK(fit.constraint_residual <= 1e-8);
}

TEST_CASE("inverse-propensity initial weights are honoured") {
    const auto inst = random_instance(16);
    CalibrationSpec spec;
    spec.t_map = intercept_tmap(inst.b.x);
    spec.totals = {static_cast<double>(inst.pop.size())};
    spec.population_size = inst.pop.size();
    spec.initial.rule = InitialWeights::Rule::inverse_propensity;
    for (Index id : inst.b.members)
        spec.initial.values.push_back(inst.pop.p_true[static_cast<std::size_t>(id)]);
    const auto fit = calibrate(inst.b, spec);
    // solution is a + constant shift; cell structure has one cell
    CHECK(fit.constraint_residual <= 1e-8);
    double achieved = 0.0;
    for (double w : fit.weights) achieved += w;
    CHECK(achieved == doctest::Approx(static_cast<double>(inst.pop.size())));
}

TEST_CASE("expansion and post-stratification trivial cases") {
    NonProbSample b;
    b.members = {3, 7};
    b.y = {2.0, 4.0};
    b.x = {0, 0};
    CHECK(expansion(b, 10).value == doctest::Approx(30.0));
    CHECK_THROWS_AS((void)expansion(b, 1), Error);

    // constant outcomes give N * c for any draw
    NonProbSample constant;
    constant.members = {0, 1, 2};
    constant.y = {5.0, 5.0, 5.0};
    constant.x = {0, 1, 0};
    CHECK(expansion(constant, 42).value == doctest::Approx(42.0 * 5.0));

    // degenerate stratification collapses to expansion
    CHECK(post_stratified(b, {{0, 10}}).value ==
          doctest::Approx(expansion(b, 10).value));

    NonProbSample two_cells;
    two_cells.members = {0, 1};
    two_cells.y = {5.0, 10.0};
    two_cells.x = {0, 1};
    CHECK(post_stratified(two_cells, {{0, 6}, {1, 4}}).value ==
          doctest::Approx(70.0));
    try {
        (void)post_stratified(two_cells, {{0, 6}, {1, 4}, {2, 5}});
        FAIL("expected empty-cell");
    } catch (const Error& e) {
        CHECK(e.code() == "empty-cell");
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("explicit cell collapsing merges labels and sizes") {
    NonProbSample b;
    b.members = {0, 1, 2};
    b.y = {1.0, 2.0, 3.0};
    b.x = {0, 1, 2};
    const std::map<int, int> relabel{{2, 1}};
    const auto collapsed = collapse_cells(b, relabel);
    CHECK(collapsed.x == std::vector<int>{0, 1, 1});
    const auto sizes = collapse_sizes({{0, 5}, {1, 3}, {2, 4}}, relabel);
    CHECK(sizes.at(1) == 7);
    CHECK(!sizes.count(2));
    // estimable after collapsing even though cell 2 alone would be fine here
    (void)post_stratified(collapsed, sizes);
}
