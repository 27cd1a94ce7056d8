#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "nonprob/simharness.hpp"
#include "nonprob/stats.hpp"

using namespace nonprob;
using namespace nonprob::simharness;

namespace {

ScenarioConfig tiny_scenario() {
    ScenarioConfig cfg;
    cfg.name = "tiny";
    cfg.dgp.strata = {{0.5, 0.0, 0.4, 0.0, 1.0}, {0.5, 2.0, 0.4, 0.0, 1.0}};
    cfg.dgp.noise_scale = 1.0;
    cfg.n_grid = {400, 1600};
    cfg.replicates = 200;
    EstimatorConfig expansion;
    expansion.id = "expansion";
    expansion.kind = EstimatorKind::expansion;
    EstimatorConfig poststrat;
    poststrat.id = "poststrat";
    poststrat.kind = EstimatorKind::poststrat;
    poststrat.with_variance = true;
    cfg.estimators = {expansion, poststrat};
    return cfg;
}

}  // namespace

TEST_CASE("census B makes every replicate exact") {
    ScenarioConfig cfg;
    cfg.name = "census";
    cfg.dgp.strata = {{1.0, 1.5, 1.0, 0.0, 1.0}};  // p = 1 everywhere
    cfg.n_grid = {500};
    cfg.replicates = 1;
    EstimatorConfig expansion;
    expansion.id = "expansion";
    expansion.kind = EstimatorKind::expansion;
    EstimatorConfig calibration;
    calibration.id = "calibration";
    calibration.kind = EstimatorKind::calibration;
    cfg.estimators = {expansion, calibration};
    const auto summary = run_scenario(cfg);
    for (const auto& row : summary.rows) {
        CHECK(row.bias == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(row.mc_se == doctest::Approx(0.0));
        CHECK(row.fail_rate == 0.0);
    }
}

TEST_CASE("summaries are byte-identical across thread counts and reruns") {
    const auto cfg = tiny_scenario();
    const auto one = run_scenario(cfg, 1);
    const auto eight = run_scenario(cfg, 8);
    const auto again = run_scenario(cfg, 1);
    CHECK(one.to_csv() == eight.to_csv());
    CHECK(one.to_csv() == again.to_csv());
    CHECK(one.to_long_csv() == eight.to_long_csv());

    auto reseeded = cfg;
    reseeded.seed = 2;
    CHECK(run_scenario(reseeded).to_csv() != one.to_csv());
}

TEST_CASE("rmse decomposition holds to accumulation tolerance") {
    const auto summary = run_scenario(tiny_scenario());
    for (const auto& row : summary.rows) {
        const double var_pop = row.mc_se * row.mc_se *
                               static_cast<double>(row.replicates);
        const double lhs = row.rmse * row.rmse;
        const double rhs = row.bias * row.bias + var_pop;
        CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("bias shrinks along the grid under valid conditions") {
    auto cfg = tiny_scenario();
    cfg.replicates = 400;
    const auto summary = run_scenario(cfg);
    // expansion is consistent here (constant propensity): at the largest N
    // the bias must sit inside 3 monte-carlo standard errors
    for (const auto& row : summary.rows)
        if (row.population_size == 1600)
            CHECK(std::abs(row.bias) <= 3.0 * row.mc_se);
}

TEST_CASE("per-replicate estimates look exchangeable") {
    auto cfg = tiny_scenario();
    cfg.keep_replicates = true;
    cfg.replicates = 2000;
    cfg.n_grid = {400};
    const auto summary = run_scenario(cfg);
    const auto& values = summary.replicate_values.at("expansion@400");
    REQUIRE(values.size() == 2000);
    // lag-1 autocorrelation within 3 MC standard errors of zero
    const double mean = stats::mean(values);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        num += (values[i] - mean) * (values[i + 1] - mean);
    for (const double v : values) den += (v - mean) * (v - mean);
    const double lag1 = num / den;
    CHECK(std::abs(lag1) <= 3.0 / std::sqrt(static_cast<double>(values.size())));
}

TEST_CASE("estimator failures are counted, not fatal") {
    ScenarioConfig cfg;
    cfg.name = "failures";
    cfg.dgp.strata = {{0.99, 0.0, 0.6, 0.0, 1.0}, {0.01, 5.0, 0.05, 0.0, 1.0}};
    cfg.n_grid = {200};  // tiny rare stratum: poststrat cells go empty sometimes
    cfg.replicates = 300;
    EstimatorConfig poststrat;
    poststrat.id = "poststrat";
    poststrat.kind = EstimatorKind::poststrat;
    EstimatorConfig expansion;
    expansion.id = "expansion";
    expansion.kind = EstimatorKind::expansion;
    cfg.estimators = {poststrat, expansion};
    const auto summary = run_scenario(cfg);
    CHECK(summary.rows[0].fail_rate > 0.0);
    CHECK(summary.rows[0].fail_rate < 1.0);
    CHECK(summary.rows[1].fail_rate == 0.0);
    // failures are also reported per error type
    const auto it = summary.flag_rates.find("fail:poststrat:empty-cell@200");
    REQUIRE(it != summary.flag_rates.end());
    CHECK(it->second == doctest::Approx(summary.rows[0].fail_rate));
}

TEST_CASE("presets are complete and carry their documented structure") {
    const auto names = preset_names();
    CHECK(names.size() == 11);
    for (const auto& name : names) {
        const auto cfg = preset(name);
        CHECK(cfg.name == name);
        CHECK(!cfg.expected_outcome.empty());
        cfg.validate();
    }
    CHECK_THROWS_AS((void)preset("no_such_preset"), Error);

    const auto qr = preset("qr_flat");
    for (const auto& st : qr.dgp.strata)
        CHECK(st.propensity == qr.dgp.strata.front().propensity);

    const auto hp = preset("hetero_p");
    CHECK(hp.dgp.propensity_heterogeneity > 0.0);
    CHECK(hp.dgp.propensity_heterogeneity_informative);

    const auto uc = preset("undercoverage_kimrao");
    CHECK(uc.dgp.undercoverage_fraction > 0.0);
    CHECK(uc.dgp.z_mean_slope != 0.0);
}

TEST_CASE("scenario configs survive a json round trip") {
    auto cfg = preset("undercoverage_kimrao");
    cfg.seed = 99;
    cfg.replicates = 7;
    const auto text = to_json(cfg);
    const auto back = scenario_from_json(text);
    CHECK(to_json(back) == text);
    CHECK(back.seed == 99);
    CHECK(back.estimators.size() == cfg.estimators.size());
    CHECK(back.estimators[1].epsilon_scale == cfg.estimators[1].epsilon_scale);
    CHECK_THROWS_AS((void)scenario_from_json("{not json"), Error);
}

TEST_CASE("invalid scenario configs are rejected") {
    auto cfg = tiny_scenario();
    cfg.n_grid = {400, 400};
    CHECK_THROWS_AS((void)run_scenario(cfg), ConfigError);
    cfg = tiny_scenario();
    cfg.replicates = 0;
    CHECK_THROWS_AS((void)run_scenario(cfg), ConfigError);
    cfg = tiny_scenario();
    cfg.estimators[1].id = "expansion";
    CHECK_THROWS_AS((void)run_scenario(cfg), ConfigError);
}

TEST_CASE("cell-wise selection: post-stratification repairs what expansion cannot") {
    ScenarioConfig cfg;
    cfg.name = "cellwise_selection";
    cfg.dgp.strata = {{0.5, 0.0, 0.1, 0.0, 1.0}, {0.5, 2.0, 0.5, 0.0, 1.0}};
    cfg.n_grid = {2000};
    cfg.replicates = 400;
    EstimatorConfig poststrat;
    poststrat.id = "poststrat";
    poststrat.kind = EstimatorKind::poststrat;
    EstimatorConfig expansion;
    expansion.id = "expansion";
    expansion.kind = EstimatorKind::expansion;
    cfg.estimators = {poststrat, expansion};
    const auto summary = run_scenario(cfg);
    const auto& ps = summary.rows[0];
    const auto& exp_row = summary.rows[1];
    CHECK(std::abs(ps.bias) <= 3.0 * ps.mc_se);
    CHECK(std::abs(exp_row.bias) > 5.0 * exp_row.mc_se);
}

TEST_CASE("pooled-membership weighting breaks when selection leaks past x") {
    auto cfg = preset("ref_ipw");
    cfg.name = "ref_ipw_informative";
    cfg.dgp.informativeness = 0.6;
    cfg.n_grid = {4000};
    cfg.replicates = 300;
    const auto summary = run_scenario(cfg);
    const auto& row = summary.rows[0];
    CHECK(std::abs(row.bias) > 5.0 * row.mc_se);
}

TEST_CASE("support screen empties out as donors densify") {
    ScenarioConfig cfg;
    cfg.name = "screen_density";
    cfg.dgp.strata = {{1.0, 1.0, 0.3, 0.0, 1.0}};
    cfg.dgp.z_kind = popgen::ZKind::uniform;
    cfg.dgp.z_mean_slope = 1.0;
    cfg.s_design.kind = "srs";
    cfg.s_design.n = 200;
    cfg.n_grid = {500, 5000};
    cfg.replicates = 200;
    EstimatorConfig two_phase;
    two_phase.id = "two_phase";
    two_phase.kind = EstimatorKind::two_phase_sm;
    two_phase.epsilon = 0.05;  // fixed radius, so density drives the rate
    cfg.estimators = {two_phase};
    const auto summary = run_scenario(cfg);
    const double rate_small = summary.flag_rates.at("two_phase:s0_fraction@500");
    const double rate_large = summary.flag_rates.at("two_phase:s0_fraction@5000");
    CHECK(rate_large < rate_small);
    CHECK(rate_large < 0.01);
}
