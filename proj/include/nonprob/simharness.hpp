#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nonprob/popgen.hpp"
#include "nonprob/types.hpp"

namespace nonprob::simharness {

enum class EstimatorKind {
    expansion,
    poststrat,
    calibration,
    ipw_census,
    reference_ipw,
    sm,
    two_phase_sm,
    split_population,
    hajek,
    composite,
};

enum class TargetKind { total, mean, stratum_mean };

struct EstimatorConfig {
    std::string id;
    EstimatorKind kind = EstimatorKind::expansion;
    TargetKind target = TargetKind::total;
    int stratum = -1;  // for stratum_mean targets
    bool with_variance = false;

    // calibration
    std::string tmap = "x_dummies";  // x_dummies | intercept

    // propensity fits
    std::string propensity_model = "saturated";  // saturated | logistic
    std::string propensity_source = "census";    // census | pseudo | unweighted
    std::map<int, double> logistic_scores;       // label -> score, t(x) = (1, score)

    // matching
    bool match_on_z = true;
    bool match_exact_x = false;

    // two-phase
    std::optional<double> epsilon;        // fixed support radius
    std::optional<double> epsilon_scale;  // epsilon = scale / sqrt(n_B)
    std::string s_tmap = "intercept_z";   // intercept_z | x_dummies | intercept_only

    // composite
    std::optional<double> gamma;  // fixed; unset = data-driven
};

struct SDesignConfig {
    std::string kind = "none";  // none | srs | stratified | poisson
    Index n = 0;                // srs size
    std::map<int, double> fractions;  // stratified fractions / poisson rates
    std::string frame = "full";       // full | u_minus_b
    bool observe_y = false;
};

struct ScenarioConfig {
    std::string name;
    popgen::DgpSpec dgp;  // population_size is taken from n_grid
    SDesignConfig s_design;
    std::vector<EstimatorConfig> estimators;
    std::vector<Index> n_grid;
    int replicates = 2000;
    std::uint64_t seed = 1;
    bool run_h0 = false;
    double h0_level = 0.05;
    bool keep_replicates = false;  // retain per-replicate estimates
    std::string expected_outcome;

    void validate() const;
};

struct SummaryRow {
    std::string estimator;
    Index population_size = 0;
    int replicates = 0;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double mc_se = 0.0;  // sd of the replicate estimates / sqrt(R_ok)
    double rmse = 0.0;
    double var_hat_mean = 0.0;  // NaN when the estimator reports no variance
    double coverage = 0.0;      // NaN likewise
    double fail_rate = 0.0;
};

struct McSummary {
    std::string scenario;
    std::vector<SummaryRow> rows;
    // Scenario-level rates (h0 rejection, support-screen fractions, redraws),
    // keyed "<name>@N".
    std::map<std::string, double> flag_rates;
    // Filled only under keep_replicates, keyed "<estimator>@N"; failed
    // replicates appear as NaN.
    std::map<std::string, std::vector<double>> replicate_values;

    std::string to_csv() const;
    std::string to_long_csv() const;
};

// R replicates per grid point, reduced in replicate order; the result is a
// pure function of cfg whatever the thread count.
McSummary run_scenario(const ScenarioConfig& cfg, int threads = 1);

ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const std::string& text);

}  // namespace nonprob::simharness
