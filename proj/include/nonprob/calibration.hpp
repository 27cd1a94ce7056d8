#pragma once

#include <map>
#include <optional>
#include <vector>

#include "nonprob/types.hpp"

namespace nonprob::estimators {

// Many-to-one mapping from stratum label to the K-vector t(x).
using TMap = std::map<int, std::vector<double>>;

// One 0/1 indicator component per label.
TMap dummy_tmap(const std::vector<int>& labels);
// t(x) = (1): calibrates the weight sum only.
TMap intercept_tmap(const std::vector<int>& labels);

// Known-total helper: T_k = sum_x N_x t_k(x).
std::vector<double> totals_from_stratum_sizes(const TMap& t_map,
                                              const std::map<int, Index>& stratum_sizes);

// Estimated totals from a probability sample (x observed on S):
// T_hat = sum_S d_i t(x_i), with a linearised variance per component.
struct EstimatedTotals {
    std::vector<double> totals;
    std::vector<double> variance;
};
EstimatedTotals totals_from_s(const TMap& t_map, const ProbSample& s);

struct InitialWeights {
    enum class Rule { uniform, inverse_propensity, explicit_weights };
    Rule rule = Rule::uniform;
    std::vector<double> values;  // per B member, for the non-uniform rules
};

struct CalibrationSpec {
    TMap t_map;
    std::vector<double> totals;
    // Present when totals were estimated from S; carried as a diagnostic
    // only, never folded into the point estimate.
    std::optional<std::vector<double>> totals_variance;
    InitialWeights initial;
    Index population_size = 0;  // N, used by the uniform initial-weight rule
};

struct CalibrationFit {
    std::vector<double> weights;    // per B member
    std::vector<double> beta_hat;   // K
    std::vector<double> residuals;  // y_i - t_i' beta_hat
    double constraint_residual = 0.0;  // max-norm, relative to the totals

    // t-cell structure: members carrying the same t vector form one cell.
    std::vector<int> cell_of;                  // per B member -> cell index
    std::vector<std::vector<double>> cell_t;   // distinct t vectors
    std::vector<std::vector<int>> cell_labels; // stratum labels in each cell
};

// Minimise sum_B (w_i - a_i)^2 subject to sum_B w_i t_i = totals.
// Exact solve through the K x K cell-aggregated system.
CalibrationFit calibrate(const NonProbSample& b, const CalibrationSpec& spec);

// sum_B w_i y_i.
Estimate calibration_estimate(const CalibrationFit& fit, const NonProbSample& b);

}  // namespace nonprob::estimators
