#pragma once

#include <map>
#include <optional>

#include "nonprob/calibration.hpp"
#include "nonprob/matching.hpp"
#include "nonprob/propensity.hpp"
#include "nonprob/types.hpp"

namespace nonprob::estimators {

// N * mean(y_B). No variance: validity rests on constant-mean or
// constant-propensity selection, which the data cannot certify.
Estimate expansion(const NonProbSample& b, Index population_size);

// sum_x N_x * mean(y_B in x). Every stratum with N_x > 0 must have at least
// one B member; empty cells raise rather than silently collapsing.
Estimate post_stratified(const NonProbSample& b,
                         const std::map<int, Index>& stratum_sizes);

// Explicit cell collapsing: relabel strata, merging their sizes. Changes the
// estimand, so it is a deliberate caller action, never automatic.
NonProbSample collapse_cells(const NonProbSample& b,
                             const std::map<int, int>& relabel);
std::map<int, Index> collapse_sizes(const std::map<int, Index>& stratum_sizes,
                                    const std::map<int, int>& relabel);

// Hajek mean of a probability sample with observed y.
Estimate hajek_mean(const ProbSample& s);

// W_B * mean(y_B) + (1 - W_B) * hajek(S), with S drawn from U \ B.
Estimate split_population(const NonProbSample& b, const ProbSample& s,
                          Index population_size);

struct CompositeGamma {
    // Fixed value in [W_B, 1], or data-driven when unset.
    std::optional<double> fixed;
};

// gamma * mean(y_B) + (1 - gamma) * hajek(S). The data-driven rule is
// gamma_hat = min(W_B + (1 - W_B) * Vhat(hajek) / (mean_B - hajek)^2, 1).
Estimate composite(const NonProbSample& b, const ProbSample& s,
                   const CompositeGamma& gamma, Index population_size);

// Minimum-MSE composition weight from the S-mean variance, the B fraction
// and the B-mean bias delta. Returns a value in [W_B, 1].
double optimal_gamma(double v_w, double w_b, double delta);

}  // namespace nonprob::estimators
