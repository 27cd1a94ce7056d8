#pragma once

#include <map>
#include <string>
#include <vector>

#include "nonprob/calibration.hpp"
#include "nonprob/types.hpp"

namespace nonprob::estimators {

enum class PropensityModelKind { saturated, logistic };
enum class PropensitySource { census, pseudo_population, unweighted_s, reference_pooled };

const char* to_string(PropensityModelKind k);
const char* to_string(PropensitySource s);

struct PropensityModel {
    PropensityModelKind kind = PropensityModelKind::saturated;
    TMap t_map;  // logistic: label -> regressor vector (include the intercept)
};

struct PropensityFit {
    PropensityModelKind model = PropensityModelKind::saturated;
    PropensitySource source = PropensitySource::census;
    std::vector<double> params;        // logistic coefficients; empty for saturated
    std::map<int, double> p_by_label;  // unclamped fitted value per label
    std::vector<double> p_b;           // clamped fitted p per B member
    int iterations = 0;
    double score_norm = 0.0;  // max-norm of the mean score at the solution
    bool clamped = false;

    // Clamped evaluation at a stratum label.
    double p_hat(int label) const;
};

// Solve the census score equation: x known (as cell counts) for all of U.
PropensityFit fit_propensity_census(const NonProbSample& b,
                                    const std::map<int, Index>& stratum_sizes,
                                    const PropensityModel& model);

// Solve the S-sample estimating equation, design-weighted (pseudo-population)
// or unweighted. Membership of S units in B is resolved by unit id, so both
// samples must come from the same frame.
PropensityFit fit_propensity_from_s(const NonProbSample& b, const ProbSample& s,
                                    bool design_weighted,
                                    const PropensityModel& model);

// sum_B y_i / p_hat_i.
Estimate ipw(const NonProbSample& b, const PropensityFit& fit);

// Membership-ratio propensities from the pooled set B u S, scaled by the
// S-design inclusion rate per cell and normalised so sum_B 1/p_hat = N.
Estimate reference_ipw(const NonProbSample& b, const ProbSample& s,
                       Index population_size,
                       PropensityModelKind kind = PropensityModelKind::saturated,
                       const TMap* t_map = nullptr);

}  // namespace nonprob::estimators
