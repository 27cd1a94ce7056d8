#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "nonprob/types.hpp"

namespace nonprob::popgen {

enum class ZKind { none, normal, uniform };
enum class UndercoverageMode { largest_y, uniform_random };

// One post-stratum of the synthetic population.
struct StratumSpec {
    double proportion = 1.0;
    double mean = 0.0;        // mu(x)
    double propensity = 0.5;  // p(x), B-inclusion propensity
    double z_lo = 0.0;        // range of uniform z within the stratum
    double z_hi = 1.0;
};

// Data-generating process for a synthetic finite population.
//
// Heterogeneity amplitudes perturb unit means / propensities within each
// stratum by +-h in a mean-preserving way (half the units up, half down; one
// leftover unit untouched when the stratum count is odd), so stratum
// averages of mu and p_true equal the configured values exactly.  The
// informative variant assigns +h to the units with the larger outcome
// residuals, creating within-stratum correlation between p_true and y while
// keeping the stratum average intact.
//
// `informativeness` applies a global monotone transform
//     p_i <- clamp(p_i * (1 + k * (y_i - mu_i)/noise_scale), 0, 1)
// which deliberately breaks mean preservation and makes overall selection
// covary with the outcome.
struct DgpSpec {
    Index population_size = 0;
    std::vector<StratumSpec> strata;

    double noise_scale = 1.0;  // sd of additive outcome noise (Gaussian)

    double mean_heterogeneity = 0.0;
    double propensity_heterogeneity = 0.0;
    bool propensity_heterogeneity_informative = false;

    double informativeness = 0.0;

    ZKind z_kind = ZKind::none;
    double z_outcome_correlation = 0.0;  // normal z only
    double z_mean_slope = 0.0;  // mu_i += slope * (z_i - realized stratum z-mean)

    double undercoverage_fraction = 0.0;
    UndercoverageMode undercoverage_mode = UndercoverageMode::largest_y;
    std::vector<int> undercoverage_strata;  // empty = all strata eligible

    void validate() const;
};

Population generate_population(const DgpSpec& spec, std::uint64_t seed);

// Stratum sizes are a deterministic apportionment of population_size over
// the proportions; no randomness involved.
std::map<int, Index> stratum_sizes_for(const DgpSpec& spec);

// Independent Bernoulli(p_true[i]) inclusion. Empty draws are redrawn with a
// seed advance, at most 100 attempts; the redraw count is reported through
// `redraws` when given.
NonProbSample draw_b_sample(const Population& pop, std::uint64_t seed,
                            int* redraws = nullptr);

struct SrsSpec {
    Index n = 0;
};
struct StratifiedSrsSpec {
    std::map<int, double> fractions;  // stratum label -> sampling fraction
};
struct PoissonSpec {
    std::map<int, double> rate;  // stratum label -> inclusion probability
};
using DesignSpec = std::variant<SrsSpec, StratifiedSrsSpec, PoissonSpec>;

enum class Frame { full, excluding_b };

// Draw the probability sample S by the stated design from the stated frame.
// x (and z when present) are always observed; y only when observe_y.
ProbSample draw_s_sample(const Population& pop, const DesignSpec& design,
                         Frame frame, const NonProbSample* b, std::uint64_t seed,
                         bool observe_y = false);

}  // namespace nonprob::popgen
