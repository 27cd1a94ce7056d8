#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nonprob/errors.hpp"

namespace nonprob {

using Index = std::int64_t;

// Finite population U. Unit ids are the vector positions 0..N-1; exported
// files carry the same ids. p_true is the unit-level inclusion propensity of
// the non-probability selection (the simulation oracle; 0 and 1 allowed),
// mu the unit-level conditional mean when the generator knows it.
struct Population {
    std::vector<double> y;
    std::vector<int> x;  // post-stratum label per unit
    std::optional<std::vector<double>> z;
    std::vector<double> p_true;
    std::optional<std::vector<double>> mu;

    Index size() const { return static_cast<Index>(y.size()); }

    // Distinct x labels in ascending order.
    std::vector<int> stratum_labels() const;
    // Label -> N_x.
    std::map<int, Index> stratum_sizes() const;

    void validate() const;
};

// Observed non-probability sample B with its observed columns.
struct NonProbSample {
    std::vector<Index> members;  // unit ids
    std::vector<double> y;
    std::vector<int> x;
    std::optional<std::vector<double>> z;

    Index size() const { return static_cast<Index>(members.size()); }
    double y_mean() const;
    std::map<int, Index> cell_counts() const;  // label -> n_xB

    void validate() const;
};

// Probability sampling designs, kept on the sample for variance estimation.
struct SrsDesign {
    Index frame_size = 0;
    Index n = 0;
};
struct StratumDesign {
    int stratum = 0;
    Index frame_size = 0;
    Index n = 0;
};
struct StratifiedSrsDesign {
    std::vector<StratumDesign> strata;
};
struct PoissonDesign {
    Index frame_size = 0;
};
using Design = std::variant<SrsDesign, StratifiedSrsDesign, PoissonDesign>;

std::string design_name(const Design& d);

// Probability sample S: design inclusion probabilities and weights per
// member, plus whichever columns the design observed.
struct ProbSample {
    std::vector<Index> members;  // unit ids
    std::vector<double> pi;      // inclusion probability, in (0,1]
    std::vector<double> d;       // design weight, 1/pi unless overridden
    std::optional<std::vector<double>> y;
    std::optional<std::vector<int>> x;
    std::optional<std::vector<double>> z;
    Design design = SrsDesign{};

    Index size() const { return static_cast<Index>(members.size()); }

    void validate() const;
};

enum class Target { total, mean };

inline const char* to_string(Target t) { return t == Target::total ? "total" : "mean"; }

// Point estimate with optional variance and a freeform diagnostics bag.
struct Estimate {
    Target target = Target::total;
    double value = 0.0;
    std::optional<double> variance;
    std::string estimator_id;
    std::map<std::string, std::string> diagnostics;
};

// `estimator_id,target,value,variance,diag_key=val;...`
std::string serialize(const Estimate& e);

Estimate to_total(const Estimate& mean_estimate, Index population_size);
Estimate to_mean(const Estimate& total_estimate, Index population_size);

}  // namespace nonprob
