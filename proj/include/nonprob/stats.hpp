#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nonprob::stats {

double mean(std::span<const double> v);

// Two-pass sample variance (divisor n-1).
double sample_variance(std::span<const double> v);

// Population-style variance (divisor n).
double population_variance(std::span<const double> v);

double sd(std::span<const double> v);

double correlation(std::span<const double> a, std::span<const double> b);

// Nearest-rank percentile, q in [0,1]. Copies and sorts.
double percentile(std::vector<double> v, double q);

// Inverse standard normal CDF (Wichura's AS 241, double precision).
double normal_quantile(double p);

// Quantile of the chi-square distribution with one degree of freedom.
double chi2_quantile_1df(double p);

// Shortest round-trip decimal rendering of a double (std::to_chars).
// Used everywhere numbers are written to CSV so output is byte-stable.
std::string format_double(double x);

}  // namespace nonprob::stats
