#include "nonprob/types.hpp"

#include <algorithm>
#include <set>

#include "nonprob/stats.hpp"

namespace nonprob {

std::vector<int> Population::stratum_labels() const {
    std::set<int> labels(x.begin(), x.end());
    return {labels.begin(), labels.end()};
}

std::map<int, Index> Population::stratum_sizes() const {
    std::map<int, Index> sizes;
    for (int label : x) ++sizes[label];
    return sizes;
}

void Population::validate() const {
    const auto n = y.size();
    if (n == 0) throw DataError("empty-population", "population has no units");
    if (x.size() != n || p_true.size() != n)
        throw DataError("column-length", "population columns differ in length");
    if (z && z->size() != n)
        throw DataError("column-length", "z column length mismatch");
    if (mu && mu->size() != n)
        throw DataError("column-length", "mu column length mismatch");
    for (double p : p_true)
        if (!(p >= 0.0 && p <= 1.0))
            throw DataError("propensity-range", "p_true outside [0,1]");
}

double NonProbSample::y_mean() const {
    if (members.empty())
        throw EstimationError("empty-sample", "sample mean of an empty sample");
    double s = 0.0;
    for (double v : y) s += v;
    return s / static_cast<double>(y.size());
}

std::map<int, Index> NonProbSample::cell_counts() const {
    std::map<int, Index> counts;
    for (int label : x) ++counts[label];
    return counts;
}

void NonProbSample::validate() const {
    if (members.empty()) throw DataError("empty-sample", "sample B has no members");
    if (y.size() != members.size() || x.size() != members.size())
        throw DataError("column-length", "sample columns differ in length");
    if (z && z->size() != members.size())
        throw DataError("column-length", "z column length mismatch");
    std::set<Index> seen(members.begin(), members.end());
    if (seen.size() != members.size())
        throw DataError("duplicate-unit", "duplicate unit ids in sample");
}

std::string design_name(const Design& d) {
    if (std::holds_alternative<SrsDesign>(d)) return "srs";
    if (std::holds_alternative<StratifiedSrsDesign>(d)) return "stratified-srs";
    return "poisson";
}

void ProbSample::validate() const {
    if (members.empty()) throw DataError("empty-sample", "sample S has no members");
    if (pi.size() != members.size() || d.size() != members.size())
        throw DataError("column-length", "sample columns differ in length");
    for (double p : pi)
        if (!(p > 0.0 && p <= 1.0))
            throw DataError("inclusion-probability-range", "pi outside (0,1]");
    for (double w : d)
        if (!(w > 0.0)) throw DataError("weight-range", "design weight not positive");
    if (y && y->size() != members.size())
        throw DataError("column-length", "y column length mismatch");
    if (x && x->size() != members.size())
        throw DataError("column-length", "x column length mismatch");
    if (z && z->size() != members.size())
        throw DataError("column-length", "z column length mismatch");
    std::set<Index> seen(members.begin(), members.end());
    if (seen.size() != members.size())
        throw DataError("duplicate-unit", "duplicate unit ids in sample");
}

std::string serialize(const Estimate& e) {
    std::string out = e.estimator_id;
    out += ',';
    out += to_string(e.target);
    out += ',';
    out += stats::format_double(e.value);
    out += ',';
    if (e.variance) out += stats::format_double(*e.variance);
    out += ',';
    bool first = true;
    for (const auto& [k, v] : e.diagnostics) {
        if (!first) out += ';';
        out += k;
        out += '=';
        out += v;
        first = false;
    }
    return out;
}

Estimate to_total(const Estimate& mean_estimate, Index population_size) {
    Estimate e = mean_estimate;
    const double n = static_cast<double>(population_size);
    e.target = Target::total;
    e.value = mean_estimate.value * n;
    if (e.variance) e.variance = *e.variance * n * n;
    return e;
}

Estimate to_mean(const Estimate& total_estimate, Index population_size) {
    Estimate e = total_estimate;
    const double n = static_cast<double>(population_size);
    e.target = Target::mean;
    e.value = total_estimate.value / n;
    if (e.variance) e.variance = *e.variance / (n * n);
    return e;
}

}  // namespace nonprob
