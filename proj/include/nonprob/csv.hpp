#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "nonprob/types.hpp"

namespace nonprob::csv {

// Population file: unit_id,y,x,z,p_true,mu with a mandatory header; absent
// z/mu written as empty fields. Sample files: B is unit_id,y,x[,z]; S is
// unit_id,pi[,d][,y][,x][,z]. Decimal separator is '.', encoding UTF-8.

void write_population(const std::filesystem::path& path, const Population& pop);
Population read_population(const std::filesystem::path& path);

void write_b_sample(const std::filesystem::path& path, const NonProbSample& b);
NonProbSample read_b_sample(const std::filesystem::path& path);

void write_s_sample(const std::filesystem::path& path, const ProbSample& s);
// Ingested S-samples carry no design descriptor; they are treated as
// independent-inclusion (Poisson) for variance purposes.
ProbSample read_s_sample(const std::filesystem::path& path);

// Margins: either `x,N_x` (stratum sizes) or `t_component,total`.
struct StratumMargins {
    std::map<int, Index> sizes;
};
struct ComponentTotals {
    std::vector<double> totals;  // indexed by t component
};
using Margins = std::variant<StratumMargins, ComponentTotals>;

Margins read_margins(const std::filesystem::path& path);
void write_stratum_margins(const std::filesystem::path& path,
                           const std::map<int, Index>& sizes);

}  // namespace nonprob::csv
