#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nonprob/types.hpp"

namespace nonprob::cli {

// Resolved invocation. A JSON config file mirrors these fields; command-line
// flags override file values.
struct RunConfig {
    std::string command;  // estimate | diagnose | simulate | presets

    std::string b_path;
    std::string s_path;
    std::string margins_path;
    std::string population_path;

    std::string preset_name;
    std::string scenario_json;  // full scenario config, for simulate

    std::string out_dir = ".";
    std::vector<std::string> methods;  // estimators to run / checks to run

    std::optional<std::uint64_t> seed;
    double level = 0.05;
    std::optional<double> epsilon;
    std::optional<double> tolerance;  // override for check tolerances
    Index population_size = 0;
    std::string s_frame = "full";  // full | u_minus_b
    std::optional<int> replicates;
    int threads = 1;
};

RunConfig config_from_json(const std::string& text);
std::string to_json(const RunConfig& cfg);

// Executes the command, writing all artifacts plus manifest.json under
// out_dir. Partial outputs are removed when a step fails. Throws Error;
// the caller maps Error::exit_code() onto the process exit status.
void run(const RunConfig& cfg);

}  // namespace nonprob::cli
