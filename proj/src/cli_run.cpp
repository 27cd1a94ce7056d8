#include "nonprob/cli_run.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nonprob/csv.hpp"
#include "nonprob/diagnostics.hpp"
#include "nonprob/estimators.hpp"
#include "nonprob/simharness.hpp"
#include "nonprob/stats.hpp"
#include "nonprob/uncertainty.hpp"

namespace nonprob::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tracks written artifacts so a failing run leaves no partial output.
class ArtifactSink {
public:
    explicit ArtifactSink(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec && !fs::is_directory(dir_))
            throw DataError("output-dir", "cannot create " + dir_.string());
    }

    void write(const std::string& name, const std::string& content) {
        const fs::path path = dir_ / name;
        std::ofstream out(path);
        if (!out) throw DataError("file-open", "cannot write " + path.string());
        out << content;
        out.close();
        written_.push_back(path);
    }

    void write_manifest(const json& resolved_config) {
        json artifacts = json::array();
        for (const auto& p : written_) artifacts.push_back(p.filename().string());
        const json manifest = {{"artifacts", artifacts},
                               {"config", resolved_config}};
        write("manifest.json", manifest.dump(2) + "\n");
        committed_ = true;
    }

    ~ArtifactSink() {
        if (committed_) return;
        for (const auto& p : written_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

private:
    fs::path dir_;
    std::vector<fs::path> written_;
    bool committed_ = false;
};

json config_to_json_impl(const RunConfig& cfg) {
    json j = {{"command", cfg.command},
              {"b", cfg.b_path},
              {"s", cfg.s_path},
              {"margins", cfg.margins_path},
              {"population", cfg.population_path},
              {"preset", cfg.preset_name},
              {"out", cfg.out_dir},
              {"methods", cfg.methods},
              {"level", cfg.level},
              {"population_size", cfg.population_size},
              {"s_frame", cfg.s_frame},
              {"threads", cfg.threads}};
    if (cfg.seed) j["seed"] = *cfg.seed;
    if (cfg.epsilon) j["epsilon"] = *cfg.epsilon;
    if (cfg.tolerance) j["tolerance"] = *cfg.tolerance;
    if (cfg.replicates) j["replicates"] = *cfg.replicates;
    if (!cfg.scenario_json.empty()) j["scenario"] = json::parse(cfg.scenario_json);
    return j;
}

struct LoadedInputs {
    std::optional<NonProbSample> b;
    std::optional<ProbSample> s;
    std::optional<csv::Margins> margins;
    std::optional<Population> population;
    std::map<int, Index> stratum_sizes;  // when margins carry them
    Index population_size = 0;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
    LoadedInputs in;
    if (!cfg.b_path.empty()) in.b = csv::read_b_sample(cfg.b_path);
    if (!cfg.s_path.empty()) in.s = csv::read_s_sample(cfg.s_path);
    if (!cfg.margins_path.empty()) in.margins = csv::read_margins(cfg.margins_path);
    if (!cfg.population_path.empty())
        in.population = csv::read_population(cfg.population_path);

    if (in.margins) {
        if (const auto* m = std::get_if<csv::StratumMargins>(&*in.margins)) {
            in.stratum_sizes = m->sizes;
            for (const auto& [label, n] : m->sizes) in.population_size += n;
        } else {
            const auto& totals = std::get<csv::ComponentTotals>(*in.margins).totals;
            if (totals.size() == 1)
                in.population_size = static_cast<Index>(totals[0]);
        }
    }
    if (cfg.population_size > 0) in.population_size = cfg.population_size;
    if (in.population && in.population_size == 0)
        in.population_size = in.population->size();

    if (in.b && in.s && cfg.s_frame == "u_minus_b") {
        std::set<Index> b_set(in.b->members.begin(), in.b->members.end());
        for (std::size_t i = 0; i < in.s->members.size(); ++i)
            if (b_set.count(in.s->members[i]))
                throw DataError("frame-error",
                                "S row " + std::to_string(i + 2) + " (unit " +
                                    std::to_string(in.s->members[i]) +
                                    ") overlaps B under the U\\B frame");
    }
    return in;
}

void run_estimate(const RunConfig& cfg, ArtifactSink& sink, const json& resolved) {
    const LoadedInputs in = load_inputs(cfg);
    if (!in.b) throw ConfigError("missing-input", "estimate needs --b");
    const NonProbSample& b = *in.b;
    const Index n = in.population_size;
    if (n <= 0)
        throw ConfigError("missing-input",
                          "estimate needs --population-size or margins");

    std::vector<std::string> methods = cfg.methods;
    if (methods.empty()) {
        methods = {"expansion"};
        if (!in.stratum_sizes.empty()) {
            methods.push_back("poststrat");
            methods.push_back("calibration");
            methods.push_back("ipw");
        }
        if (in.s && in.s->y) {
            methods.push_back("hajek");
            if (cfg.s_frame == "u_minus_b") {
                methods.push_back("split_population");
                methods.push_back("composite");
            }
        }
        if (in.s && in.s->x) methods.push_back("reference_ipw");
    }

    const auto need_sizes = [&]() -> const std::map<int, Index>& {
        if (in.stratum_sizes.empty())
            throw ConfigError("missing-input", "method needs stratum margins (x,N_x)");
        return in.stratum_sizes;
    };
    const auto need_s = [&]() -> const ProbSample& {
        if (!in.s) throw ConfigError("missing-input", "method needs --s");
        return *in.s;
    };
    const auto need_s_complement = [&]() -> const ProbSample& {
        if (cfg.s_frame != "u_minus_b")
            throw ConfigError("missing-input",
                              "method needs an S-sample declared with the U\\B frame");
        return need_s();
    };

    using namespace nonprob::estimators;
    std::vector<Estimate> results;
    for (const auto& method : methods) {
        Estimate est;
        if (method == "expansion") {
            est = expansion(b, n);
        } else if (method == "poststrat") {
            est = post_stratified(b, need_sizes());
            est.variance = uncertainty::poststrat_variance(b, need_sizes()).value;
        } else if (method == "calibration") {
            CalibrationSpec spec;
            spec.t_map = dummy_tmap(b.x);
            spec.totals = totals_from_stratum_sizes(spec.t_map, need_sizes());
            spec.population_size = n;
            const CalibrationFit fit = calibrate(b, spec);
            est = calibration_estimate(fit, b);
            est.variance =
                uncertainty::calibration_variance(fit, b, need_sizes()).value;
        } else if (method == "ipw") {
            const auto fit = fit_propensity_census(b, need_sizes(), PropensityModel{});
            est = ipw(b, fit);
        } else if (method == "reference_ipw") {
            est = reference_ipw(b, need_s(), n);
        } else if (method == "sm") {
            const auto& s = need_s();
            est = sm_estimate(s, nn_match(s, b));
        } else if (method == "two_phase_sm") {
            est = two_phase_sm(need_s(), b, cfg.epsilon);
        } else if (method == "split_population") {
            est = split_population(b, need_s_complement(), n);
        } else if (method == "hajek") {
            est = hajek_mean(need_s());
        } else if (method == "composite") {
            est = composite(b, need_s_complement(), CompositeGamma{}, n);
        } else {
            throw ConfigError("unknown-method", "unknown method '" + method + "'");
        }
        results.push_back(est);
        results.push_back(est.target == Target::total ? to_mean(est, n)
                                                      : to_total(est, n));
    }

    std::string out = "estimator_id,target,value,variance,diagnostics\n";
    for (const auto& est : results) out += serialize(est) + '\n';
    sink.write("estimates.csv", out);
    sink.write_manifest(resolved);
}

void run_diagnose(const RunConfig& cfg, ArtifactSink& sink, const json& resolved) {
    const LoadedInputs in = load_inputs(cfg);
    if (!in.b) throw ConfigError("missing-input", "diagnose needs --b");
    const NonProbSample& b = *in.b;

    std::vector<std::string> checks = cfg.methods;
    if (checks.empty()) {
        checks = {"propensity"};
        if (in.population) checks.push_back("npa");
    }

    std::string text;
    std::string csv_out = "check,residual,tolerance,satisfied\n";
    for (const auto& check : checks) {
        if (check == "propensity") {
            diagnostics::CheckReport report;
            if (!in.stratum_sizes.empty()) {
                std::map<int, double> p_hat;
                const auto counts = b.cell_counts();
                for (const auto& [label, n_x] : in.stratum_sizes) {
                    const auto it = counts.find(label);
                    if (it == counts.end())
                        throw EstimationError("empty-cell",
                                              "stratum " + std::to_string(label) +
                                                  " has no B members");
                    p_hat[label] = static_cast<double>(it->second) /
                                   static_cast<double>(n_x);
                }
                report = diagnostics::propensity_checks(p_hat, in.stratum_sizes, b);
            } else {
                const Index n = in.population_size;
                if (n <= 0)
                    throw ConfigError("missing-input",
                                      "propensity check needs margins or "
                                      "--population-size");
                const double constant = static_cast<double>(b.size()) /
                                        static_cast<double>(n);
                std::map<int, double> p_hat;
                std::map<int, Index> sizes{{0, n}};
                p_hat[0] = constant;
                NonProbSample flat = b;
                std::fill(flat.x.begin(), flat.x.end(), 0);
                report = diagnostics::propensity_checks(p_hat, sizes, flat);
            }
            text += "== propensity checks ==\n" + report.to_text() + "\n";
            auto lines = report.to_csv();
            csv_out += lines.substr(lines.find('\n') + 1);
        } else if (check == "z") {
            if (!in.population || !in.population->z)
                throw ConfigError("missing-input",
                                  "z check needs --population with a z column");
            if (in.stratum_sizes.empty())
                throw ConfigError("missing-input", "z check needs stratum margins");
            const auto& pop = *in.population;
            std::map<int, double> z_mean, p_hat;
            std::map<int, double> z_sum;
            std::map<int, Index> z_n;
            double z_total = 0.0;
            for (Index i = 0; i < pop.size(); ++i) {
                const auto u = static_cast<std::size_t>(i);
                z_sum[pop.x[u]] += (*pop.z)[u];
                ++z_n[pop.x[u]];
                z_total += (*pop.z)[u];
            }
            for (const auto& [label, sum] : z_sum)
                z_mean[label] = sum / static_cast<double>(z_n[label]);
            const auto counts = b.cell_counts();
            for (const auto& [label, n_x] : in.stratum_sizes) {
                const auto it = counts.find(label);
                if (it == counts.end())
                    throw EstimationError("empty-cell",
                                          "stratum " + std::to_string(label) +
                                              " has no B members");
                p_hat[label] =
                    static_cast<double>(it->second) / static_cast<double>(n_x);
            }
            const auto report =
                diagnostics::z_checks(b, z_total, z_mean, in.stratum_sizes, p_hat);
            text += "== z checks ==\n" + report.to_text() + "\n";
            auto lines = report.to_csv();
            csv_out += lines.substr(lines.find('\n') + 1);
        } else if (check == "npa") {
            if (!in.population)
                throw ConfigError("missing-input", "npa check needs --population");
            const auto& pop = *in.population;
            std::vector<int> delta(static_cast<std::size_t>(pop.size()), 0);
            for (Index id : b.members) {
                if (id < 0 || id >= pop.size())
                    throw DataError("unknown-unit",
                                    "B member outside the population file");
                delta[static_cast<std::size_t>(id)] = 1;
            }
            const auto report = diagnostics::npa_covariance(delta, pop.y);
            const auto band = diagnostics::permutation_null_band(
                delta, pop.y, 999, cfg.seed.value_or(1), cfg.level);
            const bool outside = band.outside(report.cov);
            text += "== npa covariance ==\n";
            text += "cov(delta, y) = " + stats::format_double(report.cov) + "\n";
            text += "mean(delta) = " + stats::format_double(report.mean_delta) + "\n";
            text += "permutation band [" + stats::format_double(band.lo) + ", " +
                    stats::format_double(band.hi) + "] -> " +
                    (outside ? "outside (selection looks informative)"
                             : "inside (no evidence of informative selection)") +
                    "\n\n";
            csv_out += "npa-covariance," + stats::format_double(report.cov) + ',' +
                       stats::format_double(std::max(std::abs(band.lo),
                                                     std::abs(band.hi))) +
                       ',' + (outside ? "0" : "1") + '\n';
        } else {
            throw ConfigError("unknown-method", "unknown check '" + check + "'");
        }
    }
    sink.write("checks.csv", csv_out);
    sink.write("checks.txt", text);
    sink.write_manifest(resolved);
}

void run_simulate(const RunConfig& cfg, ArtifactSink& sink, const json& resolved) {
    simharness::ScenarioConfig scenario;
    if (!cfg.scenario_json.empty()) {
        scenario = simharness::scenario_from_json(cfg.scenario_json);
    } else if (!cfg.preset_name.empty()) {
        scenario = simharness::preset(cfg.preset_name);
    } else {
        throw ConfigError("missing-input", "simulate needs --preset or a scenario config");
    }
    if (cfg.seed) scenario.seed = *cfg.seed;
    if (cfg.replicates) scenario.replicates = *cfg.replicates;

    const auto summary = simharness::run_scenario(scenario, cfg.threads);
    sink.write("summary.csv", summary.to_csv());
    sink.write("long.csv", summary.to_long_csv());
    json full = resolved;
    full["scenario"] = json::parse(simharness::to_json(scenario));
    sink.write_manifest(full);
}

void run_presets(ArtifactSink& sink, const json& resolved) {
    std::string out;
    for (const auto& name : simharness::preset_names()) {
        const auto cfg = simharness::preset(name);
        out += name + ": " + cfg.expected_outcome + "\n";
    }
    std::cout << out;
    sink.write("presets.txt", out);
    sink.write_manifest(resolved);
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config-parse", e.what());
    }
    RunConfig cfg;
    try {
        cfg.command = j.value("command", "");
        cfg.b_path = j.value("b", "");
        cfg.s_path = j.value("s", "");
        cfg.margins_path = j.value("margins", "");
        cfg.population_path = j.value("population", "");
        cfg.preset_name = j.value("preset", "");
        cfg.out_dir = j.value("out", ".");
        cfg.methods = j.value("methods", std::vector<std::string>{});
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.level = j.value("level", 0.05);
        if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
        if (j.contains("tolerance")) cfg.tolerance = j.at("tolerance").get<double>();
        cfg.population_size = j.value("population_size", Index{0});
        cfg.s_frame = j.value("s_frame", "full");
        if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<int>();
        cfg.threads = j.value("threads", 1);
        if (j.contains("scenario")) cfg.scenario_json = j.at("scenario").dump();
    } catch (const json::exception& e) {
        throw ConfigError("config-parse", e.what());
    }
    return cfg;
}

std::string to_json(const RunConfig& cfg) { return config_to_json_impl(cfg).dump(2); }

void run(const RunConfig& cfg) {
    for (const auto* path : {&cfg.b_path, &cfg.s_path, &cfg.margins_path,
                             &cfg.population_path}) {
        if (!path->empty() && !fs::exists(*path))
            throw DataError("missing-file", "input file not found: " + *path);
    }
    ArtifactSink sink(cfg.out_dir);
    const json resolved = config_to_json_impl(cfg);
    if (cfg.command == "estimate") {
        run_estimate(cfg, sink, resolved);
    } else if (cfg.command == "diagnose") {
        run_diagnose(cfg, sink, resolved);
    } else if (cfg.command == "simulate") {
        run_simulate(cfg, sink, resolved);
    } else if (cfg.command == "presets") {
        run_presets(sink, resolved);
    } else {
        throw ConfigError("unknown-command",
                          "command must be estimate, diagnose, simulate or presets");
    }
}

}  // namespace nonprob::cli
