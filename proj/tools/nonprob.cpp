#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nonprob/cli_run.hpp"
#include "nonprob/errors.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw nonprob::DataError("file-open", "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"descriptive inference from non-probability samples"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, b_path, s_path, margins_path,
        population_path, s_frame, methods_csv;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double level = 0.0, epsilon = 0.0, tolerance = 0.0;
    long long population_size = 0;
    int replicates = 0, threads = 0;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--preset", preset, "scenario preset name");
        cmd->add_option("--seed", seed, "root seed")->each([&](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--method", methods_csv,
                        "comma-separated estimators or checks");
        cmd->add_option("--level", level, "test / band level");
        cmd->add_option("--epsilon", epsilon, "two-phase support radius");
        cmd->add_option("--tolerance", tolerance, "check tolerance override");
        cmd->add_option("--b", b_path, "B-sample CSV (unit_id,y,x[,z])");
        cmd->add_option("--s", s_path, "S-sample CSV (unit_id,pi[,d][,y][,x][,z])");
        cmd->add_option("--margins", margins_path, "margins CSV");
        cmd->add_option("--population", population_path, "population CSV");
        cmd->add_option("--population-size", population_size, "population size N");
        cmd->add_option("--s-frame", s_frame, "S frame: full | u_minus_b");
        cmd->add_option("--replicates", replicates, "replicate count override");
        cmd->add_option("--threads", threads, "worker thread count");
    };

    auto* estimate = app.add_subcommand("estimate", "point estimates from files");
    auto* diagnose = app.add_subcommand("diagnose", "validity-condition checks");
    auto* simulate = app.add_subcommand("simulate", "seeded Monte Carlo scenario");
    auto* presets = app.add_subcommand("presets", "list scenario presets");
    for (auto* cmd : {estimate, diagnose, simulate, presets}) add_common(cmd);
    diagnose->add_option("--checks", methods_csv, "comma-separated checks");

    CLI11_PARSE(app, argc, argv);

    try {
        nonprob::cli::RunConfig cfg;
        if (!config_path.empty())
            cfg = nonprob::cli::config_from_json(read_file(config_path));
        cfg.command = app.get_subcommands().front()->get_name();
        if (!preset.empty()) cfg.preset_name = preset;
        if (seed_set) cfg.seed = seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!b_path.empty()) cfg.b_path = b_path;
        if (!s_path.empty()) cfg.s_path = s_path;
        if (!margins_path.empty()) cfg.margins_path = margins_path;
        if (!population_path.empty()) cfg.population_path = population_path;
        if (level > 0.0) cfg.level = level;
        if (epsilon > 0.0) cfg.epsilon = epsilon;
        if (tolerance > 0.0) cfg.tolerance = tolerance;
        if (population_size > 0) cfg.population_size = population_size;
        if (!s_frame.empty()) cfg.s_frame = s_frame;
        if (replicates > 0) cfg.replicates = replicates;
        if (threads > 0) cfg.threads = threads;
        if (!methods_csv.empty()) {
            cfg.methods.clear();
            std::stringstream ss(methods_csv);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) cfg.methods.push_back(item);
        }
        nonprob::cli::run(cfg);
        return 0;
    } catch (const nonprob::Error& e) {
        const nlohmann::json err = {{"category", nonprob::to_string(e.category())},
                                    {"code", e.code()},
                                    {"message", e.what()}};
        std::cerr << "error: " << err.dump() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        const nlohmann::json err = {
            {"category", "internal"}, {"code", "unexpected"}, {"message", e.what()}};
        std::cerr << "error: " << err.dump() << "\n";
        return 5;
    }
}
