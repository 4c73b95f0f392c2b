// Experiment runner: run, compare and sweep.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvqkd/config.hpp"
#include "cvqkd/experiment.hpp"

using namespace cvqkd;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string profile = "desk";
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--profile", o.profile, "Base profile")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--workers", o.workers, "Parallel measurements")->check(CLI::PositiveNumber);
    cmd->allow_extras();
}

// Extras of the form --a.b=v or --a.b v.
std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
            throw Error(Errc::config, "unexpected argument '" + arg + "'");
        }
        const std::string body = arg.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        } else if (i + 1 < extras.size()) {
            out.emplace_back(body, extras[++i]);
        } else {
            throw Error(Errc::config, "missing value for '" + arg + "'");
        }
    }
    return out;
}

experiment::ExperimentConfig build_config(const CommonOptions& o, const std::vector<std::string>& extras) {
    auto cfg = experiment::profile(o.profile);
    if (!o.config_path.empty()) cfg = config::load_file(o.config_path, cfg);
    if (o.out) cfg.output_dir = *o.out;
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    cfg = config::apply_overrides(cfg, dotted_overrides(extras));
    cfg.validate();
    return cfg;
}

int exit_code(const Error& e) {
    switch (e.code()) {
        case Errc::config: return 2;
        case Errc::io: return 3;
        default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulated CV-QKD receiver: joint UKF vs CMA reference"};
    app.require_subcommand(1);

    CommonOptions run_opts;
    auto* run = app.add_subcommand("run", "Run all measurements and write CSV outputs");
    add_common(run, run_opts);
    bool dump_config = false;
    run->add_flag("--dump-config", dump_config, "Print the effective config and exit");

    std::string frames_csv;
    auto* compare = app.add_subcommand("compare", "Compare the two chains from a frames.csv");
    compare->add_option("frames_csv", frames_csv, "frames.csv from run")->required();

    CommonOptions sweep_opts;
    std::string parameter;
    std::vector<double> values;
    std::size_t sweep_measurements = 2;
    std::size_t sweep_symbols = 100000;
    auto* sw = app.add_subcommand("sweep", "Run a reduced-size experiment per parameter value");
    add_common(sw, sweep_opts);
    sw->add_option("--parameter", parameter, "One of: v_mod, loss_db, linewidth, mu, q_phi, theta_rate")->required();
    sw->add_option("--values", values, "Parameter values")->required()->delimiter(',');
    sw->add_option("--measurements", sweep_measurements, "Measurements per value")->check(CLI::PositiveNumber);
    sw->add_option("--symbols", sweep_symbols, "Symbols per measurement")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = build_config(run_opts, run->remaining());
            if (dump_config) {
                std::cout << config::to_json(cfg).dump(2) << '\n';
                return 0;
            }
            const auto summary = experiment::run_to_directory(cfg);
            experiment::print_summary(std::cout, summary);
            std::cout << "outputs written to " << cfg.output_dir << '\n';
            return summary.failed == cfg.n_measurements ? 1 : 0;
        }
        if (*compare) {
            experiment::print_comparison(std::cout, experiment::compare_frames(frames_csv));
            return 0;
        }
        if (*sw) {
            auto cfg = build_config(sweep_opts, sw->remaining());
            cfg.n_measurements = sweep_measurements;
            cfg.symbols_per_measurement = sweep_symbols;
            cfg.validate();
            const auto rows = experiment::sweep(cfg, parameter, values);
            std::filesystem::create_directories(cfg.output_dir);
            const auto path = std::filesystem::path(cfg.output_dir) / "sweep.csv";
            std::ofstream out(path, std::ios::binary);
            if (!out) throw Error(Errc::io, "cannot write " + path.string());
            experiment::write_sweep_csv(out, rows);
            experiment::write_sweep_csv(std::cout, rows);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
