#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dbigan/error.hpp"
#include "dbigan/experiment.hpp"

namespace fs = std::filesystem;
using namespace dbigan;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void print_report(const EvalReport& r) {
    std::cout << "normal=" << r.normal_count << " abnormal=" << r.abnormal_count << '\n';
    for (const auto& [k, v] : r.auroc) std::cout << "auroc." << k << " = " << v << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"BiGAN anomaly detector with two encoders"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    bool force = false;
    bool quiet = false;

    auto* train = app.add_subcommand("train", "Train a model into a fresh run directory");
    train->add_option("-c,--config", config_path, "Experiment config (JSON)");
    train->add_option("--set", overrides, "Dotted override, e.g. train.lambda_cyc=0.1")->take_all();
    train->add_option("-o,--out", out_dir, "Run directory (default: config output_dir)");
    train->add_flag("--force", force, "Replace an existing run directory");
    train->add_flag("-q,--quiet", quiet, "No per-epoch progress");

    std::string run_dir;
    std::string split = "test";
    auto* eval = app.add_subcommand("eval", "Score a split and write AUROC report");
    eval->add_option("run_dir", run_dir, "Run directory")->required();
    eval->add_option("--split", split, "test or train")->check(CLI::IsMember({"test", "train"}));

    std::string images;
    auto* score = app.add_subcommand("score", "Write per-sample anomaly scores");
    score->add_option("run_dir", run_dir, "Run directory")->required();
    score->add_option("--images", images, "Directory of unlabelled images (default: test split)");

    auto* diag = app.add_subcommand("diagnostics", "Reconstruction grid and latent projections");
    diag->add_option("run_dir", run_dir, "Run directory")->required();

    std::vector<std::string> sweeps;
    auto* sweep = app.add_subcommand("sweep", "Train and evaluate one run per value of a config field");
    sweep->add_option("-c,--config", config_path, "Experiment config (JSON)");
    sweep->add_option("--set", overrides, "Dotted override applied to every run")->take_all();
    sweep->add_option("--sweep", sweeps, "key=v1,v2,... (dz=20,50,100 or anomaly_class=all)")->required();
    sweep->add_option("-o,--out", out_dir, "Sweep directory (default: config output_dir)");
    sweep->add_flag("--force", force, "Replace an existing sweep directory");
    sweep->add_flag("-q,--quiet", quiet, "No per-epoch progress");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        std::ostream* log = quiet ? nullptr : &std::cerr;
        if (*train) {
            const ExperimentConfig cfg = load_experiment_config(config_path, overrides);
            const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
            const TrainRun run = cmd_train(cfg, dir, force, log);
            std::cout << "trained " << run.steps << " steps; checkpoint " << run.final_checkpoint.string() << '\n';
        } else if (*eval) {
            print_report(cmd_eval(run_dir, split).report);
        } else if (*score) {
            std::cout << cmd_score(run_dir, images).string() << '\n';
        } else if (*diag) {
            for (const auto& f : cmd_diagnostics(run_dir).files) std::cout << f.string() << '\n';
        } else if (*sweep) {
            if (sweeps.size() != 1) throw ConfigError("exactly one --sweep axis is supported");
            const ExperimentConfig cfg = load_experiment_config(config_path, overrides);
            const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
            const SweepResult r = cmd_sweep(cfg, parse_sweep(sweeps.front(), cfg), dir, force, log);
            for (const auto& e : r.entries) {
                std::cout << e.name << ": auroc.a_x=" << e.report.auroc.at("a_x")
                          << " auroc.d_x_anomaly=" << e.report.auroc.at("d_x_anomaly")
                          << " params=" << e.parameter_count << '\n';
            }
            std::cout << "average: auroc.a_x=" << r.average_auroc.at("a_x")
                      << " auroc.d_x_anomaly=" << r.average_auroc.at("d_x_anomaly") << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
