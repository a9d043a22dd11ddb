#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbigan/data.hpp"
#include "dbigan/eval.hpp"
#include "dbigan/scoring.hpp"
#include "dbigan/trainer.hpp"

namespace dbigan {

inline constexpr int kExperimentFormatVersion = 1;
inline constexpr const char* kDataRootEnv = "DBIGAN_DATA_ROOT";

struct DatasetSpec {
    std::string name = "synthetic";      // synthetic | mnist | cifar10 | folder
    std::string root;                    // ignored for synthetic
    std::optional<int> anomaly_class;    // default: 1 for synthetic ("cross"), else 0
    SyntheticSpec synthetic;
};

struct DiagnosticsConfig {
    std::size_t grid_samples = 8;
    std::size_t projection_samples = 200;
    std::uint64_t projection_seed = 0;
};

// One JSON document. The model block carries d_z, d_c, the image shape and
// the layer widths; the train block everything else the trainer needs.
struct ExperimentConfig {
    int format_version = kExperimentFormatVersion;
    DatasetSpec dataset;
    std::optional<ImageShape> image; // resize target for folder data; must match benchmark data otherwise
    TrainConfig train;
    ScoreConfig score;
    DiagnosticsConfig diagnostics;
    std::string output_dir = "runs/default";
};

nlohmann::json to_json(const ExperimentConfig& c);
// Throws ConfigError with the dotted field path on any problem.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);
nlohmann::json read_json_file(const std::filesystem::path& path);
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

// The dataset root with the environment override applied.
std::filesystem::path dataset_root(const DatasetSpec& spec);
DatasetHandle load_dataset(const ExperimentConfig& config);
int anomaly_class_of(const DatasetSpec& spec);

// --- run directories -----------------------------------------------------------

struct ManifestIssue {
    std::string path;
    std::string problem;
};

std::string utc_timestamp();
std::string canonical_config_text(const ExperimentConfig& c);
// Rewrites manifest.json: config echo, config hash, seed, history of
// commands with timestamps, and an inventory of every other file in the run
// directory with its SHA-256.
nlohmann::json update_run_manifest(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                                   const std::string& command, const std::string& started_at,
                                   const nlohmann::json& details = nlohmann::json::object());
// Empty when every listed file exists with a matching hash, nothing is
// missing from the inventory, and the config hash matches.
std::vector<ManifestIssue> verify_run_manifest(const std::filesystem::path& run_dir);

// Highest-step checkpoint in the run directory.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);
ExperimentConfig load_run_config(const std::filesystem::path& run_dir);

// Creates (or, with force, recreates) the run directory.
void prepare_run_dir(const std::filesystem::path& run_dir, bool force);

struct TrainRun {
    std::filesystem::path run_dir;
    std::filesystem::path final_checkpoint;
    std::size_t steps = 0;
    std::size_t parameter_count = 0;
};

TrainRun cmd_train(const ExperimentConfig& config, const std::filesystem::path& run_dir, bool force,
                   std::ostream* log = nullptr);

struct EvalRun {
    EvalReport report;
    std::filesystem::path scores_csv;
    std::filesystem::path report_json;
};
EvalRun cmd_eval(const std::filesystem::path& run_dir, const std::string& split = "test");

// Scores a directory of unlabelled images, or the configured test split when
// `images` is empty.
std::filesystem::path cmd_score(const std::filesystem::path& run_dir, const std::filesystem::path& images = {});

struct DiagnosticsRun {
    std::vector<std::filesystem::path> files; // grid, projection CSV/PNG pairs
};
DiagnosticsRun cmd_diagnostics(const std::filesystem::path& run_dir);

struct SweepAxis {
    std::string path;                 // dotted config path
    std::vector<nlohmann::json> values;
};
// "dz=20,50,100" (alias for model.d_z), "dataset.anomaly_class=all", or any
// dotted path with comma-separated values.
SweepAxis parse_sweep(const std::string& text, const ExperimentConfig& base);

struct SweepEntry {
    std::string name;
    nlohmann::json value;
    std::filesystem::path run_dir;
    EvalReport report;
    std::size_t parameter_count = 0;
};
struct SweepResult {
    std::vector<SweepEntry> entries;
    std::map<std::string, double> average_auroc;
    std::filesystem::path summary_csv;
};
// Trains and evaluates one run per axis value under `out_dir`, then writes
// sweep_summary.csv/json with an averages row.
SweepResult cmd_sweep(const ExperimentConfig& base, const SweepAxis& axis, const std::filesystem::path& out_dir,
                      bool force, std::ostream* log = nullptr);

} // namespace dbigan
