#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dbigan/data.hpp"
#include "dbigan/losses.hpp"
#include "dbigan/nets.hpp"
#include "dbigan/optimizer.hpp"

namespace dbigan {

struct TrainConfig {
    Scheme scheme = Scheme::Complete;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double lr_d = 2e-4;
    double lr_g = 2e-4;
    double lr_er = 2e-4;
    double lr_eg = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double noise_std = 0.05;
    double lambda_cyc = 0.1;
    std::size_t d_z = 20;
    std::size_t d_c = 2;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 500; // steps
    std::size_t d_steps = 1;            // discriminator updates per step
    InitScheme init = InitScheme::Normal002;
    ArchitectureOptions architecture;

    // Throws ConfigError naming the offending field.
    void validate() const;
    AdamConfig adam_for(NetId id) const;
};

nlohmann::json to_json(const TrainConfig& c);
// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Network stacks for a config. The baseline scheme drops E_g and the target.
std::vector<NetworkConfig> network_configs_for(const TrainConfig& c, const ImageShape& image);
ModelState initial_state(const TrainConfig& c, const ImageShape& image);

struct MetricsRow {
    std::uint64_t step = 0; // global step after the update, starting at 1
    std::uint64_t epoch = 0;
    LossBundle losses;
    double seconds = 0.0;
};

std::vector<std::string> metrics_columns();
std::string metrics_csv_line(const MetricsRow& row);

// Called after each sub-update with its name ("D", "E", "G", or "GE" for the
// baseline's joint update).
using StepObserver = std::function<void(std::string_view phase, const ModelState&)>;

// Random stream for one global step; depends only on (seed, step).
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step);

// One update of every network, in place. D first, then E_r and E_g from the
// same state, then G. Throws NumericError naming a non-finite term.
MetricsRow train_step(ModelState& state, const Tensor& batch, const TrainConfig& config, std::mt19937_64& rng,
                      const StepObserver& observer = {});
// Single-encoder alternation: D, then G and E jointly.
MetricsRow egbad_baseline_step(ModelState& state, const Tensor& batch, const TrainConfig& config,
                               std::mt19937_64& rng, const StepObserver& observer = {});

struct TrainOptions {
    std::filesystem::path out_dir; // empty: nothing is written
    std::optional<std::uint64_t> max_steps;
    StepObserver observer;
    std::function<void(const MetricsRow&)> on_step;
    bool append_metrics = false;
};

struct TrainResult {
    ModelState state;
    std::vector<MetricsRow> metrics;
    std::vector<std::filesystem::path> checkpoints;
};

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size);

// Batch of normal training images for a global step (0-based).
Tensor batch_for_step(const Dataset& data, const TrainConfig& config, std::uint64_t step);

// Trains on `data`, which must hold only normal samples.
TrainResult train(const Dataset& data, const TrainConfig& config, const TrainOptions& options = {});
// Continues from `state.step` up to the configured epochs (or max_steps).
TrainResult resume(ModelState state, const Dataset& data, const TrainConfig& config,
                   const TrainOptions& options = {});

} // namespace dbigan
