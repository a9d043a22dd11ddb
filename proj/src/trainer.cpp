#include "dbigan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dbigan/checkpoint.hpp"
#include "dbigan/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dbigan {

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("train." + field + ": " + why);
    };
    if (batch_size < 2) fail("batch_size", "must be >= 2");
    for (auto [name, lr] : {std::pair{"lr_d", lr_d}, {"lr_g", lr_g}, {"lr_er", lr_er}, {"lr_eg", lr_eg}}) {
        if (!(lr >= 0.0) || !std::isfinite(lr)) fail(name, "must be a finite non-negative number");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std", "must be >= 0");
    if (!(lambda_cyc >= 0.0) || !std::isfinite(lambda_cyc)) fail("lambda_cyc", "must be >= 0");
    if (d_z == 0) fail("d_z", "must be >= 1");
    if (scheme != Scheme::EgbadBaseline && d_c == 0) fail("d_c", "must be >= 1 for the dual-encoder schemes");
    if (checkpoint_every == 0) fail("checkpoint_every", "must be >= 1");
    if (d_steps == 0) fail("d_steps", "must be >= 1");
    if (architecture.base_channels < 2 || architecture.base_channels % 2 != 0) {
        fail("architecture.base_channels", "must be an even number >= 2");
    }
    if (architecture.dense_units == 0) fail("architecture.dense_units", "must be >= 1");
    if (architecture.latent_units == 0) fail("architecture.latent_units", "must be >= 1");
}

AdamConfig TrainConfig::adam_for(NetId id) const {
    AdamConfig a;
    a.beta1 = beta1;
    a.beta2 = beta2;
    switch (id) {
    case NetId::G: a.learning_rate = lr_g; break;
    case NetId::D: a.learning_rate = lr_d; break;
    case NetId::Er: a.learning_rate = lr_er; break;
    case NetId::Eg: a.learning_rate = lr_eg; break;
    }
    return a;
}

json to_json(const TrainConfig& c) {
    return json{{"scheme", to_string(c.scheme)},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr_d", c.lr_d},
                {"lr_g", c.lr_g},
                {"lr_er", c.lr_er},
                {"lr_eg", c.lr_eg},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"noise_std", c.noise_std},
                {"lambda_cyc", c.lambda_cyc},
                {"d_z", c.d_z},
                {"d_c", c.d_c},
                {"seed", c.seed},
                {"checkpoint_every", c.checkpoint_every},
                {"d_steps", c.d_steps},
                {"init", to_string(c.init)},
                {"architecture",
                 {{"base_channels", c.architecture.base_channels},
                  {"dense_units", c.architecture.dense_units},
                  {"latent_units", c.architecture.latent_units},
                  {"encoder_g_conditioned", c.architecture.encoder_g_conditioned}}}};
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& prefix) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(prefix + key + ": wrong type (" + e.what() + ")");
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& prefix) {
    if (!j.is_object()) throw ConfigError(prefix + ": expected an object");
    const std::set<std::string> names(known.begin(), known.end());
    for (const auto& [k, v] : j.items()) {
        if (!names.count(k)) throw ConfigError(prefix + (prefix.empty() ? "" : ".") + k + ": unknown field");
    }
}

} // namespace

TrainConfig train_config_from_json(const json& j) {
    reject_unknown(j,
                   {"scheme", "epochs", "batch_size", "lr_d", "lr_g", "lr_er", "lr_eg", "beta1", "beta2",
                    "noise_std", "lambda_cyc", "d_z", "d_c", "seed", "checkpoint_every", "d_steps", "init",
                    "architecture"},
                   "train");
    TrainConfig c;
    const std::string p = "train.";
    if (j.contains("scheme")) {
        if (!j["scheme"].is_string()) throw ConfigError("train.scheme: expected a string");
        try {
            c.scheme = parse_scheme(j["scheme"].get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("train.scheme: ") + e.what());
        }
    }
    read_field(j, "epochs", c.epochs, p);
    read_field(j, "batch_size", c.batch_size, p);
    read_field(j, "lr_d", c.lr_d, p);
    read_field(j, "lr_g", c.lr_g, p);
    read_field(j, "lr_er", c.lr_er, p);
    read_field(j, "lr_eg", c.lr_eg, p);
    read_field(j, "beta1", c.beta1, p);
    read_field(j, "beta2", c.beta2, p);
    read_field(j, "noise_std", c.noise_std, p);
    read_field(j, "lambda_cyc", c.lambda_cyc, p);
    read_field(j, "d_z", c.d_z, p);
    read_field(j, "d_c", c.d_c, p);
    read_field(j, "seed", c.seed, p);
    read_field(j, "checkpoint_every", c.checkpoint_every, p);
    read_field(j, "d_steps", c.d_steps, p);
    if (j.contains("init")) {
        try {
            c.init = parse_init_scheme(j["init"].get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("train.init: ") + e.what());
        }
    }
    if (j.contains("architecture")) {
        const json& a = j["architecture"];
        reject_unknown(a, {"base_channels", "dense_units", "latent_units", "encoder_g_conditioned"},
                       "train.architecture");
        const std::string pa = "train.architecture.";
        read_field(a, "base_channels", c.architecture.base_channels, pa);
        read_field(a, "dense_units", c.architecture.dense_units, pa);
        read_field(a, "latent_units", c.architecture.latent_units, pa);
        read_field(a, "encoder_g_conditioned", c.architecture.encoder_g_conditioned, pa);
    }
    c.validate();
    return c;
}

std::vector<NetworkConfig> network_configs_for(const TrainConfig& c, const ImageShape& image) {
    ArchitectureOptions arch = c.architecture;
    arch.dual_encoder = c.scheme != Scheme::EgbadBaseline;
    const std::size_t d_c = arch.dual_encoder ? c.d_c : 0;
    return default_network_configs(image, c.d_z, d_c, arch);
}

ModelState initial_state(const TrainConfig& c, const ImageShape& image) {
    c.validate();
    return build_networks(network_configs_for(c, image), c.seed, c.init);
}

std::vector<std::string> metrics_columns() {
    std::vector<std::string> cols{"step", "epoch"};
    for (const auto& n : loss_names()) cols.push_back(n);
    cols.push_back("seconds");
    return cols;
}

std::string metrics_csv_line(const MetricsRow& row) {
    std::ostringstream os;
    os.precision(9);
    os << row.step << ',' << row.epoch;
    for (double v : loss_values(row.losses)) os << ',' << v;
    os << ',' << row.seconds;
    return os.str();
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    return std::mt19937_64(seq);
}

namespace {

void check_losses(const LossBundle& b, std::uint64_t step) {
    const auto names = loss_names();
    const auto values = loss_values(b);
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError("non-finite loss term '" + names[i] + "' at step " + std::to_string(step + 1));
        }
    }
}

void check_gradients(const Gradients& g, NetId id, std::uint64_t step) {
    for (const Tensor& t : g.of(id)) {
        if (!t.all_finite()) {
            throw NumericError("non-finite gradient for " + to_string(id) + " at step " + std::to_string(step + 1));
        }
    }
}

void apply_update(ModelState& s, Gradients& g, NetId id, const TrainConfig& c) {
    check_gradients(g, id, s.step);
    const auto& grads = g.of(id);
    adam_update(s.net(id).parameters(), s.optim[index_of(id)], grads, c.adam_for(id));
}

void notify(const StepObserver& observer, std::string_view phase, const ModelState& s) {
    if (observer) observer(phase, s);
}

void discriminator_updates(ModelState& state, const Tensor& batch, const TrainConfig& config, std::mt19937_64& rng,
                           const LossDraw& first, LossBundle& bundle, bool baseline) {
    for (std::size_t k = 0; k < config.d_steps; ++k) {
        // Extra discriminator updates (d_steps > 1) use fresh draws on the same batch.
        const LossDraw draw = k == 0 ? first
                                     : draw_loss_inputs(batch, state.d_z(), state.d_c(), config.noise_std,
                                                        config.scheme, rng);
        Gradients g(state, {NetId::D});
        autograd::Var loss = baseline ? egbad_discriminator_objective(state, &g, draw, bundle)
                                      : discriminator_objective(state, &g, draw, bundle);
        check_losses(bundle, state.step);
        autograd::backward(loss);
        apply_update(state, g, NetId::D, config);
    }
}

} // namespace

MetricsRow train_step(ModelState& state, const Tensor& batch, const TrainConfig& config, std::mt19937_64& rng,
                      const StepObserver& observer) {
    for (NetId id : kAllNets) {
        if (!state.has(id)) continue;
        for (const auto& p : state.net(id).parameters()) {
            if (!p.value.all_finite()) throw NumericError("non-finite parameter " + p.name + " before step");
        }
    }
    if (config.scheme == Scheme::EgbadBaseline) return egbad_baseline_step(state, batch, config, rng, observer);
    if (!state.has(NetId::Eg)) throw ConfigError("train_step: model has no E_g; use the baseline scheme");
    check_image_batch(state, batch);
    const auto t0 = std::chrono::steady_clock::now();
    MetricsRow row;
    const LossDraw draw = draw_loss_inputs(batch, state.d_z(), state.d_c(), config.noise_std, config.scheme, rng);

    discriminator_updates(state, batch, config, rng, draw, row.losses, false);
    notify(observer, "D", state);

    // Both encoders see the same post-D state.
    Gradients ger(state, {NetId::Er});
    Gradients geg(state, {NetId::Eg});
    autograd::Var loss_er = encoder_r_objective(state, &ger, draw, row.losses);
    autograd::Var loss_eg = encoder_g_objective(state, &geg, draw, row.losses);
    check_losses(row.losses, state.step);
    autograd::backward(loss_er);
    autograd::backward(loss_eg);
    apply_update(state, ger, NetId::Er, config);
    apply_update(state, geg, NetId::Eg, config);
    notify(observer, "E", state);

    const LossWeights weights{config.lambda_cyc};
    Gradients gg(state, {NetId::G});
    autograd::Var loss_g = generator_objective(state, &gg, draw, config.scheme, weights, row.losses);
    check_losses(row.losses, state.step);
    autograd::backward(loss_g);
    apply_update(state, gg, NetId::G, config);
    notify(observer, "G", state);

    state.step += 1;
    row.step = state.step;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

MetricsRow egbad_baseline_step(ModelState& state, const Tensor& batch, const TrainConfig& config,
                               std::mt19937_64& rng, const StepObserver& observer) {
    if (state.has(NetId::Eg) || state.d_c() != 0) {
        throw ConfigError("baseline step expects a single-encoder model without targets");
    }
    check_image_batch(state, batch);
    const auto t0 = std::chrono::steady_clock::now();
    MetricsRow row;
    const LossDraw draw = draw_loss_inputs(batch, state.d_z(), 0, config.noise_std, Scheme::EgbadBaseline, rng);

    discriminator_updates(state, batch, config, rng, draw, row.losses, true);
    notify(observer, "D", state);

    Gradients g(state, {NetId::G, NetId::Er});
    autograd::Var loss = egbad_generator_encoder_objective(state, &g, draw, row.losses);
    check_losses(row.losses, state.step);
    autograd::backward(loss);
    apply_update(state, g, NetId::G, config);
    apply_update(state, g, NetId::Er, config);
    notify(observer, "GE", state);

    state.step += 1;
    row.step = state.step;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size) {
    if (samples == 0) return 0;
    // Trailing partial batches are dropped; a set smaller than one batch is used whole.
    return std::max<std::size_t>(1, samples / batch_size);
}

Tensor batch_for_step(const Dataset& data, const TrainConfig& config, std::uint64_t step) {
    const std::size_t spe = steps_per_epoch(data.size(), config.batch_size);
    if (spe == 0) throw ConfigError("training dataset is empty");
    const std::uint64_t epoch = step / spe;
    const std::size_t pos = static_cast<std::size_t>(step % spe);
    const auto order = shuffled_order(data.size(), config.seed, epoch);
    const std::size_t take = std::min(config.batch_size, data.size());
    return data.images.gather_batch(std::span<const std::size_t>(order).subspan(pos * take, take));
}

namespace {

// Caches the epoch permutation so each step does not reshuffle.
class StepBatches {
public:
    StepBatches(const Dataset& data, const TrainConfig& config)
        : data_(data), config_(config), spe_(steps_per_epoch(data.size(), config.batch_size)) {}

    std::size_t per_epoch() const { return spe_; }

    Tensor get(std::uint64_t step) {
        const std::uint64_t epoch = step / spe_;
        if (!cached_ || epoch != epoch_) {
            order_ = shuffled_order(data_.size(), config_.seed, epoch);
            epoch_ = epoch;
            cached_ = true;
        }
        const std::size_t take = std::min(config_.batch_size, data_.size());
        const std::size_t pos = static_cast<std::size_t>(step % spe_);
        return data_.images.gather_batch(std::span<const std::size_t>(order_).subspan(pos * take, take));
    }

private:
    const Dataset& data_;
    const TrainConfig& config_;
    std::size_t spe_;
    std::vector<std::size_t> order_;
    std::uint64_t epoch_ = 0;
    bool cached_ = false;
};

} // namespace

TrainResult resume(ModelState state, const Dataset& data, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    if (data.size() == 0) throw ConfigError("training dataset is empty");
    if (!(data.shape == state.image())) throw ConfigError("dataset image shape does not match the model");
    StepBatches batches(data, config);
    std::uint64_t total = static_cast<std::uint64_t>(config.epochs) * batches.per_epoch();
    if (options.max_steps) total = std::min(total, *options.max_steps);

    TrainResult result;
    std::ofstream metrics;
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        const fs::path path = options.out_dir / "metrics.csv";
        const bool append = options.append_metrics && fs::exists(path);
        metrics.open(path, append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw IoError("cannot open " + path.string() + " for writing");
        if (!append) {
            const auto cols = metrics_columns();
            for (std::size_t i = 0; i < cols.size(); ++i) metrics << (i ? "," : "") << cols[i];
            metrics << '\n';
        }
    }

    const json extra{{"train_config", to_json(config)}};
    auto write_checkpoint = [&](const ModelState& s) {
        const fs::path path = options.out_dir / checkpoint_filename(s.step);
        metrics.flush();
        try {
            save_checkpoint(path, s, extra);
        } catch (const std::exception& e) {
            const std::string last = result.checkpoints.empty() ? std::string("none")
                                                                : result.checkpoints.back().string();
            throw IoError("checkpoint write failed at step " + std::to_string(s.step) + " (" + e.what() +
                          "); last good checkpoint: " + last);
        }
        result.checkpoints.push_back(path);
    };

    while (state.step < total) {
        const std::uint64_t step = state.step;
        std::mt19937_64 rng = step_rng(config.seed, step);
        MetricsRow row = train_step(state, batches.get(step), config, rng, options.observer);
        row.epoch = step / batches.per_epoch();
        if (metrics.is_open()) {
            metrics << metrics_csv_line(row) << '\n';
            if (!metrics) throw IoError("metrics write failed at step " + std::to_string(row.step));
        }
        if (options.on_step) options.on_step(row);
        result.metrics.push_back(row);
        if (!options.out_dir.empty() && (state.step % config.checkpoint_every == 0 || state.step == total)) {
            write_checkpoint(state);
        }
    }
    if (metrics.is_open()) metrics.flush();
    result.state = std::move(state);
    return result;
}

TrainResult train(const Dataset& data, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    if (data.size() == 0) throw ConfigError("training dataset is empty");
    return resume(initial_state(config, data.shape), data, config, options);
}

} // namespace dbigan
