#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dbigan/autograd.hpp"
#include "dbigan/layers.hpp"
#include "dbigan/tensor.hpp"

namespace dbigan {

// Clamp applied to discriminator probabilities before any log.
inline constexpr double kProbEpsilon = 1e-7;

struct ImageShape {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 1;

    // height, width >= 4 and channels in {1, 3}.
    void validate() const;
    std::size_t pixels() const { return height * width * channels; }
    Dims dims() const { return Dims{height, width, channels}; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

enum class NetId : std::size_t { G = 0, D = 1, Er = 2, Eg = 3 };
inline constexpr std::array<NetId, 4> kAllNets{NetId::G, NetId::D, NetId::Er, NetId::Eg};

std::string to_string(NetId id);
NetId parse_net_id(const std::string& s);
constexpr std::size_t index_of(NetId id) { return static_cast<std::size_t>(id); }

enum class TargetKind { Real, Random };

// Conditioning vectors c. Real targets are the constant c_x = (1, 0, ..., 0);
// random targets are elementwise uniform on [0, 1].
struct TargetVariable {
    Tensor data; // (batch, d_c); empty when the model is unconditioned
    TargetKind kind = TargetKind::Real;
};

TargetVariable real_target(std::size_t batch, std::size_t d_c);
TargetVariable random_target(std::size_t batch, std::size_t d_c, std::mt19937_64& rng);

// Layer stacks for one network. For D, `layers` is the image pathway,
// `latent_layers` the code pathway, and `joint_layers` runs on their
// concatenation; its last layer must be a single-unit dense logit, and the
// output of the layer before it is D's feature vector.
struct NetworkConfig {
    NetId id = NetId::G;
    std::vector<LayerSpec> layers;
    std::vector<LayerSpec> latent_layers;
    std::vector<LayerSpec> joint_layers;
    std::size_t d_z = 20;
    std::size_t d_c = 2;
    ImageShape image;
    // G and E_r take c when d_c > 0. E_g takes c only with this override.
    bool conditioned = true;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ArchitectureOptions {
    std::size_t base_channels = 64;
    std::size_t dense_units = 1024;
    std::size_t latent_units = 512;
    bool dual_encoder = true;           // false builds the single-encoder BiGAN baseline
    bool encoder_g_conditioned = false;
};

// Default stacks patterned on the BiGAN anomaly-detection networks: dense and
// transposed convolutions for G, strided convolutions for the encoders, and a
// joint image/code discriminator. Height and width must be multiples of 4.
std::vector<NetworkConfig> default_network_configs(const ImageShape& image, std::size_t d_z, std::size_t d_c,
                                                   const ArchitectureOptions& options = {});

class Network {
public:
    Network() = default;
    // Validates the stacks against the network's role; throws ConfigError.
    explicit Network(NetworkConfig config);

    const NetworkConfig& config() const { return config_; }
    NetId id() const { return config_.id; }

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    std::size_t parameter_count() const; // scalar count

    // Main stack (G, E_r, E_g; D image pathway).
    const Sequential& main() const { return stacks_.at(0); }
    // D only.
    const Sequential& latent() const { return stacks_.at(1); }
    const Sequential& joint() const { return stacks_.at(2); }
    const Sequential& head() const { return stacks_.at(3); }

    // Whether the network consumes a target vector.
    bool takes_target() const;
    std::size_t input_features() const;

    void initialize(std::mt19937_64& rng, double weight_std);
    // Weight std gain / sqrt(fan_in), the gain matching the layer's activation.
    void initialize_fan_in(std::mt19937_64& rng);

private:
    NetworkConfig config_;
    std::vector<Sequential> stacks_;
    std::vector<Parameter> params_;
};

// Adaptive-moment optimizer state for one network.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t t = 0;
};

struct ModelState {
    std::array<std::optional<Network>, 4> nets;
    std::array<AdamState, 4> optim;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;

    bool has(NetId id) const { return nets[index_of(id)].has_value(); }
    Network& net(NetId id);
    const Network& net(NetId id) const;

    std::size_t d_z() const;
    std::size_t d_c() const;
    ImageShape image() const;
    std::vector<NetworkConfig> configs() const;
    std::size_t parameter_count() const;

    // Sets every parameter to zero; used by identity/zero-case tests.
    void zero_parameters();
};

// Initialization: zero-mean Gaussian weights with this std, zero biases.
inline constexpr double kInitStd = 0.02;

// Weight initialization. Both draw zero-mean Gaussians with zero biases;
// FanIn scales the std per layer so activations keep their magnitude through
// stacks without normalization layers.
enum class InitScheme { Normal002, FanIn };
std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

// Same configs and seed give bit-identical parameters. Parameters are rounded
// to binary32 so checkpoints round-trip exactly.
ModelState build_networks(const std::vector<NetworkConfig>& configs, std::uint64_t seed,
                          InitScheme init = InitScheme::Normal002);

// Rounds every element to the nearest binary32 value.
void round_to_float(Tensor& t);

// --- Plain forward evaluation (read-only on the state) ---------------------

// Images in [-1, 1], shape (batch, H, W, C).
Tensor generator_forward(const ModelState& state, const Tensor& z, const TargetVariable& c);

struct DiscriminatorOutput {
    Tensor probability; // (batch), clamped to [eps, 1 - eps]
    Tensor logits;      // (batch, 1)
    Tensor features;    // (batch, F) penultimate joint activations
};
DiscriminatorOutput discriminator_evaluate(const ModelState& state, const Tensor& x, const Tensor& z);
// Probabilities strictly inside (0, 1).
Tensor discriminator_forward(const ModelState& state, const Tensor& x, const Tensor& z);

Tensor encoder_r_forward(const ModelState& state, const Tensor& x, const TargetVariable& c);
Tensor encoder_g_forward(const ModelState& state, const Tensor& x,
                         const TargetVariable* c = nullptr);

// --- Graph construction for training ---------------------------------------

// Parameter gradient buffers for the networks a loss is allowed to update.
class Gradients {
public:
    Gradients(const ModelState& state, std::initializer_list<NetId> tracked);

    bool tracked(NetId id) const { return !grads_[index_of(id)].empty(); }
    // Empty span for untracked networks.
    std::span<Tensor> sink(NetId id) { return grads_[index_of(id)]; }
    const std::vector<Tensor>& of(NetId id) const { return grads_[index_of(id)]; }
    double squared_norm(NetId id) const;

private:
    std::array<std::vector<Tensor>, 4> grads_;
};

// `grads` may be null, in which case no parameter gradients are collected.
autograd::Var generator_graph(const ModelState& state, Gradients* grads, const autograd::Var& z,
                              const autograd::Var& c);
struct DiscriminatorGraph {
    autograd::Var logits;
    autograd::Var features;
};
DiscriminatorGraph discriminator_graph(const ModelState& state, Gradients* grads, const autograd::Var& x,
                                       const autograd::Var& z);
autograd::Var encoder_r_graph(const ModelState& state, Gradients* grads, const autograd::Var& x,
                              const autograd::Var& c);
autograd::Var encoder_g_graph(const ModelState& state, Gradients* grads, const autograd::Var& x,
                              const autograd::Var& c);

// Checks a batch of images against the model's image shape and [-1, 1].
void check_image_batch(const ModelState& state, const Tensor& x);

} // namespace dbigan
