#include "dbigan/nets.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dbigan/error.hpp"

namespace dbigan {

using autograd::Var;

void ImageShape::validate() const {
    if (height < 4 || width < 4) throw ConfigError("image height and width must be at least 4");
    if (channels != 1 && channels != 3) throw ConfigError("image channels must be 1 or 3");
}

std::string to_string(NetId id) {
    switch (id) {
    case NetId::G: return "G";
    case NetId::D: return "D";
    case NetId::Er: return "E_r";
    case NetId::Eg: return "E_g";
    }
    return "?";
}

NetId parse_net_id(const std::string& s) {
    for (NetId id : kAllNets)
        if (to_string(id) == s) return id;
    throw ConfigError("unknown network id '" + s + "'");
}

TargetVariable real_target(std::size_t batch, std::size_t d_c) {
    TargetVariable t;
    t.kind = TargetKind::Real;
    if (d_c == 0) return t;
    t.data = Tensor(Shape{batch, d_c});
    for (std::size_t i = 0; i < batch; ++i) t.data[i * d_c] = 1.0;
    return t;
}

TargetVariable random_target(std::size_t batch, std::size_t d_c, std::mt19937_64& rng) {
    TargetVariable t;
    t.kind = TargetKind::Random;
    if (d_c == 0) return t;
    t.data = Tensor(Shape{batch, d_c});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : t.data.values()) v = u(rng);
    return t;
}

std::vector<NetworkConfig> default_network_configs(const ImageShape& image, std::size_t d_z, std::size_t d_c,
                                                   const ArchitectureOptions& o) {
    image.validate();
    if (image.height % 4 != 0 || image.width % 4 != 0) {
        throw ConfigError("default architecture needs image height and width divisible by 4");
    }
    if (d_z == 0) throw ConfigError("d_z must be at least 1");
    if (o.base_channels < 2 || o.dense_units == 0 || o.latent_units == 0) {
        throw ConfigError("architecture widths must be positive (base_channels >= 2)");
    }
    const std::size_t b = o.base_channels;
    const std::size_t dc = o.dual_encoder ? d_c : 0;
    if (o.dual_encoder && dc == 0) throw ConfigError("the dual-encoder model needs d_c >= 1");
    const Dims seed_dims{image.height / 4, image.width / 4, 2 * b};
    const auto lrelu = Activation::LeakyReLU;

    NetworkConfig g;
    g.id = NetId::G;
    g.layers = {dense(o.dense_units, Activation::ReLU), dense(seed_dims.size(), Activation::ReLU, seed_dims),
                conv_transpose(b, 4, 2, 1, Activation::ReLU), conv_transpose(image.channels, 4, 2, 1, Activation::Tanh)};

    NetworkConfig er;
    er.id = NetId::Er;
    er.layers = {conv(b / 2, 3, 1, 1, lrelu), conv(b, 4, 2, 1, lrelu), conv(2 * b, 4, 2, 1, lrelu),
                 dense(d_z, Activation::Identity)};

    NetworkConfig d;
    d.id = NetId::D;
    d.layers = {conv(b, 4, 2, 1, lrelu), conv(b, 4, 2, 1, lrelu)};
    d.latent_layers = {dense(o.latent_units, lrelu)};
    d.joint_layers = {dense(o.dense_units, lrelu), dense(1, Activation::Identity)};

    std::vector<NetworkConfig> out;
    for (NetworkConfig* c : {&g, &d, &er}) {
        c->d_z = d_z;
        c->d_c = dc;
        c->image = image;
        c->conditioned = dc > 0;
        out.push_back(*c);
    }
    out[1].conditioned = false;
    if (o.dual_encoder) {
        NetworkConfig eg = er;
        eg.id = NetId::Eg;
        eg.conditioned = o.encoder_g_conditioned;
        out.push_back(eg);
    }
    return out;
}

Network::Network(NetworkConfig config) : config_(std::move(config)) {
    config_.image.validate();
    const std::string n = to_string(config_.id);
    if (config_.d_z == 0) throw ConfigError(n + ": d_z must be at least 1");
    const Dims image = config_.image.dims();
    switch (config_.id) {
    case NetId::G: {
        stacks_.emplace_back(n, Dims{1, 1, input_features()}, config_.layers);
        const Sequential& s = stacks_.back();
        if (s.output_dims() != image) throw ConfigError("G: output geometry does not match the image shape");
        if (config_.layers.back().activation != Activation::Tanh) {
            throw ConfigError("G: final activation must be tanh to bound images to [-1, 1]");
        }
        break;
    }
    case NetId::Er:
    case NetId::Eg: {
        Dims in = image;
        in.channels += takes_target() ? config_.d_c : 0;
        stacks_.emplace_back(n, in, config_.layers);
        if (stacks_.back().output_dims().size() != config_.d_z) {
            throw ConfigError(n + ": encoder output width must equal d_z");
        }
        break;
    }
    case NetId::D: {
        if (config_.latent_layers.empty() || config_.joint_layers.size() < 2) {
            throw ConfigError("D: needs a latent pathway and at least two joint layers");
        }
        stacks_.emplace_back(n + ".image", image, config_.layers);
        stacks_.emplace_back(n + ".latent", Dims{1, 1, config_.d_z}, config_.latent_layers);
        const std::size_t joint_in = stacks_[0].output_dims().size() + stacks_[1].output_dims().size();
        std::vector<LayerSpec> hidden(config_.joint_layers.begin(), config_.joint_layers.end() - 1);
        const LayerSpec& logit = config_.joint_layers.back();
        if (logit.kind != LayerKind::Dense || logit.units != 1 || logit.activation != Activation::Identity) {
            throw ConfigError("D: last joint layer must be a single-unit dense logit");
        }
        stacks_.emplace_back(n + ".joint", Dims{1, 1, joint_in}, hidden);
        stacks_.emplace_back(n + ".head", Dims{1, 1, stacks_[2].output_dims().size()}, std::vector<LayerSpec>{logit});
        break;
    }
    }
    for (auto& s : stacks_) s.append_parameters(params_);
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

bool Network::takes_target() const {
    if (config_.id == NetId::D) return false;
    return config_.conditioned && config_.d_c > 0;
}

std::size_t Network::input_features() const {
    switch (config_.id) {
    case NetId::G: return config_.d_z + (takes_target() ? config_.d_c : 0);
    case NetId::D: return config_.image.pixels() + config_.d_z;
    case NetId::Er:
    case NetId::Eg: return config_.image.pixels();
    }
    return 0;
}

void round_to_float(Tensor& t) {
    for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void Network::initialize(std::mt19937_64& rng, double weight_std) {
    std::normal_distribution<double> normal(0.0, weight_std);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& t = params_[i].value;
        // Parameters alternate weight, bias.
        if (i % 2 == 0) {
            for (auto& v : t.values()) v = normal(rng);
            round_to_float(t);
        } else {
            t.fill(0.0);
        }
    }
}

void Network::initialize_fan_in(std::mt19937_64& rng) {
    std::size_t i = 0;
    for (const auto& stack : stacks_) {
        for (const auto& spec : stack.specs()) {
            Tensor& w = params_[i].value;
            const Shape& sh = w.shape();
            double fan_in = 0.0;
            switch (spec.kind) {
            case LayerKind::Dense: fan_in = static_cast<double>(sh[0]); break;
            case LayerKind::Conv: fan_in = static_cast<double>(sh[0] * sh[1] * sh[2]); break;
            // Each output of a strided transpose receives about k^2 / s^2 taps per input channel.
            case LayerKind::ConvTranspose:
                fan_in = static_cast<double>(sh[0] * sh[1] * sh[3]) / static_cast<double>(spec.stride * spec.stride);
                break;
            }
            double gain = 1.0;
            if (spec.activation == Activation::ReLU) gain = std::sqrt(2.0);
            if (spec.activation == Activation::LeakyReLU) gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
            std::normal_distribution<double> normal(0.0, gain / std::sqrt(std::max(fan_in, 1.0)));
            for (auto& v : w.values()) v = normal(rng);
            round_to_float(w);
            params_[i + 1].value.fill(0.0);
            i += 2;
        }
    }
}

std::string to_string(InitScheme s) { return s == InitScheme::Normal002 ? "normal_0.02" : "fan_in"; }

InitScheme parse_init_scheme(const std::string& s) {
    if (s == "normal_0.02") return InitScheme::Normal002;
    if (s == "fan_in") return InitScheme::FanIn;
    throw ConfigError("unknown init scheme '" + s + "' (expected normal_0.02 or fan_in)");
}

Network& ModelState::net(NetId id) {
    auto& n = nets[index_of(id)];
    if (!n) throw ConfigError("model has no " + to_string(id) + " network");
    return *n;
}

const Network& ModelState::net(NetId id) const {
    const auto& n = nets[index_of(id)];
    if (!n) throw ConfigError("model has no " + to_string(id) + " network");
    return *n;
}

std::size_t ModelState::d_z() const { return net(NetId::G).config().d_z; }

std::size_t ModelState::d_c() const {
    const Network& g = net(NetId::G);
    return g.takes_target() ? g.config().d_c : 0;
}

ImageShape ModelState::image() const { return net(NetId::G).config().image; }

std::vector<NetworkConfig> ModelState::configs() const {
    std::vector<NetworkConfig> out;
    for (const auto& n : nets)
        if (n) out.push_back(n->config());
    return out;
}

std::size_t ModelState::parameter_count() const {
    std::size_t total = 0;
    for (const auto& n : nets)
        if (n) total += n->parameter_count();
    return total;
}

void ModelState::zero_parameters() {
    for (auto& n : nets)
        if (n)
            for (auto& p : n->parameters()) p.value.fill(0.0);
}

ModelState build_networks(const std::vector<NetworkConfig>& configs, std::uint64_t seed, InitScheme init) {
    ModelState state;
    state.seed = seed;
    std::set<NetId> seen;
    for (const auto& c : configs) {
        if (!seen.insert(c.id).second) throw ConfigError("duplicate config for " + to_string(c.id));
    }
    for (NetId required : {NetId::G, NetId::D, NetId::Er}) {
        if (!seen.count(required)) throw ConfigError("missing config for " + to_string(required));
    }
    const NetworkConfig& ref = configs.front();
    for (const auto& c : configs) {
        if (c.d_z != ref.d_z || c.d_c != ref.d_c || !(c.image == ref.image)) {
            throw ConfigError("network configs disagree on d_z, d_c or image shape");
        }
    }
    for (const auto& c : configs) {
        Network net(c);
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index_of(c.id) + 1)};
        std::mt19937_64 rng(seq);
        if (init == InitScheme::FanIn) net.initialize_fan_in(rng);
        else net.initialize(rng, kInitStd);
        AdamState& opt = state.optim[index_of(c.id)];
        for (const auto& p : net.parameters()) {
            opt.m.emplace_back(p.value.shape());
            opt.v.emplace_back(p.value.shape());
        }
        state.nets[index_of(c.id)] = std::move(net);
    }
    if (state.has(NetId::G) && state.has(NetId::Er) &&
        state.net(NetId::G).takes_target() != state.net(NetId::Er).takes_target()) {
        throw ConfigError("G and E_r must agree on conditioning");
    }
    return state;
}

// --- graphs -----------------------------------------------------------------

Gradients::Gradients(const ModelState& state, std::initializer_list<NetId> tracked) {
    for (NetId id : tracked) {
        if (!state.has(id)) continue;
        auto& g = grads_[index_of(id)];
        for (const auto& p : state.net(id).parameters()) g.emplace_back(p.value.shape());
    }
}

double Gradients::squared_norm(NetId id) const {
    double s = 0.0;
    for (const auto& t : grads_[index_of(id)])
        for (double v : t.values()) s += v * v;
    return s;
}

namespace {

std::span<Tensor> sink_of(Gradients* grads, NetId id) { return grads ? grads->sink(id) : std::span<Tensor>{}; }

std::span<const Parameter> params_of(const ModelState& s, NetId id) { return s.net(id).parameters(); }

Var as_image(const ModelState& state, const Var& x) {
    const ImageShape img = state.image();
    const Tensor& v = x.value();
    if (v.sample_size() != img.pixels()) {
        throw ConfigError("image batch " + shape_string(v.shape()) + " does not match image shape " +
                          std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                          std::to_string(img.channels));
    }
    if (v.rank() == 4) return x;
    return autograd::reshape(x, Shape{v.batch(), img.height, img.width, img.channels});
}

void check_target(const Network& net, const Var& c, std::size_t batch) {
    if (!net.takes_target()) return;
    if (!c.defined() || c.value().empty()) throw ConfigError(to_string(net.id()) + " needs a target vector");
    if (c.value().batch() != batch) throw ConfigError(to_string(net.id()) + ": target batch size mismatch");
    if (c.value().sample_size() != net.config().d_c) {
        throw ConfigError(to_string(net.id()) + ": target width must equal d_c");
    }
}

Var encoder_graph(const ModelState& state, NetId id, Gradients* grads, const Var& x, const Var& c) {
    const Network& net = state.net(id);
    Var img = as_image(state, x);
    check_target(net, c, img.value().batch());
    Var in = net.takes_target() ? autograd::concat_channels(img, c) : img;
    return autograd::apply(net.main(), params_of(state, id), sink_of(grads, id), in);
}

void require_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw NumericError(what + " produced non-finite values");
}

Var constant_target(const TargetVariable& c) { return Var::constant(c.data); }

// ReLU maps NaN to 0, so a corrupt weight can hide behind finite outputs.
void require_finite_parameters(const ModelState& state, NetId id) {
    for (const auto& p : state.net(id).parameters()) {
        if (!p.value.all_finite()) throw NumericError(to_string(id) + ": non-finite parameter " + p.name);
    }
}

} // namespace

Var generator_graph(const ModelState& state, Gradients* grads, const Var& z, const Var& c) {
    const Network& g = state.net(NetId::G);
    const Tensor& zv = z.value();
    if (zv.sample_size() != g.config().d_z) {
        throw ConfigError("G: latent width " + std::to_string(zv.sample_size()) + " != d_z " +
                          std::to_string(g.config().d_z));
    }
    check_target(g, c, zv.batch());
    Var in = g.takes_target() ? autograd::concat_features(z, c) : z;
    Var out = autograd::apply(g.main(), params_of(state, NetId::G), sink_of(grads, NetId::G), in);
    const ImageShape img = g.config().image;
    return autograd::reshape(out, Shape{zv.batch(), img.height, img.width, img.channels});
}

DiscriminatorGraph discriminator_graph(const ModelState& state, Gradients* grads, const Var& x, const Var& z) {
    const Network& d = state.net(NetId::D);
    Var img = as_image(state, x);
    const std::size_t batch = img.value().batch();
    if (z.value().batch() != batch) throw ConfigError("D: image and latent batch sizes differ");
    if (z.value().sample_size() != d.config().d_z) throw ConfigError("D: latent width must equal d_z");
    auto params = params_of(state, NetId::D);
    auto sink = sink_of(grads, NetId::D);
    Var img_feat = autograd::apply(d.main(), params, sink, img);
    Var code_feat = autograd::apply(d.latent(), params, sink, z);
    Var joint = autograd::concat_features(img_feat, code_feat);
    Var features = autograd::apply(d.joint(), params, sink, joint);
    Var logits = autograd::apply(d.head(), params, sink, features);
    return {logits, features};
}

Var encoder_r_graph(const ModelState& state, Gradients* grads, const Var& x, const Var& c) {
    return encoder_graph(state, NetId::Er, grads, x, c);
}

Var encoder_g_graph(const ModelState& state, Gradients* grads, const Var& x, const Var& c) {
    return encoder_graph(state, NetId::Eg, grads, x, c);
}

void check_image_batch(const ModelState& state, const Tensor& x) {
    if (x.batch() == 0) throw ConfigError("empty image batch");
    if (x.sample_size() != state.image().pixels()) throw ConfigError("image batch does not match the model shape");
    for (double v : x.values()) {
        if (!(v >= -1.0 && v <= 1.0)) throw ConfigError("image values must lie in [-1, 1]");
    }
}

Tensor generator_forward(const ModelState& state, const Tensor& z, const TargetVariable& c) {
    require_finite_parameters(state, NetId::G);
    Tensor out = generator_graph(state, nullptr, Var::constant(z), constant_target(c)).value();
    require_finite(out, "G");
    return out;
}

DiscriminatorOutput discriminator_evaluate(const ModelState& state, const Tensor& x, const Tensor& z) {
    require_finite_parameters(state, NetId::D);
    DiscriminatorGraph g = discriminator_graph(state, nullptr, Var::constant(x), Var::constant(z));
    DiscriminatorOutput out;
    out.logits = g.logits.value();
    out.features = g.features.value();
    require_finite(out.logits, "D");
    out.probability = Tensor(Shape{out.logits.batch()});
    for (std::size_t i = 0; i < out.logits.size(); ++i) {
        const double l = out.logits[i];
        const double p = l >= 0.0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
        out.probability[i] = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
    }
    return out;
}

Tensor discriminator_forward(const ModelState& state, const Tensor& x, const Tensor& z) {
    return discriminator_evaluate(state, x, z).probability;
}

Tensor encoder_r_forward(const ModelState& state, const Tensor& x, const TargetVariable& c) {
    check_image_batch(state, x);
    require_finite_parameters(state, NetId::Er);
    Tensor out = encoder_r_graph(state, nullptr, Var::constant(x), constant_target(c)).value();
    require_finite(out, "E_r");
    return out;
}

Tensor encoder_g_forward(const ModelState& state, const Tensor& x, const TargetVariable* c) {
    check_image_batch(state, x);
    require_finite_parameters(state, NetId::Eg);
    Var cv = c ? constant_target(*c) : Var();
    Tensor out = encoder_g_graph(state, nullptr, Var::constant(x), cv).value();
    require_finite(out, "E_g");
    return out;
}

} // namespace dbigan
