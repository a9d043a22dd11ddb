#include "dbigan/layers.hpp"

#include <cmath>
#include <utility>

#include "dbigan/error.hpp"
#include "dbigan/kernels.hpp"

namespace dbigan {

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvTranspose: return "conv_transpose";
    }
    return "?";
}

std::string to_string(Activation act) {
    switch (act) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::LeakyReLU: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
    if (s == "dense") return LayerKind::Dense;
    if (s == "conv") return LayerKind::Conv;
    if (s == "conv_transpose") return LayerKind::ConvTranspose;
    throw ConfigError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "leaky_relu") return Activation::LeakyReLU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw ConfigError("unknown activation '" + s + "'");
}

LayerSpec dense(std::size_t units, Activation act, std::optional<Dims> reshape) {
    return LayerSpec{LayerKind::Dense, units, 0, 1, 0, act, reshape};
}

LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t padding, Activation act) {
    return LayerSpec{LayerKind::Conv, channels, kernel, stride, padding, act, std::nullopt};
}

LayerSpec conv_transpose(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t padding,
                         Activation act) {
    return LayerSpec{LayerKind::ConvTranspose, channels, kernel, stride, padding, act, std::nullopt};
}

namespace {

std::size_t conv_extent(std::size_t in, const LayerSpec& s, const std::string& where) {
    const std::size_t padded = in + 2 * s.padding;
    if (padded < s.kernel || (padded - s.kernel) % s.stride != 0) {
        throw ConfigError(where + ": kernel " + std::to_string(s.kernel) + " stride " + std::to_string(s.stride) +
                          " padding " + std::to_string(s.padding) + " does not tile input extent " +
                          std::to_string(in));
    }
    return (padded - s.kernel) / s.stride + 1;
}

std::size_t conv_transpose_extent(std::size_t in, const LayerSpec& s, const std::string& where) {
    const long out = static_cast<long>((in - 1) * s.stride + s.kernel) - 2 * static_cast<long>(s.padding);
    if (out <= 0) throw ConfigError(where + ": transposed convolution produces empty output");
    return static_cast<std::size_t>(out);
}

Dims infer_output(const Dims& in, const LayerSpec& s, const std::string& where) {
    if (s.units == 0) throw ConfigError(where + ": layer width must be positive");
    switch (s.kind) {
    case LayerKind::Dense:
        if (s.reshape) {
            if (s.reshape->size() != s.units) throw ConfigError(where + ": reshape does not match dense width");
            return *s.reshape;
        }
        return Dims{1, 1, s.units};
    case LayerKind::Conv:
        if (s.kernel == 0 || s.stride == 0) throw ConfigError(where + ": kernel and stride must be positive");
        return Dims{conv_extent(in.height, s, where), conv_extent(in.width, s, where), s.units};
    case LayerKind::ConvTranspose:
        if (s.kernel == 0 || s.stride == 0) throw ConfigError(where + ": kernel and stride must be positive");
        return Dims{conv_transpose_extent(in.height, s, where), conv_transpose_extent(in.width, s, where), s.units};
    }
    throw ConfigError(where + ": unknown layer kind");
}

Shape output_shape(std::size_t batch, const Dims& d, LayerKind kind, bool reshaped) {
    if (kind == LayerKind::Dense && !reshaped) return {batch, d.channels};
    return {batch, d.height, d.width, d.channels};
}

void activate(Tensor& t, Activation act) {
    double* p = t.data();
    const std::size_t n = t.size();
    switch (act) {
    case Activation::Identity: return;
    case Activation::ReLU:
        for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
        return;
    case Activation::LeakyReLU:
        for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? p[i] : kLeakySlope * p[i];
        return;
    case Activation::Tanh:
        for (std::size_t i = 0; i < n; ++i) p[i] = std::tanh(p[i]);
        return;
    case Activation::Sigmoid:
        for (std::size_t i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-p[i]));
        return;
    }
}

// Multiplies `grad` by the activation derivative, expressed through the
// activation output `y`.
void activation_backward(Tensor& grad, const Tensor& y, Activation act) {
    double* g = grad.data();
    const double* v = y.data();
    const std::size_t n = grad.size();
    switch (act) {
    case Activation::Identity: return;
    case Activation::ReLU:
        for (std::size_t i = 0; i < n; ++i) g[i] = v[i] > 0.0 ? g[i] : 0.0;
        return;
    case Activation::LeakyReLU:
        for (std::size_t i = 0; i < n; ++i) g[i] = v[i] > 0.0 ? g[i] : kLeakySlope * g[i];
        return;
    case Activation::Tanh:
        for (std::size_t i = 0; i < n; ++i) g[i] *= 1.0 - v[i] * v[i];
        return;
    case Activation::Sigmoid:
        for (std::size_t i = 0; i < n; ++i) g[i] *= v[i] * (1.0 - v[i]);
        return;
    }
}

kernels::ConvGeometry conv_geometry(std::size_t batch, const Dims& in, const Dims& out, const LayerSpec& s) {
    return kernels::ConvGeometry{batch,    in.height, in.width, in.channels, out.height, out.width, out.channels,
                                 s.kernel, s.stride,  s.padding};
}

} // namespace

Sequential::Sequential(std::string name, Dims input, std::vector<LayerSpec> specs)
    : name_(std::move(name)), input_(input), specs_(std::move(specs)) {
    if (input_.size() == 0) throw ConfigError(name_ + ": empty input geometry");
    if (specs_.empty()) throw ConfigError(name_ + ": a stack needs at least one layer");
    Dims cur = input_;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const Dims out = infer_output(cur, specs_[i], name_ + " layer " + std::to_string(i));
        layers_.push_back(Layer{specs_[i], cur, out});
        cur = out;
    }
}

Dims Sequential::output_dims() const { return layers_.empty() ? input_ : layers_.back().out; }

void Sequential::append_parameters(std::vector<Parameter>& params) {
    offset_ = params.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        Shape wshape;
        switch (l.spec.kind) {
        case LayerKind::Dense: wshape = {l.in.size(), l.out.size()}; break;
        case LayerKind::Conv: wshape = {l.spec.kernel, l.spec.kernel, l.in.channels, l.out.channels}; break;
        // Stored as the weights of the adjoint convolution (output -> input).
        case LayerKind::ConvTranspose: wshape = {l.spec.kernel, l.spec.kernel, l.out.channels, l.in.channels}; break;
        }
        const std::string prefix = name_ + ".layer" + std::to_string(i);
        params.push_back(Parameter{prefix + ".weight", Tensor(wshape)});
        const std::size_t units = l.spec.kind == LayerKind::Dense ? l.out.size() : l.out.channels;
        params.push_back(Parameter{prefix + ".bias", Tensor(Shape{units})});
    }
}

Tensor Sequential::forward(std::span<const Parameter> params, const Tensor& x, Trace* trace) const {
    if (x.sample_size() != input_.size()) {
        throw ConfigError(name_ + ": expected " + std::to_string(input_.size()) + " features per sample, got " +
                          shape_string(x.shape()));
    }
    const std::size_t batch = x.batch();
    if (trace) {
        trace->clear();
        trace->reserve(layers_.size() + 1);
        trace->push_back(x);
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        const Tensor& w = params[offset_ + 2 * i].value;
        const Tensor& b = params[offset_ + 2 * i + 1].value;
        Tensor y(output_shape(batch, l.out, l.spec.kind, l.spec.reshape.has_value()));
        switch (l.spec.kind) {
        case LayerKind::Dense:
            kernels::dense_forward({batch, l.in.size(), l.out.size()}, cur.values(), w.values(), b.values(), y.values());
            break;
        case LayerKind::Conv:
            kernels::conv2d_forward(conv_geometry(batch, l.in, l.out, l.spec), cur.values(), w.values(), b.values(),
                                    y.values());
            break;
        case LayerKind::ConvTranspose: {
            kernels::conv2d_backward_input(conv_geometry(batch, l.out, l.in, l.spec), cur.values(), w.values(),
                                           y.values());
            const std::size_t c = l.out.channels;
            double* yp = y.data();
            for (std::size_t j = 0; j < y.size(); ++j) yp[j] += b[j % c];
            break;
        }
        }
        activate(y, l.spec.activation);
        if (trace) trace->push_back(y);
        cur = std::move(y);
    }
    return cur;
}

Tensor Sequential::backward(std::span<const Parameter> params, const Trace& trace, Tensor grad_out,
                            std::span<Tensor> param_grads, bool want_input_grad) const {
    if (trace.size() != layers_.size() + 1) throw ConfigError(name_ + ": trace does not match stack");
    const bool accumulate = !param_grads.empty();
    const std::size_t batch = trace.front().batch();
    Tensor grad = std::move(grad_out);
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
        const Layer& l = layers_[idx];
        const Tensor& x = trace[idx];
        activation_backward(grad, trace[idx + 1], l.spec.activation);
        const Tensor& w = params[offset_ + 2 * idx].value;
        const bool need_input = idx > 0 || want_input_grad;
        Tensor gx;
        if (need_input) gx = Tensor(x.shape());
        switch (l.spec.kind) {
        case LayerKind::Dense: {
            const kernels::DenseGeometry g{batch, l.in.size(), l.out.size()};
            if (accumulate) {
                kernels::dense_backward_params(g, x.values(), grad.values(), param_grads[offset_ + 2 * idx].values(),
                                               param_grads[offset_ + 2 * idx + 1].values());
            }
            if (need_input) kernels::dense_backward_input(g, grad.values(), w.values(), gx.values());
            break;
        }
        case LayerKind::Conv: {
            const auto g = conv_geometry(batch, l.in, l.out, l.spec);
            if (accumulate) {
                kernels::conv2d_backward_params(g, x.values(), grad.values(), param_grads[offset_ + 2 * idx].values(),
                                                param_grads[offset_ + 2 * idx + 1].values());
            }
            if (need_input) kernels::conv2d_backward_input(g, grad.values(), w.values(), gx.values());
            break;
        }
        case LayerKind::ConvTranspose: {
            const auto g = conv_geometry(batch, l.out, l.in, l.spec);
            if (accumulate) {
                kernels::conv2d_backward_params(g, grad.values(), x.values(), param_grads[offset_ + 2 * idx].values(),
                                                {});
                Tensor& gb = param_grads[offset_ + 2 * idx + 1];
                const std::size_t c = l.out.channels;
                for (std::size_t j = 0; j < grad.size(); ++j) gb[j % c] += grad[j];
            }
            if (need_input) kernels::conv2d_forward(g, grad.values(), w.values(), {}, gx.values());
            break;
        }
        }
        grad = std::move(gx);
    }
    return grad;
}

} // namespace dbigan
