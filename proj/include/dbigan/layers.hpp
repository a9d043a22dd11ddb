#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbigan/tensor.hpp"

namespace dbigan {

enum class LayerKind { Dense, Conv, ConvTranspose };
enum class Activation { Identity, ReLU, LeakyReLU, Tanh, Sigmoid };

inline constexpr double kLeakySlope = 0.2;

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

// Per-sample activation geometry. Flat feature vectors are 1x1xC.
struct Dims {
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;

    std::size_t size() const { return height * width * channels; }
    bool spatial() const { return height > 1 || width > 1; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t units = 0; // dense width, or output channels for (transposed) convolutions
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Activation activation = Activation::Identity;
    std::optional<Dims> reshape; // dense only: view the output as this geometry

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

LayerSpec dense(std::size_t units, Activation act, std::optional<Dims> reshape = std::nullopt);
LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t padding, Activation act);
LayerSpec conv_transpose(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t padding,
                         Activation act);

struct Parameter {
    std::string name;
    Tensor value;
};

using Trace = std::vector<Tensor>;

// A chain of layers whose parameters live in an external flat vector owned
// by the enclosing network. Layer i uses parameters [offset + 2i] (weight)
// and [offset + 2i + 1] (bias).
class Sequential {
public:
    Sequential() = default;
    // Throws ConfigError when the layer chain does not produce integral shapes.
    Sequential(std::string name, Dims input, std::vector<LayerSpec> specs);

    const std::string& name() const { return name_; }
    Dims input_dims() const { return input_; }
    Dims output_dims() const;
    const std::vector<LayerSpec>& specs() const { return specs_; }
    std::size_t layer_count() const { return layers_.size(); }

    // Appends this stack's parameters (zero-filled) and records their offset.
    void append_parameters(std::vector<Parameter>& params);
    std::size_t parameter_offset() const { return offset_; }
    std::size_t parameter_count() const { return 2 * layers_.size(); }

    // `trace`, when given, receives the input and every layer output.
    Tensor forward(std::span<const Parameter> params, const Tensor& x, Trace* trace) const;

    // Returns the input gradient (empty when `want_input_grad` is false) and
    // accumulates parameter gradients into `param_grads` unless it is empty.
    Tensor backward(std::span<const Parameter> params, const Trace& trace, Tensor grad_out,
                    std::span<Tensor> param_grads, bool want_input_grad) const;

private:
    struct Layer {
        LayerSpec spec;
        Dims in;
        Dims out;
    };

    std::string name_;
    Dims input_;
    std::vector<LayerSpec> specs_;
    std::vector<Layer> layers_;
    std::size_t offset_ = 0;
};

} // namespace dbigan
