#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dbigan/layers.hpp"
#include "dbigan/tensor.hpp"

namespace dbigan::autograd {

struct Node {
    Tensor value;
    Tensor grad; // empty until something flows back
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
};

// Handle to a value in a reverse-mode graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    static Var constant(Tensor value);

    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }
    // Scalar value of a 1-element tensor.
    double item() const;

    const std::shared_ptr<Node>& node() const { return node_; }

    static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

private:
    std::shared_ptr<Node> node_;
};

// Runs reverse accumulation from a scalar root.
void backward(const Var& root);

// Adds `g` to the node's gradient, allocating it on first use.
void accumulate(Node& node, const Tensor& g);

// Breaks the graph: the result carries the value but no history.
Var detach(const Var& v);

// (N, ...) x (N, ...) -> (N, a + b) feature concatenation.
Var concat_features(const Var& a, const Var& b);
// (N, H, W, C) image and (N, K) vector -> (N, H, W, C + K), with the vector
// broadcast over every pixel.
Var concat_channels(const Var& image, const Var& vec);
// Reshape keeping the batch size.
Var reshape(const Var& v, Shape shape);

// Applies a layer stack. Parameter gradients accumulate into `param_grads`
// (aligned with `params`) unless it is empty.
Var apply(const Sequential& stack, std::span<const Parameter> params, std::span<Tensor> param_grads, const Var& x);

Var add(const Var& a, const Var& b);
Var scale(const Var& v, double factor);
Var sum(std::span<const Var> terms);

// mean |a - b| over all elements; both operands must have equal size.
Var mean_abs_diff(const Var& a, const Var& b);

// Mean over the batch of log p and log(1 - p), where p = sigmoid(logit)
// clamped to [epsilon, 1 - epsilon]. Clamped entries pass no gradient.
Var mean_log_prob(const Var& logits, double epsilon);
Var mean_log_one_minus_prob(const Var& logits, double epsilon);

} // namespace dbigan::autograd
