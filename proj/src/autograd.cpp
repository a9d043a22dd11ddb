#include "dbigan/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dbigan/error.hpp"

namespace dbigan::autograd {

namespace {

std::shared_ptr<Node> make_node(Tensor value, const std::vector<Var>& inputs, bool requires_grad,
                                std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    if (requires_grad) {
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(backward);
    }
    return node;
}

Var wrap(std::shared_ptr<Node> node) { return Var(std::move(node)); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Var Var::constant(Tensor value) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    return v;
}

double Var::item() const {
    if (value().size() != 1) throw ConfigError("item() on a non-scalar of shape " + shape_string(value().shape()));
    return value()[0];
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    const bool rg = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
    return wrap(make_node(std::move(value), inputs, rg, std::move(backward)));
}

void accumulate(Node& node, const Tensor& g) {
    if (!node.requires_grad) return;
    if (node.grad.empty()) node.grad = g.reshaped(node.value.shape());
    else add_into(node.grad, g);
}

void backward(const Var& root) {
    if (!root.defined()) throw ConfigError("backward on an undefined value");
    if (root.value().size() != 1) throw ConfigError("backward needs a scalar root");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad = Tensor(root.value().shape(), 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

Var detach(const Var& v) { return Var::constant(v.value()); }

Var concat_features(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.batch() != bv.batch()) throw ConfigError("concat_features: batch mismatch");
    const std::size_t n = av.batch(), fa = av.sample_size(), fb = bv.sample_size();
    Tensor out(Shape{n, fa + fb});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(av.data() + i * fa, fa, out.data() + i * (fa + fb));
        std::copy_n(bv.data() + i * fb, fb, out.data() + i * (fa + fb) + fa);
    }
    auto an = a.node(), bn = b.node();
    return Var::make(std::move(out), {a, b}, [an, bn, n, fa, fb](Node& self) {
        if (an->requires_grad) {
            Tensor g(an->value.shape());
            for (std::size_t i = 0; i < n; ++i) std::copy_n(self.grad.data() + i * (fa + fb), fa, g.data() + i * fa);
            accumulate(*an, g);
        }
        if (bn->requires_grad) {
            Tensor g(bn->value.shape());
            for (std::size_t i = 0; i < n; ++i)
                std::copy_n(self.grad.data() + i * (fa + fb) + fa, fb, g.data() + i * fb);
            accumulate(*bn, g);
        }
    });
}

Var concat_channels(const Var& image, const Var& vec) {
    const Tensor& iv = image.value();
    const Tensor& vv = vec.value();
    if (iv.rank() != 4) throw ConfigError("concat_channels: image must be (N, H, W, C)");
    if (iv.batch() != vv.batch()) throw ConfigError("concat_channels: batch mismatch");
    const std::size_t n = iv.dim(0), pixels = iv.dim(1) * iv.dim(2), c = iv.dim(3), k = vv.sample_size();
    Tensor out(Shape{n, iv.dim(1), iv.dim(2), c + k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < pixels; ++p) {
            double* dst = out.data() + (i * pixels + p) * (c + k);
            std::copy_n(iv.data() + (i * pixels + p) * c, c, dst);
            std::copy_n(vv.data() + i * k, k, dst + c);
        }
    auto in_node = image.node(), vn = vec.node();
    return Var::make(std::move(out), {image, vec}, [in_node, vn, n, pixels, c, k](Node& self) {
        const double* g = self.grad.data();
        if (in_node->requires_grad) {
            Tensor gi(in_node->value.shape());
            for (std::size_t q = 0; q < n * pixels; ++q) std::copy_n(g + q * (c + k), c, gi.data() + q * c);
            accumulate(*in_node, gi);
        }
        if (vn->requires_grad) {
            Tensor gv(vn->value.shape());
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < pixels; ++p)
                    for (std::size_t j = 0; j < k; ++j) gv[i * k + j] += g[(i * pixels + p) * (c + k) + c + j];
            accumulate(*vn, gv);
        }
    });
}

Var reshape(const Var& v, Shape shape) {
    auto vn = v.node();
    return Var::make(v.value().reshaped(std::move(shape)), {v}, [vn](Node& self) { accumulate(*vn, self.grad); });
}

Var apply(const Sequential& stack, std::span<const Parameter> params, std::span<Tensor> param_grads, const Var& x) {
    const bool track = x.requires_grad() || !param_grads.empty();
    if (!track) return Var::constant(stack.forward(params, x.value(), nullptr));
    auto trace = std::make_shared<Trace>();
    Tensor out = stack.forward(params, x.value(), trace.get());
    auto xn = x.node();
    const Sequential* sp = &stack;
    auto node = make_node(std::move(out), {x}, true, [sp, params, param_grads, trace, xn](Node& self) {
        Tensor gin = sp->backward(params, *trace, self.grad, param_grads, xn->requires_grad);
        if (xn->requires_grad) accumulate(*xn, gin);
    });
    return wrap(std::move(node));
}

Var add(const Var& a, const Var& b) {
    if (a.value().size() != b.value().size()) throw ConfigError("add: size mismatch");
    Tensor out = a.value();
    add_into(out, b.value());
    auto an = a.node(), bn = b.node();
    return Var::make(std::move(out), {a, b}, [an, bn](Node& self) {
        accumulate(*an, self.grad);
        accumulate(*bn, self.grad);
    });
}

Var scale(const Var& v, double factor) {
    auto vn = v.node();
    return Var::make(scaled(v.value(), factor), {v},
                     [vn, factor](Node& self) { accumulate(*vn, scaled(self.grad, factor)); });
}

Var sum(std::span<const Var> terms) {
    if (terms.empty()) return Var::constant(Tensor(Shape{1}, 0.0));
    Var total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    return total;
}

Var mean_abs_diff(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.size() != bv.size() || av.size() == 0) {
        throw ConfigError("mean_abs_diff: operand shapes " + shape_string(av.shape()) + " and " +
                          shape_string(bv.shape()) + " differ");
    }
    const std::size_t n = av.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(av[i] - bv[i]);
    auto an = a.node(), bn = b.node();
    return Var::make(Tensor(Shape{1}, acc / static_cast<double>(n)), {a, b}, [an, bn, n](Node& self) {
        const double up = self.grad[0] / static_cast<double>(n);
        Tensor g(an->value.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const double d = an->value[i] - bn->value[i];
            g[i] = d > 0.0 ? up : (d < 0.0 ? -up : 0.0);
        }
        accumulate(*an, g);
        if (bn->requires_grad) accumulate(*bn, scaled(g, -1.0));
    });
}

Var mean_log_prob(const Var& logits, double epsilon) {
    const Tensor& l = logits.value();
    const std::size_t n = l.size();
    if (n == 0) throw ConfigError("mean_log_prob: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::log(std::clamp(sigmoid(l[i]), epsilon, 1.0 - epsilon));
    auto ln = logits.node();
    return Var::make(Tensor(Shape{1}, acc / static_cast<double>(n)), {logits}, [ln, n, epsilon](Node& self) {
        const double up = self.grad[0] / static_cast<double>(n);
        Tensor g(ln->value.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(ln->value[i]);
            g[i] = (p < epsilon || p > 1.0 - epsilon) ? 0.0 : up * sigmoid(-ln->value[i]);
        }
        accumulate(*ln, g);
    });
}

Var mean_log_one_minus_prob(const Var& logits, double epsilon) {
    const Tensor& l = logits.value();
    const std::size_t n = l.size();
    if (n == 0) throw ConfigError("mean_log_one_minus_prob: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::log(std::clamp(sigmoid(-l[i]), epsilon, 1.0 - epsilon));
    auto ln = logits.node();
    return Var::make(Tensor(Shape{1}, acc / static_cast<double>(n)), {logits}, [ln, n, epsilon](Node& self) {
        const double up = self.grad[0] / static_cast<double>(n);
        Tensor g(ln->value.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const double q = sigmoid(-ln->value[i]);
            g[i] = (q < epsilon || q > 1.0 - epsilon) ? 0.0 : -up * sigmoid(ln->value[i]);
        }
        accumulate(*ln, g);
    });
}

} // namespace dbigan::autograd
