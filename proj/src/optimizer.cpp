#include "dbigan/optimizer.hpp"

#include <cmath>

#include "dbigan/error.hpp"

namespace dbigan {

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace

void adam_update(std::vector<Parameter>& params, AdamState& state, std::span<const Tensor> grads,
                 const AdamConfig& config) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ConfigError("adam_update: gradient/state count does not match parameters");
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i].value.data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const double* g = grads[i].data();
        const std::size_t n = params[i].value.size();
        for (std::size_t k = 0; k < n; ++k) {
            m[k] = to_f32(config.beta1 * m[k] + (1.0 - config.beta1) * g[k]);
            v[k] = to_f32(config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k]);
            const double step = config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.epsilon);
            p[k] = to_f32(p[k] - step);
        }
    }
}

} // namespace dbigan
