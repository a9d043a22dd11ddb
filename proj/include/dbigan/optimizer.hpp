#pragma once

#include <span>
#include <vector>

#include "dbigan/nets.hpp"

namespace dbigan {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected Adam update. Parameters and both moment estimates are
// rounded to binary32 afterwards so the state stays exactly serializable.
void adam_update(std::vector<Parameter>& params, AdamState& state, std::span<const Tensor> grads,
                 const AdamConfig& config);

} // namespace dbigan
