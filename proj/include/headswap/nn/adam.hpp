#pragma once

#include "headswap/nn/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace headswap::nn {

struct AdamConfig
{
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment estimates keyed by parameter name.
struct AdamState
{
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    long step = 0;
};

/// One bias-corrected Adam update of every parameter in `params` from its grad.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& config, AdamState& state);

} // namespace headswap::nn
