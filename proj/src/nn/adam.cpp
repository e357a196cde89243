#include "headswap/nn/adam.hpp"

#include <cmath>

namespace headswap::nn {

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& config, AdamState& state)
{
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (Parameter* p : params)
    {
        if (!p->grad.same_shape(p->value))
            throw std::invalid_argument("shape mismatch: gradient of " + p->name);
        Tensor& m = state.m[p->name];
        Tensor& v = state.v[p->name];
        if (m.size() == 0)
            m = Tensor(p->value.shape());
        if (v.size() == 0)
            v = Tensor(p->value.shape());
        if (!m.same_shape(p->value) || !v.same_shape(p->value))
            throw std::invalid_argument("shape mismatch: optimizer state of " + p->name);
        for (std::size_t i = 0; i < p->value.size(); ++i)
        {
            const double g = p->grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p->value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

} // namespace headswap::nn
