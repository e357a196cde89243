#pragma once

#include "headswap/nn/autograd.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace testing_support {

using headswap::nn::Tape;
using headswap::nn::Tensor;
using headswap::nn::Var;

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12) using central differences.
inline double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5)
{
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& t : inputs)
            vars.push_back(tape.input(t));
        Var loss = f(tape, vars);
        tape.backward(loss);
        for (const Var& v : vars)
        {
            const Tensor& g = tape.grad(v);
            analytic.push_back(g);
        }
    }
    auto eval = [&]() {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& t : inputs)
            vars.push_back(tape.constant(t));
        return f(tape, vars).value().item();
    };
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i)
        {
            const double x0 = inputs[k][i];
            inputs[k][i] = x0 + h;
            const double fp = eval();
            inputs[k][i] = x0 - h;
            const double fm = eval();
            inputs[k][i] = x0;
            const double num = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            diff2 += (a - num) * (a - num);
            a2 += a * a;
            n2 += num * num;
        }
    return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
}

/// Reduces any tensor to a scalar through a fixed random projection, so every output element is exercised.
inline Var project_to_scalar(Var y, std::uint64_t seed = 99)
{
    std::mt19937_64 rng(seed);
    Tensor w = Tensor::randn(y.shape(), 1.0, rng);
    return headswap::nn::sum(headswap::nn::mul(y, y.tape->constant(std::move(w))));
}

} // namespace testing_support
