#pragma once

#include "headswap/gan/training.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <random>

namespace testing_support {

enum class TrainingLoss
{
    generator,
    embedder,
    discriminator,
};

/**
 * Finite-difference check of one training loss with respect to the trainable
 * parameters under `prefix`: two random unit directions through the whole
 * group plus eight single coordinates, central differences with step h.
 * Probes whose stencil straddles a kink are redrawn and counted in `skipped`.
 * Returns ||analytic - numeric|| / max(||analytic||, ||numeric||).
 */
inline double training_loss_grad_error(headswap::gan::GanModel& model,
                                       const std::vector<headswap::gan::IdentityClip>& data,
                                       const headswap::gan::ClipSample& sample, TrainingLoss which,
                                       const std::string& prefix, double h = 1e-5,
                                       int* skipped = nullptr)
{
    using namespace headswap;
    using namespace headswap::gan;
    int skipped_local = 0;
    int* skipped_out = skipped ? skipped : &skipped_local;
    auto loss_of = [&](Binder& bind) {
        if (which == TrainingLoss::discriminator)
            return discriminator_loss(model, bind, data, sample);
        const StepLosses l = generator_losses(model, bind, data, sample, LossWeights{});
        return which == TrainingLoss::generator ? l.g_total : *l.e_total;
    };
    const std::vector<std::string> frozen = which == TrainingLoss::discriminator
                                                ? std::vector<std::string>{"G.", "E."}
                                                : std::vector<std::string>{"DI.", "DM.", "DV."};
    model.params.zero_grad();
    {
        nn::Tape tape;
        Binder bind(tape, frozen);
        tape.backward(loss_of(bind));
    }
    auto eval = [&] {
        nn::Tape tape;
        Binder bind(tape, frozen);
        return loss_of(bind).value().item();
    };
    const std::vector<nn::Parameter*> params = model.params.trainable(prefix);
    if (params.empty())
        throw std::invalid_argument("no trainable parameters under " + prefix);
    // `move(s)` places the parameters at offset s from their base values.
    // Central difference along `move`, or nothing when the stencil straddles a
    // kink of the piecewise-linear loss. On a smooth stretch the one-sided slope
    // asymmetry is h f'' and halves with the step; a kink breaks that scaling.
    auto probe = [&](const std::function<void(double)>& move) -> std::optional<double> {
        auto at = [&](double s) {
            move(s);
            const double f = eval();
            move(0.0);
            return f;
        };
        const double f0 = eval(), fp = at(h), fm = at(-h), fp2 = at(0.5 * h), fm2 = at(-0.5 * h);
        const double asym = (fp - f0) / h - (f0 - fm) / h;
        const double asym2 = (fp2 - f0) / (0.5 * h) - (f0 - fm2) / (0.5 * h);
        const double roundoff = 1e-9 * std::max(1.0, std::abs(f0));
        if (std::abs(asym2 - 0.5 * asym) > 0.05 * std::abs(asym) + roundoff)
            return std::nullopt;
        return (fp - fm) / (2.0 * h);
    };
    std::mt19937_64 rng(77);
    std::vector<double> analytic, numeric;
    int accepted = 0;
    for (int attempt = 0; accepted < 2 && attempt < 20; ++attempt)
    {
        std::vector<Tensor> v;
        double norm = 0.0, a = 0.0;
        for (nn::Parameter* p : params)
        {
            v.push_back(Tensor::randn(p->value.shape(), 1.0, rng));
            for (double x : v.back().values())
                norm += x * x;
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t i = 0; i < v[k].size(); ++i)
            {
                v[k][i] /= norm;
                a += params[k]->grad[i] * v[k][i];
            }
        std::vector<Tensor> base;
        for (nn::Parameter* p : params)
            base.push_back(p->value);
        const std::optional<double> n = probe([&](double s) {
            for (std::size_t k = 0; k < params.size(); ++k)
                for (std::size_t i = 0; i < v[k].size(); ++i)
                    params[k]->value[i] = base[k][i] + s * v[k][i];
        });
        if (!n)
        {
            ++*skipped_out;
            continue;
        }
        analytic.push_back(a);
        numeric.push_back(*n);
        ++accepted;
    }
    accepted = 0;
    for (int attempt = 0; accepted < 8 && attempt < 40; ++attempt)
    {
        nn::Parameter* p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p->value.size() - 1)(rng);
        const double x0 = p->value[i];
        const std::optional<double> n = probe([&](double s) { p->value[i] = x0 + s; });
        if (!n)
        {
            ++*skipped_out;
            continue;
        }
        analytic.push_back(p->grad[i]);
        numeric.push_back(*n);
        ++accepted;
    }
    model.params.zero_grad();
    if (analytic.size() < 4)
        throw std::runtime_error("too many probes straddle kinks under " + prefix);
    double diff = 0, na = 0, nn_ = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
    {
        diff += std::pow(analytic[i] - numeric[i], 2);
        na += analytic[i] * analytic[i];
        nn_ += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
}

} // namespace testing_support
