#include "headswap/gan/losses.hpp"

#include <cmath>

namespace headswap::gan {

Var matching_loss(Var h, Var w)
{
    if (h.value().size() != w.value().size())
        throw std::invalid_argument("shape mismatch in matching_loss");
    auto norm2 = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.values())
            s += v * v;
        return s;
    };
    if (norm2(h.value()) == 0.0 || norm2(w.value()) == 0.0)
        throw std::invalid_argument("matching_loss is undefined for a zero vector");
    // sqrt(hh * ww) is exact for parallel vectors, so the extremes come out exact.
    const Var cosine = nn::div(nn::dot(h, w), nn::sqrt(nn::mul(nn::dot(h, h), nn::dot(w, w))));
    return nn::add_scalar(nn::scale(nn::clamp(cosine, -1.0, 1.0), -1.0), 1.0);
}

HingeLosses hinge_losses(Var r_real, Var r_fake)
{
    const Var real_term = nn::mean(nn::relu(nn::add_scalar(nn::scale(r_real, -1.0), 1.0)));
    const Var fake_term = nn::mean(nn::relu(nn::add_scalar(r_fake, 1.0)));
    return {nn::add(real_term, fake_term), nn::scale(nn::mean(r_fake), -1.0)};
}

Var perceptual_loss(const std::vector<Var>& fake, const std::vector<Var>& real)
{
    if (fake.empty() || fake.size() != real.size())
        throw std::invalid_argument("perceptual_loss needs matching, non-empty feature lists");
    Var total = nn::l1_loss(fake[0], real[0]);
    for (std::size_t l = 1; l < fake.size(); ++l)
        total = nn::add(total, nn::l1_loss(fake[l], real[l]));
    return total;
}

Var perceptual_loss(GanModel& model, Binder& bind, Var fake, Var real)
{
    if (fake.shape() != real.shape())
        throw std::invalid_argument("shape mismatch in perceptual_loss");
    return perceptual_loss(perceptual_features(model, bind, fake), perceptual_features(model, bind, real));
}

Var feature_matching_loss(const std::vector<Var>& fake, const std::vector<Var>& real)
{
    return nn::scale(perceptual_loss(fake, real), 1.0 / static_cast<double>(fake.size()));
}

Var mask_loss(Var predicted, Var target) { return nn::l1_loss(predicted, target); }

Var generator_objective(Var adv, Var vgg, Var feat, Var mask, const LossWeights& w)
{
    Var total = nn::add(adv, nn::scale(vgg, w.vgg));
    total = nn::add(total, nn::scale(feat, w.feat));
    return nn::add(total, nn::scale(mask, w.mask));
}

} // namespace headswap::gan
