#pragma once

#include "headswap/gan/model.hpp"

namespace headswap::gan {

struct LossWeights
{
    double mch = 10.0;
    double vgg = 10.0;
    double feat = 10.0;
    double mask = 10.0;
};

/// 1 - cos(h, w). Throws std::invalid_argument when either vector is zero.
Var matching_loss(Var h, Var w);

struct HingeLosses
{
    Var d;     // mean(max(0, 1 - r_real)) + mean(max(0, 1 + r_fake))
    Var g_adv; // -mean(r_fake)
};

HingeLosses hinge_losses(Var r_real, Var r_fake);

/// Sum over layers of the mean absolute difference between feature maps.
Var perceptual_loss(const std::vector<Var>& fake_features, const std::vector<Var>& real_features);
/// Same, with features taken from the model's frozen stack.
Var perceptual_loss(GanModel& model, Binder& bind, Var fake, Var real);

/// Mean over layers of the mean absolute difference between feature maps.
Var feature_matching_loss(const std::vector<Var>& fake_features, const std::vector<Var>& real_features);

/// Mean absolute difference between predicted and ground-truth masks.
Var mask_loss(Var predicted, Var target);

/// L_adv + l_vgg L_vgg + l_feat L_feat + l_mask L_mask.
Var generator_objective(Var adv, Var vgg, Var feat, Var mask, const LossWeights& w);

} // namespace headswap::gan
