#pragma once

#include "headswap/video_fitter.hpp"

#include <Eigen/Core>

namespace headswap {

enum class ScalePolicy
{
    keep_source_camera,
    none,
};

/// Source motion plus the identity the result should carry.
struct TransferSpec
{
    FitResult source_fit;
    Eigen::VectorXd target_identity;
    ScalePolicy scale_policy = ScalePolicy::keep_source_camera;
};

/**
 * Swaps in the target identity while keeping the source expressions and
 * cameras untouched. Size adaptation is unnecessary because the swap happens
 * in coefficient space. Energies of the result are reset to zero.
 */
FitResult transfer_params(const TransferSpec& spec);

} // namespace headswap
