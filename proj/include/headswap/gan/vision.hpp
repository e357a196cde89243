#pragma once

#include "headswap/nn/autograd.hpp"
#include "headswap/sop_camera.hpp"

namespace headswap::gan {

struct CropRect
{
    int left = 0;
    int top = 0;
    int width = 0;
    int height = 0;

    friend bool operator==(const CropRect&, const CropRect&) = default;
};

/**
 * Square box around the bounding box of landmarks 48..67 (the mouth).
 *
 * With side S = max(box w, box h), the square has side S * (1 + 2 * margin)
 * and shares the box centre. Its continuous extent is rounded outwards to
 * whole pixels and clamped to the image. Throws std::invalid_argument when the
 * mouth box or the clamped rectangle is empty.
 */
CropRect mouth_rect(const Points2& landmarks, int image_width, int image_height, double margin = 0.25);

/// Crops `frame` {C,H,W} to the mouth rectangle and resizes it to patch x patch.
nn::Var mouth_crop(nn::Var frame, const Points2& landmarks, int patch = 16, double margin = 0.25);

/**
 * Exhaustive block matching from `a` to `b` (both {C,H,W}).
 *
 * Output is {2, ceil(H/block), ceil(W/block)} holding the integer (dx, dy)
 * for which the block of `a` best matches `b` shifted by (dx, dy) under the
 * sum of absolute differences. Candidates reaching outside `b` are skipped.
 * Ties go to the smaller |d|^2, then to the lexicographically smaller (dx, dy).
 */
nn::Tensor block_flow(const nn::Tensor& a, const nn::Tensor& b, int block = 8, int radius = 4);

} // namespace headswap::gan
