#pragma once

#include "headswap/pipeline/image.hpp"
#include "headswap/video_fitter.hpp"

#include <array>

namespace headswap {

/// Colour of a synthetic person as a smooth function of the NMFC value.
struct Appearance
{
    std::array<double, 3> base{};
    std::array<double, 3> amplitude{};
    std::array<double, 3> phase{};
    double freq_x = 1.0;
    double freq_y = 1.0;
    double shading = 0.0;
};

Appearance random_appearance(std::uint64_t seed);

/// Shades every foreground NMFC pixel with 8-bit values; the background stays black.
Image shade_person(const NmfcImage& nmfc, const TriangleIdBuffer& visibility, const Appearance& look);

struct SyntheticPersonOptions
{
    int frames = 50;
    int size = 32;
    std::uint64_t seed = 1;
};

/// Ground truth of a synthetic video: parameters, rendered frames and annotations.
struct SyntheticPerson
{
    FitResult truth; // identity, expressions and cameras the frames were rendered from
    Appearance look;
    std::vector<Image> frames; // RGB, 0..255
    std::vector<Image> masks;  // 0..1
    std::vector<NmfcImage> nmfc;
    std::vector<Landmarks2D> landmarks;
};

/**
 * Renders a head with seed-dependent identity and colouring. The head turns
 * and talks smoothly over time and fills roughly three quarters of the frame.
 */
SyntheticPerson make_synthetic_person(const ShapeBasis& basis, const SyntheticPersonOptions& options);

} // namespace headswap
