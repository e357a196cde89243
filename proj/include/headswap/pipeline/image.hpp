#pragma once

#include "headswap/nn/tensor.hpp"
#include "headswap/raster_nmfc.hpp"

#include <filesystem>
#include <vector>

namespace headswap {

/// Interleaved (y, x, channel) image of doubles. RGB frames use the 0..255
/// scale, masks 0..1.
struct Image
{
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0);

    double& at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }
    std::size_t index(int x, int y, int c) const
    {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// 8-bit gray or RGB PNG. Gray+alpha and RGBA are reduced to gray and RGB;
/// 16-bit files are reduced to 8 bits.
Image read_png(const std::filesystem::path& path);
/// Values are rounded and clamped to 0..255. `channels` must be 1 or 3.
void write_png(const Image& image, const std::filesystem::path& path);

/// Mask PNG: 255 = foreground, returned on the 0..1 scale.
Image read_mask_png(const std::filesystem::path& path);
void write_mask_png(const Image& mask, const std::filesystem::path& path);

// Network layout conversions.
nn::Tensor rgb_to_tensor(const Image& rgb);    // 0..255 -> {3,H,W} in [-1, 1]
Image tensor_to_rgb(const nn::Tensor& t);      // inverse, clamped to 0..255
nn::Tensor mask_to_tensor(const Image& mask);  // 0..1 -> {1,H,W}
Image tensor_to_mask(const nn::Tensor& t);
nn::Tensor nmfc_to_tensor(const NmfcImage& n); // {3,H,W} in [0, 1]

/// Visibility mask of a triangle-id buffer (1 where a triangle is drawn).
Image coverage_mask(const TriangleIdBuffer& buf);

} // namespace headswap
