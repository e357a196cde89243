#include "headswap/pipeline/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace headswap {

Image::Image(int w, int h, int c, double fill) : width(w), height(h), channels(c)
{
    if (w <= 0 || h <= 0 || c <= 0)
        throw std::invalid_argument("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill);
}

Image read_png(const std::filesystem::path& path)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("corrupt header: cannot read PNG " + path.string() + ": " + img.message);
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr))
    {
        const std::string msg = img.message;
        png_image_free(&img);
        throw std::runtime_error("corrupt header: cannot decode PNG " + path.string() + ": " + msg);
    }
    Image out(static_cast<int>(img.width), static_cast<int>(img.height), color ? 3 : 1);
    std::transform(buffer.begin(), buffer.end(), out.data.begin(), [](png_byte b) { return static_cast<double>(b); });
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path)
{
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("write_png needs 1 or 3 channels");
    if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
        throw std::invalid_argument("dimension mismatch: image buffer size");
    std::vector<png_byte> buffer(image.data.size());
    std::transform(image.data.begin(), image.data.end(), buffer.begin(),
                   [](double v) { return static_cast<png_byte>(std::clamp(std::nearbyint(v), 0.0, 255.0)); });
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
}

Image read_mask_png(const std::filesystem::path& path)
{
    Image m = read_png(path);
    if (m.channels != 1)
        throw std::runtime_error("corrupt header: mask PNG must be grayscale: " + path.string());
    for (double& v : m.data)
        v /= 255.0;
    return m;
}

void write_mask_png(const Image& mask, const std::filesystem::path& path)
{
    if (mask.channels != 1)
        throw std::invalid_argument("mask must have one channel");
    Image scaled = mask;
    for (double& v : scaled.data)
        v *= 255.0;
    write_png(scaled, path);
}

namespace {

nn::Tensor to_chw(const Image& img, int channels, double scale, double offset)
{
    if (img.channels != channels)
        throw std::invalid_argument("dimension mismatch: expected " + std::to_string(channels) + " channel image");
    nn::Tensor t({channels, img.height, img.width});
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c)
                t[c * plane + static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, c) * scale + offset;
    return t;
}

Image from_chw(const nn::Tensor& t, int channels, double scale, double offset, double lo, double hi)
{
    if (t.rank() != 3 || t.dim(0) != channels)
        throw std::invalid_argument("dimension mismatch: tensor " + nn::shape_str(t.shape()));
    Image img(t.dim(2), t.dim(1), channels);
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(x, y, c) =
                    std::clamp(t[c * plane + static_cast<std::size_t>(y) * img.width + x] * scale + offset, lo, hi);
    return img;
}

} // namespace

nn::Tensor rgb_to_tensor(const Image& rgb) { return to_chw(rgb, 3, 1.0 / 127.5, -1.0); }
Image tensor_to_rgb(const nn::Tensor& t) { return from_chw(t, 3, 127.5, 127.5, 0.0, 255.0); }
nn::Tensor mask_to_tensor(const Image& mask) { return to_chw(mask, 1, 1.0, 0.0); }
Image tensor_to_mask(const nn::Tensor& t) { return from_chw(t, 1, 1.0, 0.0, 0.0, 1.0); }

nn::Tensor nmfc_to_tensor(const NmfcImage& n)
{
    nn::Tensor t({3, n.height, n.width});
    const std::size_t plane = static_cast<std::size_t>(n.width) * n.height;
    for (int y = 0; y < n.height; ++y)
        for (int x = 0; x < n.width; ++x)
            for (int c = 0; c < 3; ++c)
                t[c * plane + static_cast<std::size_t>(y) * n.width + x] = n.at(x, y, c);
    return t;
}

Image coverage_mask(const TriangleIdBuffer& buf)
{
    Image m(buf.width, buf.height, 1);
    for (std::size_t i = 0; i < buf.ids.size(); ++i)
        m.data[i] = buf.ids[i] == kNoTriangle ? 0.0 : 1.0;
    return m;
}

} // namespace headswap
