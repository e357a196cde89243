#pragma once

#include "headswap/morphable_model.hpp"
#include "headswap/sop_camera.hpp"
#include "headswap/video_fitter.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace headswap {

inline constexpr std::int32_t kNoTriangle = -1;

/// Sub-pixel precision of snapped vertex positions (1/256 px).
inline constexpr int kSubpixelBits = 8;

/// Visibility buffer: nearest front-facing triangle per pixel, row-major (y, x).
struct TriangleIdBuffer
{
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> ids;
    std::vector<double> depth;

    std::int32_t id(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

/// W x H x 3 float image, row-major (y, x, channel).
struct NmfcImage
{
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    float at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

bool operator==(const NmfcImage& a, const NmfcImage& b);

/**
 * Screen-space triangle soup with fixed-point vertex positions, the input of
 * the scan converter. x, y are in 1/256 pixel units; z is camera-space depth.
 */
struct ScreenMesh
{
    std::vector<std::int64_t> x, y;
    std::vector<double> z;
    std::vector<Triangle> triangles;
};

/// Projects with `cam`, snaps to the sub-pixel grid and records depth.
ScreenMesh to_screen(const Matrix3Xr& vertices, const std::vector<Triangle>& topology, const SopCamera& cam);

/**
 * Scan converts a screen mesh.
 *
 * Coverage is sampled at pixel centres (i + 0.5, j + 0.5) with the top-left
 * fill rule; triangles whose edge function area is not positive are culled.
 * Depth at a pixel is the barycentric interpolation
 * (w0 z0 + w1 z1 + w2 z2) / area with the integer edge weights converted to
 * double. The visible triangle minimizes (depth, id), which makes the result
 * independent of submission order.
 */
TriangleIdBuffer rasterize(const ScreenMesh& mesh, int width, int height, int threads = 1);

TriangleIdBuffer rasterize(const Mesh& mesh, const SopCamera& cam, int width, int height, int threads = 1);

/// Per-triangle centroid of the normalized mean face coordinates.
std::vector<std::array<float, 3>> triangle_colors(const NormalizedMeanFace& nmf, const std::vector<Triangle>& topology);

NmfcImage encode_nmfc(const TriangleIdBuffer& buf, const NormalizedMeanFace& nmf, const std::vector<Triangle>& topology);
NmfcImage encode_nmfc(const TriangleIdBuffer& buf, const std::vector<std::array<float, 3>>& colors);

/// Geometry path for one frame: shape synthesis, rasterization, encoding.
class NmfcRenderer
{
public:
    explicit NmfcRenderer(const ShapeBasis& basis);

    NmfcImage render(const Eigen::VectorXd& identity, const Eigen::VectorXd& expression, const SopCamera& cam,
                     int width, int height) const;
    TriangleIdBuffer visibility(const Eigen::VectorXd& identity, const Eigen::VectorXd& expression,
                                const SopCamera& cam, int width, int height) const;

    const std::vector<std::array<float, 3>>& colors() const { return colors_; }

private:
    const ShapeBasis& basis_;
    std::vector<std::array<float, 3>> colors_;
};

std::vector<NmfcImage> render_nmfc_sequence(const ShapeBasis& basis, const FitResult& fit, int width, int height,
                                            int threads = 1);

/// `.nmfc` container: "NMFC", u32 width, u32 height, u32 channels (3), float32 pixels.
void save_nmfc(const NmfcImage& image, const std::filesystem::path& path);
NmfcImage load_nmfc(const std::filesystem::path& path);

} // namespace headswap
