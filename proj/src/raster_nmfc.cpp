#include "headswap/raster_nmfc.hpp"

#include "headswap/binary_io.hpp"
#include "headswap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace headswap {

namespace {

constexpr std::int64_t kSubpixel = std::int64_t{1} << kSubpixelBits;
constexpr std::int64_t kHalfPixel = kSubpixel / 2;
constexpr std::int64_t kCoordLimit = std::int64_t{1} << 29;

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

std::int64_t snap(double v)
{
    const double scaled = std::nearbyint(v * static_cast<double>(kSubpixel));
    if (!(scaled > -static_cast<double>(kCoordLimit)))
        return -kCoordLimit;
    if (!(scaled < static_cast<double>(kCoordLimit)))
        return kCoordLimit;
    return static_cast<std::int64_t>(scaled);
}

bool is_top_left(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by)
{
    return (ay == by && bx > ax) || by < ay;
}

constexpr char kNmfcMagic[4] = {'N', 'M', 'F', 'C'};

} // namespace

bool operator==(const NmfcImage& a, const NmfcImage& b)
{
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

ScreenMesh to_screen(const Matrix3Xr& vertices, const std::vector<Triangle>& topology, const SopCamera& cam)
{
    const Points2 p = project(cam, vertices);
    const Eigen::VectorXd depth = camera_depth(cam, vertices);
    ScreenMesh out;
    const auto n = static_cast<std::size_t>(vertices.rows());
    out.x.resize(n);
    out.y.resize(n);
    out.z.resize(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        out.x[i] = snap(p(static_cast<Eigen::Index>(i), 0));
        out.y[i] = snap(p(static_cast<Eigen::Index>(i), 1));
        out.z[i] = depth(static_cast<Eigen::Index>(i));
    }
    out.triangles = topology;
    return out;
}

TriangleIdBuffer rasterize(const ScreenMesh& mesh, int width, int height, int threads)
{
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("raster size must be positive");
    TriangleIdBuffer buf;
    buf.width = width;
    buf.height = height;
    const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    buf.ids.assign(count, kNoTriangle);
    buf.depth.assign(count, std::numeric_limits<double>::infinity());

    const int bands = std::clamp(threads, 1, height);
    parallel_for(bands, bands, [&](int band) {
        const int row_begin = height * band / bands;
        const int row_end = height * (band + 1) / bands;
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
        {
            const auto [ia, ib, ic] = mesh.triangles[t];
            const std::int64_t ax = mesh.x[ia], ay = mesh.y[ia];
            const std::int64_t bx = mesh.x[ib], by = mesh.y[ib];
            const std::int64_t cx = mesh.x[ic], cy = mesh.y[ic];
            const std::int64_t area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
            if (area <= 0)
                continue;

            const std::int64_t min_x = std::min({ax, bx, cx}), max_x = std::max({ax, bx, cx});
            const std::int64_t min_y = std::min({ay, by, cy}), max_y = std::max({ay, by, cy});
            const auto x0 = static_cast<int>(std::max<std::int64_t>(0, floor_div(min_x - kHalfPixel + kSubpixel - 1, kSubpixel)));
            const auto x1 = static_cast<int>(std::min<std::int64_t>(width - 1, floor_div(max_x - kHalfPixel, kSubpixel)));
            const auto y0 = static_cast<int>(std::max<std::int64_t>(row_begin, floor_div(min_y - kHalfPixel + kSubpixel - 1, kSubpixel)));
            const auto y1 = static_cast<int>(std::min<std::int64_t>(row_end - 1, floor_div(max_y - kHalfPixel, kSubpixel)));
            if (x0 > x1 || y0 > y1)
                continue;

            // Edge e_i is opposite vertex i; its weight multiplies that vertex's depth.
            const std::int64_t bias_a = is_top_left(bx, by, cx, cy) ? 0 : 1;
            const std::int64_t bias_b = is_top_left(cx, cy, ax, ay) ? 0 : 1;
            const std::int64_t bias_c = is_top_left(ax, ay, bx, by) ? 0 : 1;
            const double za = mesh.z[ia], zb = mesh.z[ib], zc = mesh.z[ic];
            const double area_d = static_cast<double>(area);

            const std::int64_t px0 = x0 * kSubpixel + kHalfPixel;
            for (int y = y0; y <= y1; ++y)
            {
                const std::int64_t py = y * kSubpixel + kHalfPixel;
                std::int64_t wa = (cx - bx) * (py - by) - (cy - by) * (px0 - bx);
                std::int64_t wb = (ax - cx) * (py - cy) - (ay - cy) * (px0 - cx);
                std::int64_t wc = (bx - ax) * (py - ay) - (by - ay) * (px0 - ax);
                const std::int64_t step_a = -(cy - by) * kSubpixel;
                const std::int64_t step_b = -(ay - cy) * kSubpixel;
                const std::int64_t step_c = -(by - ay) * kSubpixel;
                std::size_t idx = static_cast<std::size_t>(y) * width + x0;
                for (int x = x0; x <= x1; ++x, ++idx, wa += step_a, wb += step_b, wc += step_c)
                {
                    if (wa < bias_a || wb < bias_b || wc < bias_c)
                        continue;
                    const double d = (static_cast<double>(wa) * za + static_cast<double>(wb) * zb +
                                      static_cast<double>(wc) * zc) /
                                     area_d;
                    const auto id = static_cast<std::int32_t>(t);
                    if (d < buf.depth[idx] || (d == buf.depth[idx] && id < buf.ids[idx]))
                    {
                        buf.depth[idx] = d;
                        buf.ids[idx] = id;
                    }
                }
            }
        }
    });
    return buf;
}

TriangleIdBuffer rasterize(const Mesh& mesh, const SopCamera& cam, int width, int height, int threads)
{
    return rasterize(to_screen(mesh.vertices, mesh.topology, cam), width, height, threads);
}

std::vector<std::array<float, 3>> triangle_colors(const NormalizedMeanFace& nmf, const std::vector<Triangle>& topology)
{
    std::vector<std::array<float, 3>> colors(topology.size());
    for (std::size_t t = 0; t < topology.size(); ++t)
    {
        const auto [a, b, c] = topology[t];
        for (int ch = 0; ch < 3; ++ch)
            colors[t][ch] = static_cast<float>((nmf.coords(a, ch) + nmf.coords(b, ch) + nmf.coords(c, ch)) / 3.0);
    }
    return colors;
}

NmfcImage encode_nmfc(const TriangleIdBuffer& buf, const std::vector<std::array<float, 3>>& colors)
{
    NmfcImage img;
    img.width = buf.width;
    img.height = buf.height;
    img.pixels.assign(buf.ids.size() * 3, 0.0f);
    for (std::size_t i = 0; i < buf.ids.size(); ++i)
    {
        const std::int32_t id = buf.ids[i];
        if (id == kNoTriangle)
            continue;
        if (id < 0 || static_cast<std::size_t>(id) >= colors.size())
            throw std::out_of_range("triangle id out of range for topology");
        std::copy(colors[id].begin(), colors[id].end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    return img;
}

NmfcImage encode_nmfc(const TriangleIdBuffer& buf, const NormalizedMeanFace& nmf, const std::vector<Triangle>& topology)
{
    return encode_nmfc(buf, triangle_colors(nmf, topology));
}

NmfcRenderer::NmfcRenderer(const ShapeBasis& basis)
    : basis_(basis), colors_(triangle_colors(normalized_mean_face(basis), basis.topology))
{
}

TriangleIdBuffer NmfcRenderer::visibility(const Eigen::VectorXd& identity, const Eigen::VectorXd& expression,
                                          const SopCamera& cam, int width, int height) const
{
    const Eigen::VectorXd shape = synthesize_vector(basis_, identity, expression);
    const Matrix3Xr vertices = Eigen::Map<const Matrix3Xr>(shape.data(), basis_.num_vertices(), 3);
    return rasterize(to_screen(vertices, basis_.topology, cam), width, height);
}

NmfcImage NmfcRenderer::render(const Eigen::VectorXd& identity, const Eigen::VectorXd& expression,
                               const SopCamera& cam, int width, int height) const
{
    return encode_nmfc(visibility(identity, expression, cam, width, height), colors_);
}

std::vector<NmfcImage> render_nmfc_sequence(const ShapeBasis& basis, const FitResult& fit, int width, int height,
                                            int threads)
{
    const int T = fit.num_frames();
    if (fit.identity.size() != basis.num_identity() || fit.expressions.rows() != T ||
        fit.expressions.cols() != basis.num_expression())
        throw std::invalid_argument("dimension mismatch: fit does not match basis");
    const NmfcRenderer renderer(basis);
    std::vector<NmfcImage> frames(static_cast<std::size_t>(T));
    parallel_for(T, threads, [&](int t) {
        frames[static_cast<std::size_t>(t)] = renderer.render(fit.identity, fit.expressions.row(t).transpose(),
                                                              fit.cameras[static_cast<std::size_t>(t)], width, height);
    });
    return frames;
}

void save_nmfc(const NmfcImage& image, const std::filesystem::path& path)
{
    ByteWriter out;
    out.raw(kNmfcMagic, 4);
    out.u32(static_cast<std::uint32_t>(image.width));
    out.u32(static_cast<std::uint32_t>(image.height));
    out.u32(3);
    out.f32s(image.pixels.data(), image.pixels.size());
    write_file_bytes(path, out.take());
}

NmfcImage load_nmfc(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    ByteReader in(bytes);
    char magic[4];
    in.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kNmfcMagic))
        throw std::runtime_error("corrupt header: not an .nmfc file: " + path.string());
    NmfcImage img;
    img.width = static_cast<int>(in.u32());
    img.height = static_cast<int>(in.u32());
    const std::uint32_t channels = in.u32();
    if (channels != 3 || img.width <= 0 || img.height <= 0)
        throw std::runtime_error("corrupt header: bad .nmfc dimensions");
    const auto n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3;
    if (in.remaining() != n * sizeof(float))
        throw std::runtime_error("dimension mismatch: .nmfc payload size");
    img.pixels.resize(n);
    in.f32s(img.pixels.data(), n);
    return img;
}

} // namespace headswap
