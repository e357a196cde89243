#pragma once

#include "headswap/raster_nmfc.hpp"

#include <limits>
#include <random>

namespace testing_support {

/**
 * Per-pixel brute force: for every pixel centre and every triangle evaluate the
 * three edge functions from scratch, apply culling and the top-left rule, and
 * keep the (depth, id) minimum.
 */
inline headswap::TriangleIdBuffer brute_force_rasterize(const headswap::ScreenMesh& m, int width, int height)
{
    using I = std::int64_t;
    headswap::TriangleIdBuffer out;
    out.width = width;
    out.height = height;
    out.ids.assign(static_cast<std::size_t>(width) * height, headswap::kNoTriangle);
    out.depth.assign(out.ids.size(), std::numeric_limits<double>::infinity());
    auto edge = [](I ax, I ay, I bx, I by, I px, I py) { return (bx - ax) * (py - ay) - (by - ay) * (px - ax); };
    auto top_left = [](I ax, I ay, I bx, I by) { return (ay == by && bx > ax) || by < ay; };
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
        {
            const I px = I{x} * 256 + 128, py = I{y} * 256 + 128;
            for (std::size_t t = 0; t < m.triangles.size(); ++t)
            {
                const auto [a, b, c] = m.triangles[t];
                const I area = edge(m.x[a], m.y[a], m.x[b], m.y[b], m.x[c], m.y[c]);
                if (area <= 0)
                    continue;
                const I w0 = edge(m.x[b], m.y[b], m.x[c], m.y[c], px, py);
                const I w1 = edge(m.x[c], m.y[c], m.x[a], m.y[a], px, py);
                const I w2 = edge(m.x[a], m.y[a], m.x[b], m.y[b], px, py);
                const bool in0 = w0 > 0 || (w0 == 0 && top_left(m.x[b], m.y[b], m.x[c], m.y[c]));
                const bool in1 = w1 > 0 || (w1 == 0 && top_left(m.x[c], m.y[c], m.x[a], m.y[a]));
                const bool in2 = w2 > 0 || (w2 == 0 && top_left(m.x[a], m.y[a], m.x[b], m.y[b]));
                if (!(in0 && in1 && in2))
                    continue;
                const double d = (static_cast<double>(w0) * m.z[a] + static_cast<double>(w1) * m.z[b] +
                                  static_cast<double>(w2) * m.z[c]) /
                                 static_cast<double>(area);
                const std::size_t idx = static_cast<std::size_t>(y) * width + x;
                const auto id = static_cast<std::int32_t>(t);
                if (d < out.depth[idx] || (d == out.depth[idx] && id < out.ids[idx]))
                {
                    out.depth[idx] = d;
                    out.ids[idx] = id;
                }
            }
        }
    return out;
}

/**
 * Random test scene: a mix of free triangles and a jittered grid patch with
 * shared edges, some vertices snapped to pixel centres or integer pixel
 * corners to exercise the fill rule, and a few coplanar overlaps.
 */
inline headswap::ScreenMesh random_scene(std::mt19937_64& rng, int width, int height, int max_triangles = 200)
{
    headswap::ScreenMesh m;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> tri_count(0, max_triangles);
    const int target = tri_count(rng);
    auto push_vertex = [&](double x, double y, double z) {
        const int mode = static_cast<int>(u(rng) * 4);
        if (mode == 0) // pixel centre
        {
            x = std::floor(x) + 0.5;
            y = std::floor(y) + 0.5;
        }
        else if (mode == 1) // pixel corner
        {
            x = std::round(x);
            y = std::round(y);
        }
        m.x.push_back(static_cast<std::int64_t>(std::llround(x * 256.0)));
        m.y.push_back(static_cast<std::int64_t>(std::llround(y * 256.0)));
        m.z.push_back(z);
        return static_cast<int>(m.x.size() - 1);
    };
    // Grid patch with shared edges.
    const int g = 1 + static_cast<int>(u(rng) * 6);
    const double x0 = u(rng) * width * 0.5, y0 = u(rng) * height * 0.5;
    const double cell = 2.0 + u(rng) * 8.0;
    const int base = static_cast<int>(m.x.size());
    for (int j = 0; j <= g; ++j)
        for (int i = 0; i <= g; ++i)
            push_vertex(x0 + i * cell + (u(rng) - 0.5), y0 + j * cell + (u(rng) - 0.5), u(rng) * 0.1);
    for (int j = 0; j < g && static_cast<int>(m.triangles.size()) + 2 <= target; ++j)
        for (int i = 0; i < g && static_cast<int>(m.triangles.size()) + 2 <= target; ++i)
        {
            const int a = base + j * (g + 1) + i, b = a + 1, c = a + g + 1, d = c + 1;
            m.triangles.push_back({a, b, d});
            m.triangles.push_back({a, d, c});
        }
    while (static_cast<int>(m.triangles.size()) < target)
    {
        const double cx = u(rng) * (width + 20) - 10, cy = u(rng) * (height + 20) - 10;
        const double r = 1.0 + u(rng) * 20.0;
        int ids[3];
        const bool flat = u(rng) < 0.2;
        const double zb = u(rng) * 2.0 - 1.0;
        for (int& id : ids)
            id = push_vertex(cx + (u(rng) - 0.5) * 2 * r, cy + (u(rng) - 0.5) * 2 * r, flat ? zb : zb + u(rng));
        m.triangles.push_back({ids[0], ids[1], ids[2]});
        if (u(rng) < 0.1 && static_cast<int>(m.triangles.size()) < target) // exact duplicate
            m.triangles.push_back({ids[0], ids[1], ids[2]});
    }
    return m;
}

} // namespace testing_support
