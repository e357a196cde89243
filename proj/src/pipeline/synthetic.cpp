#include "headswap/pipeline/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace headswap {

Appearance random_appearance(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Appearance a;
    for (int c = 0; c < 3; ++c)
    {
        a.base[c] = 0.3 + 0.4 * u(rng);
        a.amplitude[c] = 0.1 + 0.15 * u(rng);
        a.phase[c] = 2.0 * std::numbers::pi * u(rng);
    }
    a.freq_x = 0.5 + 1.5 * u(rng);
    a.freq_y = 0.5 + 1.5 * u(rng);
    a.shading = 0.1 + 0.2 * u(rng);
    return a;
}

Image shade_person(const NmfcImage& nmfc, const TriangleIdBuffer& visibility, const Appearance& look)
{
    if (nmfc.width != visibility.width || nmfc.height != visibility.height)
        throw std::invalid_argument("dimension mismatch: nmfc and visibility sizes differ");
    Image img(nmfc.width, nmfc.height, 3);
    for (int y = 0; y < nmfc.height; ++y)
        for (int x = 0; x < nmfc.width; ++x)
        {
            if (visibility.id(x, y) == kNoTriangle)
                continue;
            const double u = nmfc.at(x, y, 0), v = nmfc.at(x, y, 1), w = nmfc.at(x, y, 2);
            const double arg = 2.0 * std::numbers::pi * (look.freq_x * u + look.freq_y * v);
            for (int c = 0; c < 3; ++c)
            {
                const double val = look.base[c] + look.amplitude[c] * std::sin(arg + look.phase[c]) +
                                   look.shading * (0.5 - w);
                img.at(x, y, c) = std::nearbyint(255.0 * std::clamp(val, 0.0, 1.0));
            }
        }
    return img;
}

SyntheticPerson make_synthetic_person(const ShapeBasis& basis, const SyntheticPersonOptions& opt)
{
    if (opt.frames < 1 || opt.size < 8)
        throw std::invalid_argument("synthetic person needs >= 1 frame and size >= 8");
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int T = opt.frames, ni = basis.num_identity(), ne = basis.num_expression();

    SyntheticPerson p;
    p.look = random_appearance(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    FitResult& f = p.truth;
    f.identity.resize(ni);
    for (int j = 0; j < ni; ++j)
        f.identity(j) = 1.5 * u(rng) * basis.sigma_id(j);

    Eigen::VectorXd amp(ne), freq(ne), phase(ne);
    for (int j = 0; j < ne; ++j)
    {
        amp(j) = u(rng) * basis.sigma_exp(j);
        freq(j) = 0.1 + 0.1 * std::abs(u(rng));
        phase(j) = 3.0 * u(rng);
    }
    const double yaw_phase = 3.0 * u(rng), pitch_phase = 3.0 * u(rng);
    f.expressions.resize(T, ne);
    f.cameras.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
    {
        for (int j = 0; j < ne; ++j)
            f.expressions(t, j) = amp(j) * std::sin(freq(j) * t + phase(j));
        SopCamera& c = f.cameras[static_cast<std::size_t>(t)];
        c.rotation << 0.15 * std::sin(0.13 * t + pitch_phase), 0.3 * std::sin(0.09 * t + yaw_phase),
            0.05 * std::sin(0.07 * t);
        c.scale = 0.38 * opt.size;
        c.translation << 0.5 * opt.size + 0.03 * opt.size * std::sin(0.05 * t), 0.5 * opt.size, 0.0;
    }

    const NmfcRenderer renderer(basis);
    for (int t = 0; t < T; ++t)
    {
        const Eigen::VectorXd e = f.expressions.row(t).transpose();
        const SopCamera& cam = f.cameras[static_cast<std::size_t>(t)];
        const TriangleIdBuffer vis = renderer.visibility(f.identity, e, cam, opt.size, opt.size);
        const NmfcImage nmfc = encode_nmfc(vis, renderer.colors());
        p.frames.push_back(shade_person(nmfc, vis, p.look));
        p.masks.push_back(coverage_mask(vis));
        p.nmfc.push_back(nmfc);
        Landmarks2D lm;
        lm.points = project(cam, landmark_points(basis, synthesize_vector(basis, f.identity, e)));
        p.landmarks.push_back(std::move(lm));
    }
    return p;
}

} // namespace headswap
