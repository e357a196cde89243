#include "headswap/gan/training.hpp"
#include "headswap/gan/vision.hpp"
#include "support/gan_fixture.hpp"
#include "support/gan_grad.hpp"
#include "support/grad_check.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>

using namespace headswap;
using namespace headswap::gan;
using headswap::nn::Tape;
using testing_support::grad_check;
using testing_support::project_to_scalar;

namespace {

Tensor rnd(nn::Shape s, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    return Tensor::randn(std::move(s), scale, rng);
}

GanConfig small_config()
{
    GanConfig c;
    c.resolution = 16;
    c.channels = 4;
    c.n_f = 8;
    c.num_identities = 3;
    c.mouth_patch = 8;
    c.seed = 11;
    return c;
}

Tensor run_generator(GanModel& m, const Tensor& triplet, const Tensor& prev, const std::optional<Tensor>& h)
{
    Tape tape;
    Binder bind(tape);
    std::optional<Var> hv;
    if (h)
        hv = tape.constant(*h);
    return generate_frame(m, bind, tape.constant(triplet), tape.constant(prev), hv).frame.value();
}

Points2 mouth_landmarks(double x0, double y0, double x1, double y1)
{
    Points2 p = Points2::Constant(68, 2, 0.0);
    for (int i = 0; i < 68; ++i)
        p.row(i) << 0.5 * (x0 + x1), 0.5 * (y0 + y1);
    p.row(48) << x0, 0.5 * (y0 + y1);
    p.row(54) << x1, 0.5 * (y0 + y1);
    p.row(51) << 0.5 * (x0 + x1), y0;
    p.row(57) << 0.5 * (x0 + x1), y1;
    return p;
}

} // namespace

TEST_CASE("embed_average: single frame, duplicates and permutations")
{
    GanModel m = init_model(small_config());
    std::mt19937_64 rng(2);
    const Tensor a = Tensor::uniform({3, 16, 16}, -1, 1, rng);
    const Tensor b = Tensor::uniform({3, 16, 16}, -1, 1, rng), c = Tensor::uniform({3, 16, 16}, -1, 1, rng);
    auto avg = [&](const std::vector<Tensor>& frames) {
        Tape tape;
        Binder bind(tape);
        std::vector<Var> v;
        for (const Tensor& f : frames)
            v.push_back(tape.constant(f));
        return Tensor(embed_average(m, bind, v).value());
    };
    Tape tape;
    Binder bind(tape);
    const Tensor single = embed(m, bind, tape.constant(a)).value();
    CHECK(avg({a}) == single);
    CHECK(avg({a, a}) == single);
    CHECK(avg({a, b, c}) == avg({c, a, b}));
    CHECK(avg({a, b, c}) == avg({b, c, a}));
    CHECK(avg({a, b}).shape() == nn::Shape{8});
    CHECK_THROWS_AS(avg({}), std::invalid_argument);
}

TEST_CASE("adain")
{
    const Tensor x = rnd({4, 5, 6}, 3, 2.0);
    const Tensor pg = rnd({4, 8}, 4), pb = rnd({4, 8}, 5);
    SUBCASE("h = 0 gives zeros")
    {
        Tape t;
        const Tensor y = adain(t.constant(x), t.constant(Tensor({8})), t.constant(pg), t.constant(pb)).value();
        for (double v : y.values())
            CHECK(v == 0.0);
    }
    SUBCASE("unit gamma, zero beta standardizes each channel")
    {
        Tape t;
        // P_gamma h = 1 and P_beta h = 0 with h = e_0.
        Tensor g({4, 8}), h({8});
        h[0] = 1.0;
        for (int c = 0; c < 4; ++c)
            g[static_cast<std::size_t>(c) * 8] = 1.0;
        const Tensor y = adain(t.constant(x), t.constant(h), t.constant(g), t.constant(Tensor({4, 8}))).value();
        for (int c = 0; c < 4; ++c)
        {
            double mean = 0, var = 0;
            for (int i = 0; i < 30; ++i)
                mean += y[static_cast<std::size_t>(c * 30 + i)] / 30.0;
            for (int i = 0; i < 30; ++i)
                var += std::pow(y[static_cast<std::size_t>(c * 30 + i)] - mean, 2) / 30.0;
            CHECK(std::abs(mean) < 1e-12);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
    SUBCASE("direct formula oracle")
    {
        const Tensor h = rnd({8}, 6);
        Tape t;
        const Tensor y = adain(t.constant(x), t.constant(h), t.constant(pg), t.constant(pb), 1e-5).value();
        for (int c = 0; c < 4; ++c)
        {
            double gamma = 0, beta = 0;
            for (int k = 0; k < 8; ++k)
            {
                gamma += pg[static_cast<std::size_t>(c * 8 + k)] * h[static_cast<std::size_t>(k)];
                beta += pb[static_cast<std::size_t>(c * 8 + k)] * h[static_cast<std::size_t>(k)];
            }
            double mean = 0, var = 0;
            for (int i = 0; i < 30; ++i)
                mean += x[static_cast<std::size_t>(c * 30 + i)];
            mean /= 30.0;
            for (int i = 0; i < 30; ++i)
                var += std::pow(x[static_cast<std::size_t>(c * 30 + i)] - mean, 2);
            var /= 30.0;
            for (int i = 0; i < 30; ++i)
            {
                const auto k = static_cast<std::size_t>(c * 30 + i);
                const double expect = gamma * (x[k] - mean) / std::sqrt(var + 1e-5) + beta;
                CHECK(std::abs(y[k] - expect) < 1e-10);
            }
        }
    }
}

TEST_CASE("generator output ranges, boundary frames and identity sensitivity")
{
    GanModel m = init_model(small_config());
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial)
    {
        Tape tape;
        Binder bind(tape);
        const FrameOutput out = generate_frame(m, bind, tape.constant(Tensor::uniform({9, 16, 16}, -3, 3, rng)),
                                               tape.constant(Tensor::uniform({6, 16, 16}, -3, 3, rng)),
                                               tape.constant(Tensor::randn({8}, 3.0, rng)));
        CHECK(out.frame.shape() == nn::Shape{3, 16, 16});
        CHECK(out.mask.shape() == nn::Shape{1, 16, 16});
        for (double v : out.frame.value().values())
            CHECK((v >= -1.0 && v <= 1.0));
        for (double v : out.mask.value().values())
            CHECK((v >= 0.0 && v <= 1.0));
    }

    SUBCASE("first frame sees zeros for the missing past")
    {
        const Tensor nmfc = Tensor::uniform({3, 16, 16}, 0, 1, rng), h = rnd({8}, 8);
        Tape tape;
        Binder bind(tape);
        const RolloutOutput ro = rollout(m, bind, {tape.constant(nmfc)}, tape.constant(h));
        Tensor triplet({9, 16, 16});
        std::copy(nmfc.data(), nmfc.data() + nmfc.size(), triplet.data() + 6 * 256);
        CHECK(ro.frames[0].value() == run_generator(m, triplet, Tensor({6, 16, 16}), h));
    }

    SUBCASE("output depends on h through a non-zero gradient")
    {
        Tape tape;
        Binder bind(tape);
        const Var h = tape.input(rnd({8}, 9));
        const FrameOutput out = generate_frame(m, bind, tape.constant(Tensor::uniform({9, 16, 16}, 0, 1, rng)),
                                               tape.constant(Tensor({6, 16, 16})), h);
        tape.backward(project_to_scalar(out.frame));
        double norm = 0;
        for (double g : tape.grad(h).values())
            norm += g * g;
        CHECK(norm > 1e-12);
    }

    SUBCASE("argument checks")
    {
        Tape tape;
        Binder bind(tape);
        const Var good9 = tape.constant(Tensor({9, 16, 16})), good6 = tape.constant(Tensor({6, 16, 16}));
        CHECK_THROWS_AS(generate_frame(m, bind, tape.constant(Tensor({9, 8, 8})), good6, tape.constant(Tensor({8}))),
                        std::invalid_argument);
        CHECK_THROWS_AS(generate_frame(m, bind, good9, good6, std::nullopt), std::invalid_argument);
        CHECK_THROWS_AS(generate_frame(m, bind, good9, tape.constant(Tensor({3, 16, 16})), tape.constant(Tensor({8}))),
                        std::invalid_argument);
    }
}

TEST_CASE("rollout: determinism, single frame and causality")
{
    GanModel m = init_model(small_config());
    std::mt19937_64 rng(12);
    std::vector<Tensor> nmfc;
    for (int t = 0; t < 6; ++t)
        nmfc.push_back(Tensor::uniform({3, 16, 16}, 0, 1, rng));
    const Tensor h = rnd({8}, 13);
    const auto first = synthesize(m, nmfc, h);
    const auto second = synthesize(m, nmfc, h);
    CHECK(first.first == second.first);
    CHECK(first.second == second.second);

    const auto one = synthesize(m, {nmfc[0]}, h);
    REQUIRE(one.first.size() == 1);
    CHECK(one.first[0] == first.first[0]);

    std::vector<Tensor> perturbed = nmfc;
    perturbed[3][100] += 0.5;
    const auto changed = synthesize(m, perturbed, h);
    for (int t = 0; t < 3; ++t)
        CHECK(changed.first[static_cast<std::size_t>(t)] == first.first[static_cast<std::size_t>(t)]);
    CHECK(changed.first[3] != first.first[3]);
    CHECK(changed.first[5] != first.first[5]);

    CHECK_THROWS_AS(synthesize(m, {}, h), std::invalid_argument);
}

TEST_CASE("realism score")
{
    GanModel m = init_model(small_config());
    std::mt19937_64 rng(14);
    const Tensor frame = Tensor::uniform({3, 16, 16}, -1, 1, rng), nmfc = Tensor::uniform({3, 16, 16}, 0, 1, rng);
    m.params.at("DI.w0").value = rnd({8}, 15);
    m.params.at("DI.c").value = Tensor::scalar(0.37);
    auto score = [&](int id) {
        Tape tape;
        Binder bind(tape);
        const ImageScore s = image_discriminator(m, bind, tape.constant(frame), tape.constant(nmfc), id);
        return std::pair<double, Tensor>{s.score.value().item(), s.d.value()};
    };

    SUBCASE("dot-product oracle")
    {
        for (int id = 0; id < 3; ++id)
        {
            const auto [r, d] = score(id);
            double expect = 0.37;
            for (int k = 0; k < 8; ++k)
                expect += d[static_cast<std::size_t>(k)] *
                          (m.params.at("DI.W").value[static_cast<std::size_t>(id * 8 + k)] +
                           m.params.at("DI.w0").value[static_cast<std::size_t>(k)]);
            CHECK(std::abs(r - expect) < 1e-10);
        }
    }
    SUBCASE("w_i = -w_0 leaves the bias")
    {
        for (int k = 0; k < 8; ++k)
            m.params.at("DI.W").value[static_cast<std::size_t>(8 + k)] =
                -m.params.at("DI.w0").value[static_cast<std::size_t>(k)];
        CHECK(score(1).first == 0.37);
    }
    SUBCASE("d = 0 leaves the bias")
    {
        m.params.at("DI.feat.w").value.fill(0.0);
        m.params.at("DI.feat.b").value.fill(0.0);
        CHECK(score(2).first == 0.37);
    }
    CHECK_THROWS_AS(score(3), std::out_of_range);
    CHECK_THROWS_AS(score(-1), std::out_of_range);
}

TEST_CASE("matching loss")
{
    Tape t;
    const Tensor h = rnd({8}, 16);
    Tensor neg = h, scaled = h, ortho({8});
    for (double& v : neg.values())
        v = -v;
    for (double& v : scaled.values())
        v *= 3.5;
    ortho[0] = h[1];
    ortho[1] = -h[0];
    const Var hv = t.constant(h);
    CHECK(matching_loss(hv, hv).value().item() == 0.0);
    CHECK(matching_loss(hv, t.constant(neg)).value().item() == 2.0);
    CHECK(matching_loss(hv, t.constant(ortho)).value().item() == 1.0);
    CHECK(matching_loss(hv, t.constant(scaled)).value().item() == doctest::Approx(0.0).epsilon(1e-15));

    std::mt19937_64 rng(17);
    for (int i = 0; i < 50; ++i)
    {
        const Tensor a = Tensor::randn({8}, 1.0, rng), b = Tensor::randn({8}, 1.0, rng);
        Tensor a2 = a;
        const double factor = 0.01 + 10.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        for (double& v : a2.values())
            v *= factor;
        const double l = matching_loss(t.constant(a), t.constant(b)).value().item();
        CHECK((l >= 0.0 && l <= 2.0));
        CHECK(std::abs(matching_loss(t.constant(a2), t.constant(b)).value().item() - l) < 1e-12);
    }
    CHECK_THROWS_AS(matching_loss(hv, t.constant(Tensor({8}))), std::invalid_argument);
    CHECK(grad_check([](Tape&, const std::vector<Var>& v) { return matching_loss(v[0], v[1]); },
                     {rnd({8}, 18), rnd({8}, 19)}) < 1e-4);
}

TEST_CASE("hinge losses")
{
    Tape t;
    auto eval = [&](Tensor real, Tensor fake) {
        const HingeLosses l = hinge_losses(t.constant(std::move(real)), t.constant(std::move(fake)));
        return std::pair{l.d.value().item(), l.g_adv.value().item()};
    };
    CHECK(eval(Tensor::scalar(1.0), Tensor::scalar(-1.0)).first == 0.0);
    CHECK(eval(Tensor::scalar(0.0), Tensor::scalar(0.0)) == std::pair{2.0, 0.0});
    CHECK(eval(Tensor({2}, {3.0, -0.5}), Tensor({2}, {0.5, -4.0})) == std::pair{(0.0 + 1.5) / 2 + (1.5 + 0.0) / 2, 1.75});

    // Away from the kinks at +-1 the loss is piecewise linear and differentiable.
    Tensor real = rnd({12}, 20, 2.0), fake = rnd({12}, 21, 2.0);
    for (double* v : {real.data(), fake.data()})
        for (int i = 0; i < 12; ++i)
            if (std::abs(std::abs(v[i]) - 1.0) < 0.05)
                v[i] += 0.2;
    CHECK(grad_check([](Tape&, const std::vector<Var>& v) { return hinge_losses(v[0], v[1]).d; }, {real, fake}) <
          1e-4);
    CHECK(grad_check([](Tape&, const std::vector<Var>& v) { return hinge_losses(v[0], v[1]).g_adv; },
                     {real, fake}) < 1e-4);
}

TEST_CASE("perceptual, feature matching and mask losses")
{
    GanModel m = init_model(small_config());
    std::mt19937_64 rng(22);
    const Tensor a = Tensor::uniform({3, 16, 16}, -1, 1, rng), b = Tensor::uniform({3, 16, 16}, -1, 1, rng);
    Tape t;
    Binder bind(t);
    const Var av = t.constant(a), bv = t.constant(b);
    CHECK(perceptual_loss(m, bind, av, av).value().item() == 0.0);
    const double ab = perceptual_loss(m, bind, av, bv).value().item();
    CHECK(ab > 0.0);
    CHECK(perceptual_loss(m, bind, bv, av).value().item() == ab);

    // Layerwise oracle through the feature stack.
    const auto fa = perceptual_features(m, bind, av), fb = perceptual_features(m, bind, bv);
    REQUIRE(fa.size() == 3);
    double oracle = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l)
    {
        double s = 0.0;
        const Tensor& x = fa[l].value();
        const Tensor& y = fb[l].value();
        for (std::size_t i = 0; i < x.size(); ++i)
            s += std::abs(x[i] - y[i]);
        oracle += s / static_cast<double>(x.size());
    }
    CHECK(std::abs(ab - oracle) < 1e-10);
    for (const nn::Parameter* p : m.params.all())
        if (p->name.starts_with("VGG."))
            CHECK_FALSE(p->trainable);

    // Feature matching: mean over layers; linear in a same-sign perturbation.
    std::vector<Var> f1, f2, f3;
    const std::vector<nn::Shape> shapes = {{2, 4, 4}, {3, 2, 2}, {5}};
    double fm_oracle = 0.0;
    for (std::size_t l = 0; l < shapes.size(); ++l)
    {
        const Tensor x = rnd(shapes[l], 30 + l);
        Tensor d = rnd(shapes[l], 40 + l);
        Tensor y = x, y2 = x;
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            d[i] = std::abs(d[i]);
            y[i] += d[i];
            y2[i] += 3.0 * d[i];
            s += d[i];
        }
        fm_oracle += s / static_cast<double>(x.size()) / 3.0;
        f1.push_back(t.constant(x));
        f2.push_back(t.constant(y));
        f3.push_back(t.constant(y2));
    }
    CHECK(feature_matching_loss(f1, f1).value().item() == 0.0);
    const double fm = feature_matching_loss(f2, f1).value().item();
    CHECK(std::abs(fm - fm_oracle) < 1e-10);
    CHECK(std::abs(feature_matching_loss(f3, f1).value().item() - 3.0 * fm) < 1e-10);

    const Tensor m1 = Tensor::uniform({1, 16, 16}, 0, 1, rng), m2 = Tensor::uniform({1, 16, 16}, 0, 1, rng);
    CHECK(mask_loss(t.constant(m1), t.constant(m1)).value().item() == 0.0);
    CHECK(mask_loss(t.constant(Tensor({1, 16, 16}, 1.0)), t.constant(Tensor({1, 16, 16}))).value().item() == 1.0);
    double ml = 0.0;
    for (std::size_t i = 0; i < m1.size(); ++i)
        ml += std::abs(m1[i] - m2[i]);
    CHECK(std::abs(mask_loss(t.constant(m1), t.constant(m2)).value().item() - ml / 256.0) < 1e-10);
}

TEST_CASE("generator objective is the weighted sum of its parts")
{
    Tape t;
    const Var adv = t.constant(Tensor::scalar(0.3)), vgg = t.constant(Tensor::scalar(1.7)),
              feat = t.constant(Tensor::scalar(0.25)), mask = t.constant(Tensor::scalar(0.125));
    const LossWeights w;
    CHECK(w.mch == 10.0);
    CHECK(w.vgg == 10.0);
    CHECK(w.feat == 10.0);
    CHECK(w.mask == 10.0);
    CHECK(std::abs(generator_objective(adv, vgg, feat, mask, w).value().item() - (0.3 + 17.0 + 2.5 + 1.25)) < 1e-10);
    CHECK(generator_objective(adv, vgg, feat, mask, {0, 0, 0, 0}).value().item() == 0.3);
}

TEST_CASE("mouth rectangle")
{
    // Mouth box [10, 14] x [20, 22]: side 4, centre (12, 21).
    const Points2 lm = mouth_landmarks(10, 20, 14, 22);
    CHECK(mouth_rect(lm, 64, 64, 0.0) == CropRect{10, 19, 4, 4});
    // 25% margin: side 6 -> [9, 15] x [18, 24].
    CHECK(mouth_rect(lm, 64, 64, 0.25) == CropRect{9, 18, 6, 6});
    // Fractional extent rounds outwards: side 4 * 1.2 = 4.8 -> [9.6, 14.4] -> [9, 15].
    CHECK(mouth_rect(lm, 64, 64, 0.1) == CropRect{9, 18, 6, 6});
    // Clamped at the image border.
    const Points2 edge = mouth_landmarks(-3, 60, 5, 66);
    CHECK(mouth_rect(edge, 64, 64, 0.0) == CropRect{0, 59, 5, 5});
    CHECK_THROWS_AS(mouth_rect(mouth_landmarks(5, 5, 5, 5), 64, 64), std::invalid_argument);
    CHECK_THROWS_AS(mouth_rect(mouth_landmarks(100, 100, 110, 104), 64, 64), std::invalid_argument);

    Tape t;
    std::mt19937_64 rng(23);
    const Tensor frame = Tensor::uniform({3, 32, 32}, -1, 1, rng);
    const Var patch = mouth_crop(t.constant(frame), mouth_landmarks(10, 20, 14, 22), 4, 0.0);
    CHECK(patch.shape() == nn::Shape{3, 4, 4});
    // Same size crop and patch: plain copy of the rectangle.
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                CHECK(patch.value()[static_cast<std::size_t>((c * 4 + y) * 4 + x)] ==
                      frame[static_cast<std::size_t>((c * 32 + 19 + y) * 32 + 10 + x)]);
}

TEST_CASE("block flow")
{
    std::mt19937_64 rng(24);
    const Tensor a = Tensor::uniform({3, 32, 32}, -1, 1, rng);
    const Tensor zero = block_flow(a, a);
    CHECK(zero.shape() == nn::Shape{2, 4, 4});
    for (double v : zero.values())
        CHECK(v == 0.0);

    // b(x, y) = a(x - 2, y): content moves two pixels to the right.
    Tensor b({3, 32, 32});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                b[static_cast<std::size_t>((c * 32 + y) * 32 + x)] =
                    x >= 2 ? a[static_cast<std::size_t>((c * 32 + y) * 32 + x - 2)] : 5.0;
    const Tensor f = block_flow(a, b);
    for (int by = 0; by < 4; ++by)
        for (int bx = 0; bx < 3; ++bx) // the last column cannot move right
        {
            CHECK(f[static_cast<std::size_t>(by * 4 + bx)] == 2.0);
            CHECK(f[static_cast<std::size_t>(16 + by * 4 + bx)] == 0.0);
        }

    // Constant image: every candidate ties, so the smallest displacement wins.
    const Tensor flat({1, 16, 16}, 0.5);
    const Tensor flat_flow = block_flow(flat, flat);
    for (double v : flat_flow.values())
        CHECK(v == 0.0);
    // Stripes with period 2 matched against their one-pixel shift: every odd dx matches exactly.
    Tensor stripes({1, 8, 24});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 24; ++x)
            stripes[static_cast<std::size_t>(y * 24 + x)] = x % 2;
    Tensor shifted({1, 8, 24});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 24; ++x)
            shifted[static_cast<std::size_t>(y * 24 + x)] = (x + 1) % 2;
    const Tensor tie = block_flow(stripes, shifted, 8, 4);
    // Middle block: dx = -1 and dx = +1 both match exactly; lexicographic order picks -1.
    CHECK(tie[1] == -1.0);
    CHECK(tie[3 + 1] == 0.0);
    CHECK_THROWS_AS(block_flow(a, flat), std::invalid_argument);
}

TEST_CASE("temporal discriminator scales")
{
    CHECK(temporal_indices(8, 0).size() == 8);
    CHECK(temporal_indices(8, 1) == std::vector<int>{0, 2, 4, 6});
    CHECK(temporal_indices(8, 2) == std::vector<int>{0, 4});

    GanModel m = init_model(small_config());
    std::mt19937_64 rng(25);
    std::vector<Tensor> frames;
    for (int k = 0; k < 8; ++k)
        frames.push_back(Tensor::uniform({3, 16, 16}, -1, 1, rng));
    auto scores = [&](const std::vector<Tensor>& fr, const std::vector<Tensor>& flows) {
        Tape t;
        Binder bind(t);
        std::vector<Var> v;
        for (const Tensor& f : fr)
            v.push_back(t.constant(f));
        const TemporalScore s = temporal_score(m, bind, v, flows);
        std::vector<Tensor> out;
        for (const Var& x : s.scores)
            out.push_back(x.value());
        CHECK(s.lengths == std::vector<int>{8, 4, 2});
        return out;
    };
    const std::vector<Tensor> still(8, frames[0]);
    const std::vector<Tensor> zero_flow(7, Tensor({2, 2, 2}));
    CHECK(scores(still, zero_flow) == scores(still, zero_flow));

    std::vector<Tensor> permuted = frames;
    std::swap(permuted[0], permuted[4]);
    const auto base = scores(frames, zero_flow), perm = scores(permuted, zero_flow);
    for (int s = 0; s < 3; ++s)
        CHECK(base[static_cast<std::size_t>(s)] != perm[static_cast<std::size_t>(s)]);

    Tape t;
    Binder bind(t);
    std::vector<Var> three;
    for (int k = 0; k < 3; ++k)
        three.push_back(t.constant(frames[static_cast<std::size_t>(k)]));
    CHECK_THROWS_AS(temporal_score(m, bind, three, std::vector<Tensor>(2, Tensor({2, 2, 2}))), std::invalid_argument);
}

TEST_CASE("end-to-end gradients of the training losses")
{
    GanConfig cfg = small_config();
    cfg.num_identities = 2;
    GanModel model = init_model(cfg);
    const std::vector<IdentityClip> data = {testing_support::synthetic_clip(1, 10, 16),
                                            testing_support::synthetic_clip(2, 10, 16)};
    ClipSample sample;
    sample.identity = 1;
    sample.start = 2;
    sample.embed_frames = {0, 3, 7};

    using testing_support::TrainingLoss;
    const std::pair<TrainingLoss, const char*> groups[] = {
        {TrainingLoss::generator, "G."},     {TrainingLoss::generator, "E."},
        {TrainingLoss::embedder, "E."},      {TrainingLoss::discriminator, "DI."},
        {TrainingLoss::discriminator, "DM."}, {TrainingLoss::discriminator, "DV."},
    };
    for (const auto& [which, prefix] : groups)
    {
        CAPTURE(prefix);
        CHECK(testing_support::training_loss_grad_error(model, data, sample, which, prefix) < 1e-4);
    }
}

TEST_CASE("zero weights reduce the generator loss to the adversarial term")
{
    GanConfig cfg = small_config();
    cfg.num_identities = 1;
    GanModel model = init_model(cfg);
    const std::vector<IdentityClip> data = {testing_support::synthetic_clip(3, 9, 16)};
    ClipSample s;
    s.embed_frames = {0};
    Tape tape;
    Binder bind(tape);
    const StepLosses zero = generator_losses(model, bind, data, s, {0, 0, 0, 0});
    CHECK(zero.g_total.value().item() == zero.g_adv.value().item());
    const StepLosses def = generator_losses(model, bind, data, s, LossWeights{});
    const double parts = def.g_adv.value().item() + 10.0 * def.vgg.value().item() + 10.0 * def.feat.value().item() +
                         10.0 * def.mask.value().item();
    CHECK(std::abs(def.g_total.value().item() - parts) < 1e-10);
    CHECK(std::abs(def.e_total->value().item() - (def.g_adv.value().item() + 10.0 * def.mch->value().item())) <
          1e-10);
}

TEST_CASE("fine-tuning conversion")
{
    GanConfig cfg = small_config();
    GanModel multi = init_model(cfg);
    std::mt19937_64 rng(31);
    std::vector<Tensor> frames;
    for (int i = 0; i < 5; ++i)
        frames.push_back(Tensor::uniform({3, 16, 16}, -1, 1, rng));
    const Tensor h_new = identity_feature(multi, frames);
    GanModel person = finetune_init(multi, frames);

    CHECK(person.person_specific);
    CHECK(person.num_identities() == 1);
    for (const nn::Parameter* p : person.params.all())
    {
        CHECK_FALSE(p->name.ends_with(".Pg"));
        CHECK_FALSE(p->name.ends_with(".Pb"));
        CHECK_FALSE(p->name.starts_with("E."));
    }
    for (const nn::Parameter* p : multi.params.all())
        if (person.params.contains(p->name) && p->name != "DI.W")
            CHECK(person.params.at(p->name).value == p->value);

    GanModel substituted = multi;
    for (int k = 0; k < cfg.n_f; ++k)
        substituted.params.at("DI.W").value[static_cast<std::size_t>(k)] = h_new[static_cast<std::size_t>(k)];

    for (int trial = 0; trial < 10; ++trial)
    {
        const Tensor triplet = Tensor::uniform({9, 16, 16}, 0, 1, rng), prev = Tensor::uniform({6, 16, 16}, -1, 1, rng);
        CHECK(run_generator(person, triplet, prev, std::nullopt) == run_generator(multi, triplet, prev, h_new));
        const Tensor frame = Tensor::uniform({3, 16, 16}, -1, 1, rng), nmfc = Tensor::uniform({3, 16, 16}, 0, 1, rng);
        Tape t;
        Binder b(t);
        const Tensor converted = realism_score(person, b, t.constant(frame), t.constant(nmfc), 0).value();
        const Tensor original = realism_score(substituted, b, t.constant(frame), t.constant(nmfc), 0).value();
        CHECK(converted == original);
    }

    // The converted model survives a checkpoint round trip.
    const GanModel back = from_checkpoint(nn::decode_checkpoint(nn::encode_checkpoint(to_checkpoint(person))));
    CHECK(back.person_specific);
    const Tensor triplet = Tensor::uniform({9, 16, 16}, 0, 1, rng), prev({6, 16, 16});
    GanModel back_copy = back;
    CHECK(run_generator(back_copy, triplet, prev, std::nullopt) == run_generator(person, triplet, prev, std::nullopt));

    CHECK_THROWS_AS(finetune_init(multi, {}), std::invalid_argument);
    CHECK_THROWS_AS(finetune_init(person, frames), std::invalid_argument);
}

TEST_CASE("multi-person training reduces the generator loss and is deterministic")
{
    GanConfig cfg;
    cfg.num_identities = 2;
    const std::vector<IdentityClip> data = {testing_support::synthetic_clip(101, 20),
                                            testing_support::synthetic_clip(202, 20)};
    TrainConfig tc;
    tc.steps = 200;
    tc.seed = 5;

    GanModel model = init_model(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainLog log = train_init_stage(model, data, tc);
    MESSAGE("200 init steps took "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s");
    REQUIRE(log.records.size() == 200);
    double start = 0, end = 0;
    for (int i = 0; i < 10; ++i)
    {
        start += log.records[static_cast<std::size_t>(i)].g_total / 10.0;
        end += log.records[static_cast<std::size_t>(190 + i)].g_total / 10.0;
    }
    MESSAGE("G loss: first 10 mean " << start << ", last 10 mean " << end);
    CHECK(end < 0.7 * start);
    for (const LossRecord& r : log.records)
        CHECK(std::isfinite(r.g_total + r.d + r.mch));

    // Same seed, shorter run: identical trace prefix.
    GanModel again = init_model(cfg);
    TrainConfig short_cfg = tc;
    short_cfg.steps = 5;
    const TrainLog log2 = train_init_stage(again, data, short_cfg);
    for (std::size_t i = 0; i < 5; ++i)
    {
        CHECK(log2.records[i].g_total == log.records[i].g_total);
        CHECK(log2.records[i].d == log.records[i].d);
    }

    const std::filesystem::path csv = std::filesystem::temp_directory_path() / "headswap_train_log.csv";
    log2.write_csv(csv);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,L_D,L_G_adv,L_vgg,L_feat,L_mask,L_mch");
    int rows = 0;
    for (std::string line; std::getline(in, line);)
        ++rows;
    CHECK(rows == 5);
    std::filesystem::remove(csv);

    CHECK_THROWS_AS(train_init_stage(again, {data[0]}, short_cfg), std::invalid_argument);
}

TEST_CASE("fine-tuning with zero steps leaves the model unchanged")
{
    GanConfig cfg = small_config();
    GanModel multi = init_model(cfg);
    const IdentityClip clip = testing_support::synthetic_clip(9, 12, 16);
    GanModel person = finetune_init(multi, clip.frames);
    const GanModel before = person;
    TrainConfig tc;
    tc.steps = 0;
    const TrainLog log = finetune_train(person, clip, tc);
    CHECK(log.records.empty());
    for (const nn::Parameter* p : before.params.all())
        CHECK(person.params.at(p->name).value == p->value);
    CHECK_THROWS_AS(finetune_train(multi, clip, tc), std::invalid_argument);
}
