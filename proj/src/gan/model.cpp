#include "headswap/gan/model.hpp"

#include <cmath>
#include <random>

namespace headswap::gan {

namespace {

constexpr int kFlowBlock = 8;
constexpr int kFlowRadius = 4;
constexpr int kNumScales = 3;
constexpr std::uint64_t kPerceptualSeed = 0x5eedf00dULL;

Tensor he_normal(nn::Shape shape, double gain, std::mt19937_64& rng)
{
    const int fan_in = shape[1] * shape[2] * shape[3];
    return Tensor::randn(std::move(shape), gain * std::sqrt(2.0 / ((1.0 + 0.04) * fan_in)), rng);
}

void add_conv(nn::ParamStore& ps, const std::string& name, int in, int out, int k, double gain,
              std::mt19937_64& rng, bool trainable = true)
{
    ps.add(name + ".w", he_normal({out, in, k, k}, gain, rng), trainable);
    ps.add(name + ".b", Tensor({out}), trainable);
}

Var conv(GanModel& m, Binder& bind, const std::string& name, Var x, int stride = 1)
{
    return nn::conv2d(x, bind(m.params.at(name + ".w")), bind(m.params.at(name + ".b")), stride);
}

int temporal_in_channels(int K, int scale)
{
    const int n = static_cast<int>(temporal_indices(K, scale).size());
    return 3 * n + 2 * (n - 1);
}

void check_image(const Var& x, int channels, const char* what)
{
    const nn::Shape& s = x.shape();
    if (s.size() != 3 || s[0] != channels)
        throw std::invalid_argument(std::string("shape mismatch: ") + what + " must be {" + std::to_string(channels) +
                                    ",H,W}, got " + nn::shape_str(s));
}

Var normalize_site(GanModel& m, Binder& bind, const std::string& site, Var x, const std::optional<Var>& h)
{
    const double eps = m.config.norm_eps;
    if (m.person_specific)
        return instance_norm(x, bind(m.params.at(site + ".gamma")), bind(m.params.at(site + ".beta")), eps);
    return adain(x, *h, bind(m.params.at(site + ".Pg")), bind(m.params.at(site + ".Pb")), eps);
}

} // namespace

nlohmann::json GanConfig::to_json() const
{
    return {{"resolution", resolution}, {"channels", channels},       {"n_f", n_f},
            {"num_identities", num_identities}, {"temporal_k", temporal_k}, {"mouth_patch", mouth_patch},
            {"mouth_margin", mouth_margin}, {"norm_eps", norm_eps},     {"seed", seed}};
}

GanConfig GanConfig::from_json(const nlohmann::json& j)
{
    GanConfig c;
    c.resolution = j.value("resolution", c.resolution);
    c.channels = j.value("channels", c.channels);
    c.n_f = j.value("n_f", c.n_f);
    c.num_identities = j.value("num_identities", c.num_identities);
    c.temporal_k = j.value("temporal_k", c.temporal_k);
    c.mouth_patch = j.value("mouth_patch", c.mouth_patch);
    c.mouth_margin = j.value("mouth_margin", c.mouth_margin);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    c.seed = j.value("seed", c.seed);
    return c;
}

const std::vector<std::string>& generator_norm_sites()
{
    static const std::vector<std::string> sites = {"G.encA.0", "G.encA.1", "G.encB.0",
                                                   "G.encB.1", "G.dec.0",  "G.dec.1"};
    return sites;
}

int norm_site_channels(const GanConfig& c, const std::string& site)
{
    if (site == "G.encA.0" || site == "G.encB.0" || site == "G.dec.1")
        return c.channels;
    if (site == "G.encA.1" || site == "G.encB.1" || site == "G.dec.0")
        return 2 * c.channels;
    throw std::invalid_argument("unknown normalization site " + site);
}

GanModel init_model(const GanConfig& c)
{
    if (c.resolution <= 0 || c.resolution % 8 != 0)
        throw std::invalid_argument("resolution must be a positive multiple of 8");
    if (c.channels < 1 || c.n_f < 1 || c.num_identities < 1 || c.mouth_patch < 4)
        throw std::invalid_argument("invalid network widths");
    if (c.temporal_k < 4)
        throw std::invalid_argument("temporal clips need K >= 4");

    GanModel m;
    m.config = c;
    nn::ParamStore& ps = m.params;
    std::mt19937_64 rng(c.seed);
    const int C = c.channels;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(c.n_f));

    add_conv(ps, "E.0", 3, C, 3, 1.0, rng);
    add_conv(ps, "E.1", C, 2 * C, 3, 1.0, rng);
    add_conv(ps, "E.2", 2 * C, 4 * C, 3, 1.0, rng);
    add_conv(ps, "E.3", 4 * C, c.n_f, 3, 1.0, rng);

    add_conv(ps, "G.encA.0", 9, C, 3, 1.0, rng);
    add_conv(ps, "G.encA.1", C, 2 * C, 3, 1.0, rng);
    add_conv(ps, "G.encB.0", 6, C, 3, 1.0, rng);
    add_conv(ps, "G.encB.1", C, 2 * C, 3, 1.0, rng);
    add_conv(ps, "G.dec.0", 2 * C, 2 * C, 3, 1.0, rng);
    add_conv(ps, "G.dec.1", 2 * C, C, 3, 1.0, rng);
    add_conv(ps, "G.out", C, 4, 3, 0.5, rng);
    for (const std::string& site : generator_norm_sites())
    {
        const int ch = norm_site_channels(c, site);
        ps.add(site + ".Pg", Tensor::randn({ch, c.n_f}, proj_std, rng));
        ps.add(site + ".Pb", Tensor::randn({ch, c.n_f}, 0.5 * proj_std, rng));
    }

    add_conv(ps, "DI.0", 6, C, 3, 1.0, rng);
    add_conv(ps, "DI.1", C, 2 * C, 3, 1.0, rng);
    add_conv(ps, "DI.2", 2 * C, 4 * C, 3, 1.0, rng);
    add_conv(ps, "DI.patch", 4 * C, 1, 3, 0.5, rng);
    add_conv(ps, "DI.feat", 4 * C, c.n_f, 3, 1.0, rng);
    ps.add("DI.W", Tensor::randn({c.num_identities, c.n_f}, proj_std, rng));
    ps.add("DI.w0", Tensor({c.n_f}));
    ps.add("DI.c", Tensor({1}));

    add_conv(ps, "DM.0", 3, C, 3, 1.0, rng);
    add_conv(ps, "DM.1", C, 2 * C, 3, 1.0, rng);
    add_conv(ps, "DM.patch", 2 * C, 1, 3, 0.5, rng);

    for (int s = 0; s < kNumScales; ++s)
    {
        const std::string p = "DV." + std::to_string(s);
        add_conv(ps, p + ".0", temporal_in_channels(c.temporal_k, s), C, 3, 1.0, rng);
        add_conv(ps, p + ".1", C, 2 * C, 3, 1.0, rng);
        add_conv(ps, p + ".patch", 2 * C, 1, 3, 0.5, rng);
    }

    std::mt19937_64 vgg_rng(kPerceptualSeed);
    add_conv(ps, "VGG.0", 3, 8, 3, 1.0, vgg_rng, false);
    add_conv(ps, "VGG.1", 8, 16, 3, 1.0, vgg_rng, false);
    add_conv(ps, "VGG.2", 16, 16, 3, 1.0, vgg_rng, false);
    return m;
}

nn::Checkpoint to_checkpoint(const GanModel& model)
{
    nn::Checkpoint ck;
    ck.meta = {{"kind", "headswap-gan"}, {"config", model.config.to_json()}, {"person_specific", model.person_specific}};
    ck.params = model.params;
    return ck;
}

GanModel from_checkpoint(const nn::Checkpoint& ckpt)
{
    if (ckpt.meta.value("kind", std::string()) != "headswap-gan")
        throw std::runtime_error("corrupt header: checkpoint does not hold a GAN model");
    GanModel m;
    m.config = GanConfig::from_json(ckpt.meta.at("config"));
    m.person_specific = ckpt.meta.at("person_specific").get<bool>();
    m.params = ckpt.params;
    for (const std::string& site : generator_norm_sites())
    {
        const bool ok = m.person_specific ? m.params.contains(site + ".gamma") && m.params.contains(site + ".beta")
                                          : m.params.contains(site + ".Pg") && m.params.contains(site + ".Pb");
        if (!ok)
            throw std::runtime_error("corrupt header: missing normalization parameters at " + site);
    }
    return m;
}

Var standardize(Var x, double eps)
{
    const Var centred = nn::sub_channel(x, nn::channel_mean(x));
    return nn::mul_channel(centred, nn::rsqrt(nn::channel_var(x), eps));
}

Var channel_affine(Var x, Var gamma, Var beta) { return nn::add_channel(nn::mul_channel(x, gamma), beta); }

std::pair<Var, Var> modulation(Var h, Var p_gamma, Var p_beta)
{
    const int n_f = p_gamma.shape()[1];
    if (h.value().size() != static_cast<std::size_t>(n_f) || p_beta.shape() != p_gamma.shape())
        throw std::invalid_argument("shape mismatch in modulation: h " + nn::shape_str(h.shape()) + ", P " +
                                    nn::shape_str(p_gamma.shape()));
    const Var col = nn::reshape(h, {n_f, 1});
    const int C = p_gamma.shape()[0];
    return {nn::reshape(nn::matmul(p_gamma, col), {C}), nn::reshape(nn::matmul(p_beta, col), {C})};
}

Var adain(Var x, Var h, Var p_gamma, Var p_beta, double eps)
{
    const auto [gamma, beta] = modulation(h, p_gamma, p_beta);
    return channel_affine(standardize(x, eps), gamma, beta);
}

Var instance_norm(Var x, Var gamma, Var beta, double eps) { return channel_affine(standardize(x, eps), gamma, beta); }

Var embed(GanModel& m, Binder& bind, Var frame)
{
    if (m.person_specific)
        throw std::logic_error("person-specific models carry no embedder");
    check_image(frame, 3, "embedder input");
    Var x = nn::leaky_relu(conv(m, bind, "E.0", frame, 2));
    x = nn::leaky_relu(conv(m, bind, "E.1", x, 2));
    x = nn::leaky_relu(conv(m, bind, "E.2", x, 2));
    return nn::channel_mean(conv(m, bind, "E.3", x, 2));
}

Var embed_average(GanModel& m, Binder& bind, const std::vector<Var>& frames)
{
    if (frames.empty())
        throw std::invalid_argument("embed_average needs at least one frame");
    std::vector<Var> e;
    e.reserve(frames.size());
    for (const Var& f : frames)
        e.push_back(embed(m, bind, f));
    return nn::average(e);
}

FrameOutput generate_frame(GanModel& m, Binder& bind, Var nmfc_triplet, Var prev_frames, std::optional<Var> h)
{
    check_image(nmfc_triplet, 9, "NMFC triplet");
    check_image(prev_frames, 6, "previous frames");
    if (nmfc_triplet.shape() != nn::Shape{9, prev_frames.shape()[1], prev_frames.shape()[2]})
        throw std::invalid_argument("shape mismatch: NMFC and previous frames differ in size");
    if (nmfc_triplet.shape()[1] % 2 != 0 || nmfc_triplet.shape()[2] % 2 != 0)
        throw std::invalid_argument("generator needs even spatial sizes");
    if (m.person_specific == h.has_value())
        throw std::invalid_argument(m.person_specific ? "person-specific generator takes no identity vector"
                                                      : "adaptive generator needs an identity vector");

    auto block = [&](const std::string& site, Var x, int stride) {
        return nn::leaky_relu(normalize_site(m, bind, site, conv(m, bind, site, x, stride), h));
    };
    const Var a = block("G.encA.1", block("G.encA.0", nmfc_triplet, 1), 2);
    const Var b = block("G.encB.1", block("G.encB.0", prev_frames, 1), 2);
    Var x = block("G.dec.0", nn::add(a, b), 1);
    x = block("G.dec.1", nn::upsample2x(x), 1);
    const Var out = conv(m, bind, "G.out", x);
    return {nn::tanh(nn::slice(out, 0, 3)), nn::sigmoid(nn::slice(out, 3, 1))};
}

RolloutOutput rollout(GanModel& m, Binder& bind, const std::vector<Var>& nmfc_seq, std::optional<Var> h,
                      const RolloutContext& ctx)
{
    if (nmfc_seq.empty())
        throw std::invalid_argument("rollout needs at least one NMFC frame");
    nn::Tape& tape = bind.tape();
    const nn::Shape s = nmfc_seq.front().shape();
    check_image(nmfc_seq.front(), 3, "NMFC frame");
    const Var zero3 = tape.constant(Tensor({3, s[1], s[2]}));
    auto context_var = [&](const std::optional<Tensor>& t) {
        if (!t)
            return zero3;
        if (t->shape() != s)
            throw std::invalid_argument("shape mismatch: rollout context " + nn::shape_str(t->shape()));
        return tape.constant(*t);
    };
    // Index i of these lists is time i - 2.
    std::vector<Var> nmfc = {context_var(ctx.nmfc[0]), context_var(ctx.nmfc[1])};
    std::vector<Var> frames = {context_var(ctx.frames[0]), context_var(ctx.frames[1])};
    nmfc.insert(nmfc.end(), nmfc_seq.begin(), nmfc_seq.end());

    RolloutOutput out;
    for (std::size_t t = 0; t < nmfc_seq.size(); ++t)
    {
        const Var triplet = nn::concat({nmfc[t], nmfc[t + 1], nmfc[t + 2]});
        const Var prev = nn::concat({frames[t], frames[t + 1]});
        const FrameOutput f = generate_frame(m, bind, triplet, prev, h);
        frames.push_back(f.frame);
        out.frames.push_back(f.frame);
        out.masks.push_back(f.mask);
    }
    return out;
}

ImageScore image_discriminator(GanModel& m, Binder& bind, Var frame, Var nmfc, int id_index)
{
    check_image(frame, 3, "frame");
    check_image(nmfc, 3, "NMFC");
    const Tensor& W = m.params.at("DI.W").value;
    if (id_index < 0 || id_index >= W.dim(0))
        throw std::out_of_range("identity index " + std::to_string(id_index) + " out of range for " +
                                std::to_string(W.dim(0)) + " identities");
    Var x = nn::leaky_relu(conv(m, bind, "DI.0", nn::concat({frame, nmfc}), 2));
    const Var f1 = x;
    x = nn::leaky_relu(conv(m, bind, "DI.1", x, 2));
    const Var f2 = x;
    x = nn::leaky_relu(conv(m, bind, "DI.2", x, 2));
    const Var f3 = x;

    ImageScore out;
    out.patch = conv(m, bind, "DI.patch", x);
    out.d = nn::channel_mean(conv(m, bind, "DI.feat", x));
    const int n_f = m.config.n_f;
    const Var w_i = nn::reshape(nn::slice(bind(m.params.at("DI.W")), id_index, 1), {n_f});
    out.score = nn::add(nn::dot(out.d, nn::add(w_i, bind(m.params.at("DI.w0")))), bind(m.params.at("DI.c")));
    out.features = {f1, f2, f3};
    return out;
}

Var realism_score(GanModel& m, Binder& bind, Var frame, Var nmfc, int id_index)
{
    return image_discriminator(m, bind, frame, nmfc, id_index).score;
}

PatchScore mouth_discriminator(GanModel& m, Binder& bind, Var patch)
{
    check_image(patch, 3, "mouth patch");
    const Var f1 = nn::leaky_relu(conv(m, bind, "DM.0", patch, 2));
    const Var f2 = nn::leaky_relu(conv(m, bind, "DM.1", f1, 2));
    return {conv(m, bind, "DM.patch", f2), {f1, f2}};
}

std::vector<int> temporal_indices(int K, int scale)
{
    std::vector<int> idx;
    for (int i = 0; i < K; i += 1 << scale)
        idx.push_back(i);
    return idx;
}

TemporalScore temporal_score(GanModel& m, Binder& bind, const std::vector<Var>& frames,
                             const std::vector<Tensor>& flows)
{
    const int K = static_cast<int>(frames.size());
    if (K < 4)
        throw std::invalid_argument("temporal_score needs K >= 4 frames");
    if (K != m.config.temporal_k)
        throw std::invalid_argument("temporal_score: model was built for K = " + std::to_string(m.config.temporal_k));
    if (static_cast<int>(flows.size()) != K - 1)
        throw std::invalid_argument("temporal_score needs K - 1 flow fields");
    for (const Var& f : frames)
        check_image(f, 3, "temporal frame");
    const int H = frames.front().shape()[1], W = frames.front().shape()[2];
    nn::Tape& tape = bind.tape();

    auto flow_image = [&](int from, int to) {
        Tensor img({2, H, W});
        for (int k = from; k < to; ++k)
        {
            const Tensor& f = flows[static_cast<std::size_t>(k)];
            if (f.rank() != 3 || f.dim(0) != 2)
                throw std::invalid_argument("flow fields must be {2, h, w}");
            const int fh = f.dim(1), fw = f.dim(2);
            for (int c = 0; c < 2; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                    {
                        const int by = std::min(fh - 1, y / kFlowBlock), bx = std::min(fw - 1, x / kFlowBlock);
                        img[(static_cast<std::size_t>(c) * H + y) * W + x] +=
                            f[(static_cast<std::size_t>(c) * fh + by) * fw + bx] / kFlowRadius;
                    }
        }
        return tape.constant(std::move(img));
    };

    TemporalScore out;
    for (int s = 0; s < kNumScales; ++s)
    {
        const std::vector<int> idx = temporal_indices(K, s);
        std::vector<Var> parts;
        for (int i : idx)
            parts.push_back(frames[static_cast<std::size_t>(i)]);
        for (std::size_t j = 0; j + 1 < idx.size(); ++j)
            parts.push_back(flow_image(idx[j], idx[j + 1]));
        const std::string p = "DV." + std::to_string(s);
        const Var f1 = nn::leaky_relu(conv(m, bind, p + ".0", nn::concat(parts), 2));
        const Var f2 = nn::leaky_relu(conv(m, bind, p + ".1", f1, 2));
        out.scores.push_back(conv(m, bind, p + ".patch", f2));
        out.features.push_back(f1);
        out.features.push_back(f2);
        out.lengths.push_back(static_cast<int>(idx.size()));
    }
    return out;
}

std::vector<Var> perceptual_features(GanModel& m, Binder& bind, Var image)
{
    check_image(image, 3, "perceptual input");
    const Var f1 = nn::relu(conv(m, bind, "VGG.0", image, 1));
    const Var f2 = nn::relu(conv(m, bind, "VGG.1", f1, 2));
    const Var f3 = nn::relu(conv(m, bind, "VGG.2", f2, 2));
    return {f1, f2, f3};
}

} // namespace headswap::gan
