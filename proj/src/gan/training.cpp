#include "headswap/gan/training.hpp"

#include "headswap/gan/vision.hpp"

#include <fstream>
#include <iomanip>

namespace headswap::gan {

namespace {

void check_chw(const Tensor& t, int channels, int H, int W, const char* what)
{
    if (t.rank() != 3 || t.dim(0) != channels || t.dim(1) != H || t.dim(2) != W)
        throw std::invalid_argument(std::string("dimension mismatch: ") + what + " has shape " + nn::shape_str(t.shape()));
}

void check_data(const GanModel& model, const std::vector<IdentityClip>& data)
{
    if (data.empty())
        throw std::invalid_argument("no training clips");
    const int R = model.config.resolution;
    for (const IdentityClip& clip : data)
    {
        clip.validate();
        if (clip.size() < model.config.temporal_k)
            throw std::invalid_argument("training clip shorter than the temporal window");
        check_chw(clip.frames.front(), 3, R, R, "frame vs model resolution");
    }
}

std::vector<Var> constants(nn::Tape& tape, const std::vector<Tensor>& src, int begin, int count)
{
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = begin; i < begin + count; ++i)
        out.push_back(tape.constant(src[static_cast<std::size_t>(i)]));
    return out;
}

RolloutContext context_for(const IdentityClip& clip, const ClipSample& s)
{
    RolloutContext ctx;
    if (s.zero_context)
        return ctx;
    for (int j = 0; j < 2; ++j)
    {
        const int idx = s.start - 2 + j;
        if (idx < 0)
            continue;
        ctx.nmfc[static_cast<std::size_t>(j)] = clip.nmfc[static_cast<std::size_t>(idx)];
        ctx.frames[static_cast<std::size_t>(j)] = clip.frames[static_cast<std::size_t>(idx)];
    }
    return ctx;
}

std::optional<Var> sample_identity(GanModel& model, Binder& bind, const IdentityClip& clip, const ClipSample& s)
{
    if (model.person_specific)
        return std::nullopt;
    std::vector<Var> frames;
    for (int i : s.embed_frames)
        frames.push_back(bind.tape().constant(clip.frames.at(static_cast<std::size_t>(i))));
    return embed_average(model, bind, frames);
}

int id_index(const GanModel& model, const ClipSample& s)
{
    return model.person_specific ? 0 : s.identity;
}

/// Discriminator outputs for one K-frame sequence.
struct DiscOutputs
{
    std::vector<Var> scores, patches, mouths;
    std::vector<Var> temporal;
    std::vector<Var> features;
};

DiscOutputs discriminate(GanModel& model, Binder& bind, const IdentityClip& clip, const ClipSample& s,
                         const std::vector<Var>& frames, const std::vector<Var>& nmfc, const std::vector<Tensor>& flows)
{
    const GanConfig& cfg = model.config;
    DiscOutputs out;
    for (std::size_t k = 0; k < frames.size(); ++k)
    {
        ImageScore is = image_discriminator(model, bind, frames[k], nmfc[k], id_index(model, s));
        out.scores.push_back(is.score);
        out.patches.push_back(is.patch);
        out.features.insert(out.features.end(), is.features.begin(), is.features.end());
        const Points2& lm = clip.landmarks[static_cast<std::size_t>(s.start) + k];
        out.mouths.push_back(
            mouth_discriminator(model, bind, mouth_crop(frames[k], lm, cfg.mouth_patch, cfg.mouth_margin)).patch);
    }
    TemporalScore ts = temporal_score(model, bind, frames, flows);
    out.temporal = ts.scores;
    out.features.insert(out.features.end(), ts.features.begin(), ts.features.end());
    return out;
}

std::vector<Tensor> real_flows(const IdentityClip& clip, int start, int K)
{
    std::vector<Tensor> flows;
    for (int k = 0; k + 1 < K; ++k)
        flows.push_back(block_flow(clip.frames[static_cast<std::size_t>(start + k)],
                                   clip.frames[static_cast<std::size_t>(start + k + 1)]));
    return flows;
}

std::vector<HingeLosses> head_losses(const DiscOutputs& real, const DiscOutputs& fake)
{
    std::vector<HingeLosses> out;
    out.push_back(hinge_losses(nn::concat(real.scores), nn::concat(fake.scores)));
    out.push_back(hinge_losses(nn::concat(real.patches), nn::concat(fake.patches)));
    out.push_back(hinge_losses(nn::concat(real.mouths), nn::concat(fake.mouths)));
    for (std::size_t s = 0; s < real.temporal.size(); ++s)
        out.push_back(hinge_losses(real.temporal[s], fake.temporal[s]));
    return out;
}

Var mean_of(const std::vector<Var>& terms)
{
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i)
        acc = nn::add(acc, terms[i]);
    return nn::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

const std::vector<std::string> kDiscPrefixes = {"DI.", "DM.", "DV."};
const std::vector<std::string> kGenPrefixes = {"G.", "E."};

LossRecord run_step(GanModel& model, const std::vector<IdentityClip>& data, const TrainConfig& cfg,
                    std::mt19937_64& rng, nn::AdamState& adam_d, nn::AdamState& adam_g, nn::AdamState& adam_e,
                    int step)
{
    const ClipSample s = sample_clip(data, model, cfg, rng);
    LossRecord rec;
    rec.step = step;
    {
        model.params.zero_grad();
        nn::Tape tape;
        Binder bind(tape, kGenPrefixes);
        const Var ld = discriminator_loss(model, bind, data, s);
        rec.d = ld.value().item();
        tape.backward(ld);
        nn::adam_step(model.params.trainable("D"), cfg.adam, adam_d);
    }
    {
        model.params.zero_grad();
        nn::Tape tape;
        Binder bind(tape, kDiscPrefixes);
        const StepLosses l = generator_losses(model, bind, data, s, cfg.lambda);
        rec.g_adv = l.g_adv.value().item();
        rec.vgg = l.vgg.value().item();
        rec.feat = l.feat.value().item();
        rec.mask = l.mask.value().item();
        rec.g_total = l.g_total.value().item();
        if (l.mch)
            rec.mch = l.mch->value().item();
        tape.backward(l.g_total);
        nn::adam_step(model.params.trainable("G."), cfg.adam, adam_g);
        if (l.e_total)
        {
            model.params.zero_grad();
            tape.backward(*l.e_total);
            nn::adam_step(model.params.trainable("E."), cfg.adam, adam_e);
        }
    }
    return rec;
}

TrainLog train_loop(GanModel& model, const std::vector<IdentityClip>& data, const TrainConfig& cfg)
{
    if (cfg.steps < 0)
        throw std::invalid_argument("negative step count");
    std::mt19937_64 rng(cfg.seed);
    nn::AdamState adam_d, adam_g, adam_e;
    TrainLog log;
    for (int step = 0; step < cfg.steps; ++step)
        log.records.push_back(run_step(model, data, cfg, rng, adam_d, adam_g, adam_e, step));
    model.params.zero_grad();
    return log;
}

} // namespace

void IdentityClip::validate() const
{
    const std::size_t n = frames.size();
    if (n == 0)
        throw std::invalid_argument("empty clip");
    if (masks.size() != n || nmfc.size() != n || landmarks.size() != n)
        throw std::invalid_argument("dimension mismatch: clip frame, mask, nmfc and landmark counts differ");
    const int H = frames.front().rank() == 3 ? frames.front().dim(1) : 0;
    const int W = frames.front().rank() == 3 ? frames.front().dim(2) : 0;
    if (H <= 0 || W <= 0 || H % 8 != 0 || W % 8 != 0)
        throw std::invalid_argument("clip frames must be {3,H,W} with H and W multiples of 8");
    for (std::size_t i = 0; i < n; ++i)
    {
        check_chw(frames[i], 3, H, W, "clip frame");
        check_chw(masks[i], 1, H, W, "clip mask");
        check_chw(nmfc[i], 3, H, W, "clip nmfc");
        if (landmarks[i].rows() != 68)
            throw std::invalid_argument("dimension mismatch: landmarks need 68 points");
    }
}

IdentityClip IdentityClip::slice(int begin, int count) const
{
    if (begin < 0 || count < 0 || begin + count > size())
        throw std::out_of_range("clip slice out of range");
    IdentityClip out;
    const auto b = static_cast<std::ptrdiff_t>(begin), e = b + count;
    out.frames.assign(frames.begin() + b, frames.begin() + e);
    out.masks.assign(masks.begin() + b, masks.begin() + e);
    out.nmfc.assign(nmfc.begin() + b, nmfc.begin() + e);
    out.landmarks.assign(landmarks.begin() + b, landmarks.begin() + e);
    return out;
}

nlohmann::json TrainConfig::to_json() const
{
    return {{"steps", steps},
            {"lr", adam.lr},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"adam_eps", adam.eps},
            {"lambda_mch", lambda.mch},
            {"lambda_vgg", lambda.vgg},
            {"lambda_feat", lambda.feat},
            {"lambda_mask", lambda.mask},
            {"embed_frames", embed_frames},
            {"zero_context_probability", zero_context_probability},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j)
{
    TrainConfig c;
    c.steps = j.value("steps", c.steps);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.lambda.mch = j.value("lambda_mch", c.lambda.mch);
    c.lambda.vgg = j.value("lambda_vgg", c.lambda.vgg);
    c.lambda.feat = j.value("lambda_feat", c.lambda.feat);
    c.lambda.mask = j.value("lambda_mask", c.lambda.mask);
    c.embed_frames = j.value("embed_frames", c.embed_frames);
    c.zero_context_probability = j.value("zero_context_probability", c.zero_context_probability);
    c.seed = j.value("seed", c.seed);
    if (c.embed_frames < 1)
        throw std::invalid_argument("embed_frames must be >= 1");
    return c;
}

void TrainLog::write_csv(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "step,L_D,L_G_adv,L_vgg,L_feat,L_mask,L_mch\n" << std::setprecision(17);
    for (const LossRecord& r : records)
        out << r.step << ',' << r.d << ',' << r.g_adv << ',' << r.vgg << ',' << r.feat << ',' << r.mask << ','
            << r.mch << '\n';
}

ClipSample sample_clip(const std::vector<IdentityClip>& data, const GanModel& model, const TrainConfig& cfg,
                       std::mt19937_64& rng)
{
    const int K = model.config.temporal_k;
    ClipSample s;
    s.identity = std::uniform_int_distribution<int>(0, static_cast<int>(data.size()) - 1)(rng);
    const IdentityClip& clip = data[static_cast<std::size_t>(s.identity)];
    s.start = std::uniform_int_distribution<int>(0, clip.size() - K)(rng);
    s.zero_context = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.zero_context_probability;
    if (!model.person_specific)
    {
        std::uniform_int_distribution<int> pick(0, clip.size() - 1);
        for (int j = 0; j < cfg.embed_frames; ++j)
            s.embed_frames.push_back(pick(rng));
    }
    return s;
}

StepLosses generator_losses(GanModel& model, Binder& bind, const std::vector<IdentityClip>& data,
                            const ClipSample& s, const LossWeights& lambda)
{
    nn::Tape& tape = bind.tape();
    const int K = model.config.temporal_k;
    const IdentityClip& clip = data.at(static_cast<std::size_t>(s.identity));

    const std::optional<Var> h = sample_identity(model, bind, clip, s);
    const std::vector<Var> nmfc = constants(tape, clip.nmfc, s.start, K);
    const std::vector<Var> real = constants(tape, clip.frames, s.start, K);
    const RolloutOutput fake = rollout(model, bind, nmfc, h, context_for(clip, s));

    const std::vector<Tensor> flows = real_flows(clip, s.start, K);
    const DiscOutputs d_fake = discriminate(model, bind, clip, s, fake.frames, nmfc, flows);
    const DiscOutputs d_real = discriminate(model, bind, clip, s, real, nmfc, flows);

    StepLosses out;
    std::vector<Var> adv_terms, d_terms;
    for (const HingeLosses& hl : head_losses(d_real, d_fake))
    {
        adv_terms.push_back(hl.g_adv);
        d_terms.push_back(hl.d);
    }
    Var adv = adv_terms.front(), d_total = d_terms.front();
    for (std::size_t i = 1; i < adv_terms.size(); ++i)
    {
        adv = nn::add(adv, adv_terms[i]);
        d_total = nn::add(d_total, d_terms[i]);
    }

    std::vector<Var> vgg_terms, mask_terms;
    for (int k = 0; k < K; ++k)
    {
        const auto kk = static_cast<std::size_t>(k);
        vgg_terms.push_back(perceptual_loss(model, bind, fake.frames[kk], real[kk]));
        mask_terms.push_back(
            mask_loss(fake.masks[kk], tape.constant(clip.masks[static_cast<std::size_t>(s.start + k)])));
    }

    out.g_adv = adv;
    out.vgg = mean_of(vgg_terms);
    out.feat = feature_matching_loss(d_fake.features, d_real.features);
    out.mask = mean_of(mask_terms);
    out.g_total = generator_objective(out.g_adv, out.vgg, out.feat, out.mask, lambda);
    out.d = d_total;
    if (h)
    {
        const Var w = nn::reshape(nn::slice(bind(model.params.at("DI.W")), s.identity, 1),
                                  {model.config.n_f});
        out.mch = matching_loss(*h, w);
        out.e_total = nn::add(out.g_adv, nn::scale(*out.mch, lambda.mch));
    }
    return out;
}

Var discriminator_loss(GanModel& model, Binder& bind, const std::vector<IdentityClip>& data, const ClipSample& s)
{
    nn::Tape& tape = bind.tape();
    const int K = model.config.temporal_k;
    const IdentityClip& clip = data.at(static_cast<std::size_t>(s.identity));

    std::vector<Var> fake;
    {
        // Generated frames enter as constants whatever the binder does with G.
        nn::Tape gen_tape;
        Binder gen_bind(gen_tape, kGenPrefixes);
        const std::optional<Var> h = sample_identity(model, gen_bind, clip, s);
        const RolloutOutput ro =
            rollout(model, gen_bind, constants(gen_tape, clip.nmfc, s.start, K), h, context_for(clip, s));
        for (const Var& f : ro.frames)
            fake.push_back(tape.constant(f.value()));
    }
    const std::vector<Var> nmfc = constants(tape, clip.nmfc, s.start, K);
    const std::vector<Var> real = constants(tape, clip.frames, s.start, K);
    const std::vector<Tensor> flows = real_flows(clip, s.start, K);
    const DiscOutputs d_fake = discriminate(model, bind, clip, s, fake, nmfc, flows);
    const DiscOutputs d_real = discriminate(model, bind, clip, s, real, nmfc, flows);

    std::vector<Var> terms;
    for (const HingeLosses& hl : head_losses(d_real, d_fake))
        terms.push_back(hl.d);
    Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i)
        total = nn::add(total, terms[i]);
    return total;
}

TrainLog train_init_stage(GanModel& model, const std::vector<IdentityClip>& data, const TrainConfig& cfg)
{
    if (model.person_specific)
        throw std::invalid_argument("train_init_stage needs an adaptive model");
    check_data(model, data);
    if (static_cast<int>(data.size()) != model.num_identities())
        throw std::invalid_argument("dimension mismatch: clip count differs from model identity count");
    return train_loop(model, data, cfg);
}

Tensor identity_feature(GanModel& model, const std::vector<Tensor>& frames)
{
    if (model.person_specific)
        throw std::invalid_argument("person-specific model has no embedder");
    nn::Tape tape;
    Binder bind(tape, kGenPrefixes);
    std::vector<Var> vars;
    for (const Tensor& f : frames)
        vars.push_back(tape.constant(f));
    return embed_average(model, bind, vars).value();
}

GanModel finetune_init(const GanModel& multi_person, const std::vector<Tensor>& frames)
{
    if (multi_person.person_specific)
        throw std::invalid_argument("finetune_init needs an adaptive model");
    GanModel out = multi_person;
    const Tensor h_new = identity_feature(out, frames);
    for (const std::string& site : generator_norm_sites())
    {
        nn::Tape tape;
        Binder bind(tape);
        const auto [gamma, beta] = modulation(tape.constant(h_new), bind(out.params.at(site + ".Pg")),
                                              bind(out.params.at(site + ".Pb")));
        const Tensor g = gamma.value(), b = beta.value();
        out.params.erase(site + ".Pg");
        out.params.erase(site + ".Pb");
        out.params.add(site + ".gamma", g);
        out.params.add(site + ".beta", b);
    }
    std::vector<std::string> embedder;
    for (const nn::Parameter* p : out.params.all())
        if (p->name.starts_with("E."))
            embedder.push_back(p->name);
    for (const std::string& name : embedder)
        out.params.erase(name);
    out.params.erase("DI.W");
    out.params.add("DI.W", h_new.reshaped({1, out.config.n_f}));
    out.person_specific = true;
    out.config.num_identities = 1;
    return out;
}

TrainLog finetune_train(GanModel& person, const IdentityClip& clip, const TrainConfig& cfg)
{
    if (!person.person_specific)
        throw std::invalid_argument("finetune_train needs a person-specific model");
    const std::vector<IdentityClip> data{clip};
    check_data(person, data);
    return train_loop(person, data, cfg);
}

std::pair<std::vector<Tensor>, std::vector<Tensor>> synthesize(GanModel& model, const std::vector<Tensor>& nmfc,
                                                               const std::optional<Tensor>& h,
                                                               const RolloutContext& context)
{
    nn::Tape tape;
    Binder bind(tape, {"G.", "E.", "DI.", "DM.", "DV.", "VGG."});
    std::vector<Var> seq;
    for (const Tensor& t : nmfc)
        seq.push_back(tape.constant(t));
    std::optional<Var> hv;
    if (h)
        hv = tape.constant(*h);
    const RolloutOutput ro = rollout(model, bind, seq, hv, context);
    std::pair<std::vector<Tensor>, std::vector<Tensor>> out;
    for (std::size_t i = 0; i < ro.frames.size(); ++i)
    {
        out.first.push_back(ro.frames[i].value());
        out.second.push_back(ro.masks[i].value());
    }
    return out;
}

} // namespace headswap::gan
