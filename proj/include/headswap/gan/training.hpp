#pragma once

#include "headswap/gan/losses.hpp"
#include "headswap/nn/adam.hpp"
#include "headswap/sop_camera.hpp"

#include <filesystem>

namespace headswap::gan {

/// One person's training video in network layout.
struct IdentityClip
{
    std::vector<Tensor> frames;   // {3,H,W} in [-1, 1]
    std::vector<Tensor> masks;    // {1,H,W} in [0, 1]
    std::vector<Tensor> nmfc;     // {3,H,W} in [0, 1]
    std::vector<Points2> landmarks;

    int size() const { return static_cast<int>(frames.size()); }
    /// Throws std::invalid_argument on count or shape disagreement.
    void validate() const;
    /// Frames [begin, begin + count).
    IdentityClip slice(int begin, int count) const;
};

struct TrainConfig
{
    int steps = 200;
    nn::AdamConfig adam;
    LossWeights lambda;
    int embed_frames = 4;               // M, frames averaged by the embedder per step
    double zero_context_probability = 0.25; // clips started as if at t = 0
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct LossRecord
{
    int step = 0;
    double d = 0, g_adv = 0, vgg = 0, feat = 0, mask = 0, mch = 0;
    double g_total = 0;
};

struct TrainLog
{
    std::vector<LossRecord> records;

    /// CSV columns: step, L_D, L_G_adv, L_vgg, L_feat, L_mask, L_mch.
    void write_csv(const std::filesystem::path& path) const;
};

/// All loss terms of one training step, kept on the tape.
struct StepLosses
{
    Var d;
    Var g_adv;
    Var vgg;
    Var feat;
    Var mask;
    std::optional<Var> mch;
    Var g_total;
    std::optional<Var> e_total;
};

/// One sampled training example.
struct ClipSample
{
    int identity = 0;
    int start = 0;
    bool zero_context = false;
    std::vector<int> embed_frames;
};

ClipSample sample_clip(const std::vector<IdentityClip>& data, const GanModel& model, const TrainConfig& cfg,
                       std::mt19937_64& rng);

/**
 * Generator-side losses for one sample. Discriminator outputs on real data are
 * treated as constants; the embedder term is only formed for adaptive models.
 */
StepLosses generator_losses(GanModel& model, Binder& bind, const std::vector<IdentityClip>& data,
                            const ClipSample& sample, const LossWeights& lambda);

/// Hinge discriminator loss for one sample, with generated frames held fixed.
Var discriminator_loss(GanModel& model, Binder& bind, const std::vector<IdentityClip>& data,
                       const ClipSample& sample);

/**
 * Multi-person stage: alternating discriminator and generator/embedder
 * updates, one of each per step. The generator follows L_G, the embedder
 * L_adv + l_mch L_mch, the discriminators L_D.
 */
TrainLog train_init_stage(GanModel& model, const std::vector<IdentityClip>& data, const TrainConfig& cfg);

/// Mean embedder output over every frame of a clip.
Tensor identity_feature(GanModel& model, const std::vector<Tensor>& frames);

/**
 * Person-specific initialization: h_new is the mean embedding of `frames`;
 * every adaptive site becomes an instance norm with gamma = P_gamma h_new and
 * beta = P_beta h_new, the projection rows of DI collapse to the single row
 * h_new, and the embedder is dropped.
 */
GanModel finetune_init(const GanModel& multi_person, const std::vector<Tensor>& frames);

/// Same loop as train_init_stage on one person, without embedder or matching loss.
TrainLog finetune_train(GanModel& person, const IdentityClip& clip, const TrainConfig& cfg);

/// Rolls the generator over `nmfc` and returns plain frames and masks.
std::pair<std::vector<Tensor>, std::vector<Tensor>> synthesize(GanModel& model, const std::vector<Tensor>& nmfc,
                                                               const std::optional<Tensor>& h = std::nullopt,
                                                               const RolloutContext& context = {});

} // namespace headswap::gan
