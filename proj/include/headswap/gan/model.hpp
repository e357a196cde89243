#pragma once

#include "headswap/nn/checkpoint.hpp"
#include "headswap/nn/params.hpp"

#include <json.hpp>

#include <array>
#include <optional>

namespace headswap::gan {

using nn::Binder;
using nn::Tensor;
using nn::Var;

/// Toy architecture. Spatial sizes must be multiples of 8.
struct GanConfig
{
    int resolution = 32;
    int channels = 8;   // base width; deeper layers use 2x and 4x
    int n_f = 64;       // identity feature size
    int num_identities = 2;
    int temporal_k = 8; // frames per temporal clip
    int mouth_patch = 16;
    double mouth_margin = 0.25;
    double norm_eps = 1e-5;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static GanConfig from_json(const nlohmann::json& j);
};

/**
 * All networks of the framework in one named parameter set:
 *   E.*   identity embedder (multi-person stage only)
 *   G.*   generator; adaptive sites carry .Pg/.Pb, person-specific ones .gamma/.beta
 *   DI.*  image discriminator with projection rows DI.W, DI.w0, DI.c
 *   DM.*  mouth discriminator
 *   DV.*  temporal discriminator, one trunk per scale
 *   VGG.* frozen random feature stack for the perceptual loss
 */
struct GanModel
{
    GanConfig config;
    nn::ParamStore params;
    bool person_specific = false;

    int num_identities() const { return params.at("DI.W").value.dim(0); }
};

GanModel init_model(const GanConfig& config);

nn::Checkpoint to_checkpoint(const GanModel& model);
GanModel from_checkpoint(const nn::Checkpoint& ckpt);

/// Names of the normalization sites of the generator, in evaluation order.
const std::vector<std::string>& generator_norm_sites();
/// Output channels of a normalization site.
int norm_site_channels(const GanConfig& config, const std::string& site);

// ---------------------------------------------------------------------------
// Building blocks.

/// (x - mean) / sqrt(var + eps) per channel over spatial dims.
Var standardize(Var x, double eps);
/// gamma[c] * x[c] + beta[c].
Var channel_affine(Var x, Var gamma, Var beta);
/// gamma = P_gamma h, beta = P_beta h.
std::pair<Var, Var> modulation(Var h, Var p_gamma, Var p_beta);
/// (P_gamma h) * standardize(x) + P_beta h.
Var adain(Var x, Var h, Var p_gamma, Var p_beta, double eps = 1e-5);
Var instance_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// ---------------------------------------------------------------------------
// Embedder.

/// E_id(frame): strided conv stack, global average, n_f vector.
Var embed(GanModel& model, Binder& bind, Var frame);
/// (1/M) sum_j E_id(frames[j]); order-independent. Throws for M = 0.
Var embed_average(GanModel& model, Binder& bind, const std::vector<Var>& frames);

// ---------------------------------------------------------------------------
// Generator.

struct FrameOutput
{
    Var frame; // {3,H,W} in [-1, 1]
    Var mask;  // {1,H,W} in [0, 1]
};

/**
 * One generator step. `nmfc_triplet` is {9,H,W} (t-2, t-1, t), `prev_frames`
 * is {6,H,W} (t-2, t-1). `h` is required by the adaptive generator and must
 * be empty for a person-specific one.
 */
FrameOutput generate_frame(GanModel& model, Binder& bind, Var nmfc_triplet, Var prev_frames, std::optional<Var> h);

/// Frames and NMFC images preceding a rollout; missing entries are zero.
struct RolloutContext
{
    std::array<std::optional<Tensor>, 2> nmfc;   // t-2, t-1
    std::array<std::optional<Tensor>, 2> frames; // t-2, t-1
};

struct RolloutOutput
{
    std::vector<Var> frames;
    std::vector<Var> masks;
};

/// Generates frames one after another, each conditioned on the two before it.
RolloutOutput rollout(GanModel& model, Binder& bind, const std::vector<Var>& nmfc_seq, std::optional<Var> h,
                      const RolloutContext& context = {});

// ---------------------------------------------------------------------------
// Discriminators.

struct ImageScore
{
    Var score; // {1}: d^T (w_i + w_0) + c
    Var patch; // per-patch score map
    Var d;     // {n_f}
    std::vector<Var> features;
};

ImageScore image_discriminator(GanModel& model, Binder& bind, Var frame, Var nmfc, int id_index);
Var realism_score(GanModel& model, Binder& bind, Var frame, Var nmfc, int id_index);

struct PatchScore
{
    Var patch;
    std::vector<Var> features;
};

PatchScore mouth_discriminator(GanModel& model, Binder& bind, Var mouth_patch);

struct TemporalScore
{
    std::vector<Var> scores;   // one patch map per scale
    std::vector<Var> features;
    std::vector<int> lengths;  // frames seen at each scale
};

/// Frames used at scale s: every 2^s-th frame starting from the first.
std::vector<int> temporal_indices(int K, int scale);

/**
 * Three-scale temporal discriminator. `flows` are the K-1 block flows between
 * consecutive frames; at coarser scales the flows spanning each gap are summed.
 */
TemporalScore temporal_score(GanModel& model, Binder& bind, const std::vector<Var>& frames,
                             const std::vector<Tensor>& flows);

/// Frozen perceptual features of an RGB image, one entry per layer.
std::vector<Var> perceptual_features(GanModel& model, Binder& bind, Var image);

} // namespace headswap::gan
