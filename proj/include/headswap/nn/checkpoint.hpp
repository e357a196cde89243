#pragma once

#include "headswap/nn/params.hpp"

#include <json.hpp>

#include <filesystem>

namespace headswap::nn {

/**
 * Container: "HSCK", u32 manifest length, JSON manifest, then the float64
 * values of every parameter in manifest order. The manifest carries
 * `meta` (free-form) and `params` [{name, shape, trainable}].
 */
struct Checkpoint
{
    nlohmann::json meta = nlohmann::json::object();
    ParamStore params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace headswap::nn
