#pragma once

#include "headswap/video_fitter.hpp"

#include <json.hpp>

#include <filesystem>

namespace headswap {

/// {"frames": [{"points": [[x, y] x 68], "confidence": [...]}]}; confidence optional.
nlohmann::json landmarks_to_json(const std::vector<Landmarks2D>& landmarks);
std::vector<Landmarks2D> landmarks_from_json(const nlohmann::json& j);

/**
 * {"identity": [...], "frames": [{"expression": [...], "camera": {"rotation",
 * "translation", "scale"}}], "energy": {"total", "landmark", "prior",
 * "smoothness", "trace"}}.
 */
nlohmann::json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

} // namespace headswap
