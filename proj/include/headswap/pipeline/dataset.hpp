#pragma once

#include "headswap/gan/training.hpp"
#include "headswap/pipeline/image.hpp"

#include <filesystem>
#include <optional>

namespace headswap {

/**
 * One talking-head video on disk:
 *   frames/%06d.png   8-bit RGB
 *   masks/%06d.png    optional grayscale foreground masks
 *   landmarks.json    one entry per frame
 *   meta.json         optional {"fps": ...}
 */
struct VideoDataset
{
    std::vector<Image> frames;
    std::vector<Landmarks2D> landmarks;
    std::optional<std::vector<Image>> masks;
    double fps = 20.0;

    int size() const { return static_cast<int>(frames.size()); }
    /// Throws std::invalid_argument on count or resolution disagreement.
    void validate() const;
    VideoDataset slice(int begin, int count) const;
};

std::string frame_name(int index, const char* extension = ".png");

VideoDataset load_dataset(const std::filesystem::path& root);
void save_dataset(const VideoDataset& data, const std::filesystem::path& root);

/// Sorted *.png files of a directory, read as images.
std::vector<Image> load_image_dir(const std::filesystem::path& dir);
std::vector<Image> load_mask_dir(const std::filesystem::path& dir);
std::vector<NmfcImage> load_nmfc_dir(const std::filesystem::path& dir);
void save_nmfc_dir(const std::vector<NmfcImage>& frames, const std::filesystem::path& dir);

/// Contiguous split: the last `test_len` frames are the test part. Needs T > test_len.
std::pair<VideoDataset, VideoDataset> split_train_test(const VideoDataset& data, int test_len = 100);

/**
 * Mean |fake - real| over pixels and channels on the 0..255 scale. With a
 * mask, only pixels whose mask value is >= 0.5 count; an empty mask throws.
 */
double pixel_distance(const Image& fake, const Image& real, const Image* mask = nullptr);

/// |A and B| / |A or B| with A, B = {value >= threshold}; 1 when both are empty.
double mask_iou(const Image& predicted, const Image& truth, double threshold = 0.5);

/// mask * frame + (1 - mask) * background, per pixel with a soft mask.
Image composite_background(const Image& frame, const Image& mask, const Image& background);

struct MetricsReport
{
    double avg_pixel_dist = 0.0;
    std::optional<double> masked_avg_pixel_dist;
    std::optional<double> mask_iou;
    int frames = 0;

    nlohmann::json to_json() const;
};

/**
 * Per-frame metrics averaged over a sequence. `truth_masks` enables the
 * masked distance; `predicted_masks` together with `truth_masks` the IoU.
 */
MetricsReport evaluate_sequence(const std::vector<Image>& fake, const std::vector<Image>& real,
                                const std::vector<Image>* truth_masks = nullptr,
                                const std::vector<Image>* predicted_masks = nullptr, int threads = 1);

/// Network-layout clip from frames, masks, NMFC renders and landmarks.
gan::IdentityClip make_clip(const std::vector<Image>& frames, const std::vector<Image>& masks,
                            const std::vector<NmfcImage>& nmfc, const std::vector<Landmarks2D>& landmarks);

} // namespace headswap
