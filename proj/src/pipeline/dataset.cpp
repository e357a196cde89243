#include "headswap/pipeline/dataset.hpp"

#include "headswap/parallel.hpp"
#include "headswap/pipeline/formats.hpp"

#include <algorithm>
#include <cstdio>

namespace headswap {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& extension)
{
    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == extension)
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

void require_same_shape(const Image& a, const Image& b, const char* what)
{
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string("dimension mismatch: ") + what);
}

template <typename T>
std::vector<T> sub(const std::vector<T>& v, int begin, int count)
{
    return {v.begin() + begin, v.begin() + begin + count};
}

} // namespace

void VideoDataset::validate() const
{
    if (frames.empty())
        throw std::invalid_argument("dataset has no frames");
    if (landmarks.size() != frames.size())
        throw std::invalid_argument("dimension mismatch: " + std::to_string(frames.size()) + " frames but " +
                                    std::to_string(landmarks.size()) + " landmark entries");
    if (masks && masks->size() != frames.size())
        throw std::invalid_argument("dimension mismatch: " + std::to_string(frames.size()) + " frames but " +
                                    std::to_string(masks->size()) + " masks");
    const Image& first = frames.front();
    if (first.channels != 3)
        throw std::invalid_argument("dataset frames must be RGB");
    for (const Image& f : frames)
        require_same_shape(f, first, "frame resolutions differ");
    if (masks)
        for (const Image& m : *masks)
            if (m.channels != 1 || m.width != first.width || m.height != first.height)
                throw std::invalid_argument("dimension mismatch: mask resolution");
    for (const Landmarks2D& lm : landmarks)
        if (lm.points.rows() != kNumLandmarks)
            throw std::invalid_argument("dimension mismatch: landmarks need 68 points");
}

VideoDataset VideoDataset::slice(int begin, int count) const
{
    if (begin < 0 || count < 0 || begin + count > size())
        throw std::out_of_range("dataset slice out of range");
    VideoDataset out;
    out.frames = sub(frames, begin, count);
    out.landmarks = sub(landmarks, begin, count);
    if (masks)
        out.masks = sub(*masks, begin, count);
    out.fps = fps;
    return out;
}

std::string frame_name(int index, const char* extension)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d%s", index, extension);
    return buf;
}

std::vector<Image> load_image_dir(const fs::path& dir)
{
    std::vector<Image> out;
    for (const fs::path& p : sorted_files(dir, ".png"))
        out.push_back(read_png(p));
    return out;
}

std::vector<Image> load_mask_dir(const fs::path& dir)
{
    std::vector<Image> out;
    for (const fs::path& p : sorted_files(dir, ".png"))
        out.push_back(read_mask_png(p));
    return out;
}

std::vector<NmfcImage> load_nmfc_dir(const fs::path& dir)
{
    std::vector<NmfcImage> out;
    for (const fs::path& p : sorted_files(dir, ".nmfc"))
        out.push_back(load_nmfc(p));
    return out;
}

void save_nmfc_dir(const std::vector<NmfcImage>& frames, const fs::path& dir)
{
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i)
        save_nmfc(frames[i], dir / frame_name(static_cast<int>(i), ".nmfc"));
}

VideoDataset load_dataset(const fs::path& root)
{
    VideoDataset ds;
    ds.frames = load_image_dir(root / "frames");
    ds.landmarks = landmarks_from_json(read_json(root / "landmarks.json"));
    if (fs::is_directory(root / "masks"))
        ds.masks = load_mask_dir(root / "masks");
    if (fs::exists(root / "meta.json"))
        ds.fps = read_json(root / "meta.json").value("fps", ds.fps);
    ds.validate();
    return ds;
}

void save_dataset(const VideoDataset& data, const fs::path& root)
{
    data.validate();
    fs::create_directories(root / "frames");
    for (int i = 0; i < data.size(); ++i)
        write_png(data.frames[static_cast<std::size_t>(i)], root / "frames" / frame_name(i));
    if (data.masks)
    {
        fs::create_directories(root / "masks");
        for (int i = 0; i < data.size(); ++i)
            write_mask_png((*data.masks)[static_cast<std::size_t>(i)], root / "masks" / frame_name(i));
    }
    write_json(landmarks_to_json(data.landmarks), root / "landmarks.json");
    write_json({{"fps", data.fps}, {"frames", data.size()}}, root / "meta.json");
}

std::pair<VideoDataset, VideoDataset> split_train_test(const VideoDataset& data, int test_len)
{
    if (test_len < 1)
        throw std::invalid_argument("test length must be positive");
    if (data.size() <= test_len)
        throw std::invalid_argument("dataset too short: " + std::to_string(data.size()) + " frames for a " +
                                    std::to_string(test_len) + "-frame test split");
    const int train = data.size() - test_len;
    return {data.slice(0, train), data.slice(train, test_len)};
}

double pixel_distance(const Image& fake, const Image& real, const Image* mask)
{
    require_same_shape(fake, real, "pixel_distance images");
    if (mask && (mask->channels != 1 || mask->width != real.width || mask->height != real.height))
        throw std::invalid_argument("dimension mismatch: pixel_distance mask");
    double total = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < real.height; ++y)
        for (int x = 0; x < real.width; ++x)
        {
            if (mask && mask->at(x, y, 0) < 0.5)
                continue;
            for (int c = 0; c < real.channels; ++c)
                total += std::abs(fake.at(x, y, c) - real.at(x, y, c));
            count += static_cast<std::size_t>(real.channels);
        }
    if (count == 0)
        throw std::invalid_argument("pixel_distance: empty mask");
    return total / static_cast<double>(count);
}

double mask_iou(const Image& predicted, const Image& truth, double threshold)
{
    require_same_shape(predicted, truth, "mask_iou masks");
    if (truth.channels != 1)
        throw std::invalid_argument("mask_iou needs single-channel masks");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < truth.data.size(); ++i)
    {
        const bool a = predicted.data[i] >= threshold, b = truth.data[i] >= threshold;
        inter += static_cast<std::size_t>(a && b);
        uni += static_cast<std::size_t>(a || b);
    }
    if (uni == 0)
        return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Image composite_background(const Image& frame, const Image& mask, const Image& background)
{
    require_same_shape(frame, background, "composite frame and background");
    if (mask.channels != 1 || mask.width != frame.width || mask.height != frame.height)
        throw std::invalid_argument("dimension mismatch: composite mask");
    Image out = frame;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x)
        {
            const double m = mask.at(x, y, 0);
            for (int c = 0; c < frame.channels; ++c)
                out.at(x, y, c) = m * frame.at(x, y, c) + (1.0 - m) * background.at(x, y, c);
        }
    return out;
}

nlohmann::json MetricsReport::to_json() const
{
    nlohmann::json j = {{"frames", frames}, {"avg_pixel_dist", avg_pixel_dist}};
    if (masked_avg_pixel_dist)
        j["masked_avg_pixel_dist"] = *masked_avg_pixel_dist;
    if (mask_iou)
        j["mask_iou"] = *mask_iou;
    return j;
}

MetricsReport evaluate_sequence(const std::vector<Image>& fake, const std::vector<Image>& real,
                                const std::vector<Image>* truth_masks, const std::vector<Image>* predicted_masks,
                                int threads)
{
    const std::size_t n = real.size();
    if (n == 0 || fake.size() != n)
        throw std::invalid_argument("dimension mismatch: " + std::to_string(fake.size()) + " fake vs " +
                                    std::to_string(n) + " real frames");
    if (truth_masks && truth_masks->size() != n)
        throw std::invalid_argument("dimension mismatch: mask count");
    if (predicted_masks && (!truth_masks || predicted_masks->size() != n))
        throw std::invalid_argument("dimension mismatch: predicted masks need matching ground-truth masks");
    std::vector<double> dist(n), masked(n), iou(n);
    parallel_for(static_cast<int>(n), threads, [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        dist[k] = pixel_distance(fake[k], real[k]);
        if (truth_masks)
            masked[k] = pixel_distance(fake[k], real[k], &(*truth_masks)[k]);
        if (predicted_masks)
            iou[k] = mask_iou((*predicted_masks)[k], (*truth_masks)[k]);
    });
    auto mean = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return s / static_cast<double>(n);
    };
    MetricsReport r;
    r.frames = static_cast<int>(n);
    r.avg_pixel_dist = mean(dist);
    if (truth_masks)
        r.masked_avg_pixel_dist = mean(masked);
    if (predicted_masks)
        r.mask_iou = mean(iou);
    return r;
}

gan::IdentityClip make_clip(const std::vector<Image>& frames, const std::vector<Image>& masks,
                            const std::vector<NmfcImage>& nmfc, const std::vector<Landmarks2D>& landmarks)
{
    gan::IdentityClip clip;
    for (const Image& f : frames)
        clip.frames.push_back(rgb_to_tensor(f));
    for (const Image& m : masks)
        clip.masks.push_back(mask_to_tensor(m));
    for (const NmfcImage& n : nmfc)
        clip.nmfc.push_back(nmfc_to_tensor(n));
    for (const Landmarks2D& lm : landmarks)
        clip.landmarks.push_back(lm.points);
    clip.validate();
    return clip;
}

} // namespace headswap
