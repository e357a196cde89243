#include "headswap/gan/vision.hpp"

#include <cmath>
#include <limits>
#include <tuple>

namespace headswap::gan {

CropRect mouth_rect(const Points2& landmarks, int image_width, int image_height, double margin)
{
    if (landmarks.rows() != kNumLandmarks)
        throw std::invalid_argument("mouth_rect needs 68 landmarks");
    if (!(margin >= 0.0))
        throw std::invalid_argument("mouth margin must be non-negative");
    const auto mouth = landmarks.middleRows(48, 20);
    const double x0 = mouth.col(0).minCoeff(), x1 = mouth.col(0).maxCoeff();
    const double y0 = mouth.col(1).minCoeff(), y1 = mouth.col(1).maxCoeff();
    const double side = std::max(x1 - x0, y1 - y0) * (1.0 + 2.0 * margin);
    if (!(side > 0.0) || !std::isfinite(side))
        throw std::invalid_argument("degenerate mouth box");
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    const int left = std::max(0, static_cast<int>(std::floor(cx - 0.5 * side)));
    const int top = std::max(0, static_cast<int>(std::floor(cy - 0.5 * side)));
    const int right = std::min(image_width, static_cast<int>(std::ceil(cx + 0.5 * side)));
    const int bottom = std::min(image_height, static_cast<int>(std::ceil(cy + 0.5 * side)));
    if (right <= left || bottom <= top)
        throw std::invalid_argument("degenerate mouth box: outside the image");
    return {left, top, right - left, bottom - top};
}

nn::Var mouth_crop(nn::Var frame, const Points2& landmarks, int patch, double margin)
{
    const nn::Shape s = frame.shape();
    if (s.size() != 3)
        throw std::invalid_argument("mouth_crop expects a {C,H,W} frame");
    const CropRect r = mouth_rect(landmarks, s[2], s[1], margin);
    return nn::resize_bilinear(nn::crop(frame, r.top, r.left, r.height, r.width), patch, patch);
}

nn::Tensor block_flow(const nn::Tensor& a, const nn::Tensor& b, int block, int radius)
{
    if (!a.same_shape(b) || a.rank() != 3)
        throw std::invalid_argument("shape mismatch in block_flow: " + nn::shape_str(a.shape()) + " vs " +
                                    nn::shape_str(b.shape()));
    if (block <= 0 || radius < 0)
        throw std::invalid_argument("block_flow: block must be positive and radius non-negative");
    const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
    const int by_count = (H + block - 1) / block, bx_count = (W + block - 1) / block;
    nn::Tensor flow({2, by_count, bx_count});
    for (int by = 0; by < by_count; ++by)
        for (int bx = 0; bx < bx_count; ++bx)
        {
            const int y0 = by * block, x0 = bx * block;
            const int y1 = std::min(H, y0 + block), x1 = std::min(W, x0 + block);
            double best = std::numeric_limits<double>::infinity();
            std::tuple<int, int, int> best_key{0, 0, 0}; // (|d|^2, dx, dy)
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                {
                    if (y0 + dy < 0 || y1 + dy > H || x0 + dx < 0 || x1 + dx > W)
                        continue;
                    double sad = 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int y = y0; y < y1; ++y)
                        {
                            const double* pa = a.data() + (static_cast<std::size_t>(c) * H + y) * W;
                            const double* pb = b.data() + (static_cast<std::size_t>(c) * H + y + dy) * W + dx;
                            for (int x = x0; x < x1; ++x)
                                sad += std::abs(pa[x] - pb[x]);
                        }
                    const std::tuple<int, int, int> key{dx * dx + dy * dy, dx, dy};
                    if (sad < best || (sad == best && key < best_key))
                    {
                        best = sad;
                        best_key = key;
                    }
                }
            flow[(static_cast<std::size_t>(0) * by_count + by) * bx_count + bx] = std::get<1>(best_key);
            flow[(static_cast<std::size_t>(1) * by_count + by) * bx_count + bx] = std::get<2>(best_key);
        }
    return flow;
}

} // namespace headswap::gan
