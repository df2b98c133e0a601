#include "convad/core/image_ops.hpp"

#include <algorithm>
#include <cmath>

namespace convad {
namespace {

struct Tap {
    int i0, i1;
    float w1;
};

Tap source_tap(int dst, int dst_n, int src_n) {
    const float scale = static_cast<float>(src_n) / static_cast<float>(dst_n);
    float s = (static_cast<float>(dst) + 0.5f) * scale - 0.5f;
    s = std::max(s, 0.f);
    int i0 = static_cast<int>(std::floor(s));
    i0 = std::min(i0, src_n - 1);
    const int i1 = std::min(i0 + 1, src_n - 1);
    return {i0, i1, s - static_cast<float>(i0)};
}

}  // namespace

Image resize_bilinear(const Image& src, int height, int width) {
    if (src.height == height && src.width == width) return src;
    Image out(src.id, height, width);
    for (int y = 0; y < height; ++y) {
        const Tap ty = source_tap(y, height, src.height);
        for (int x = 0; x < width; ++x) {
            const Tap tx = source_tap(x, width, src.width);
            for (int c = 0; c < 3; ++c) {
                const float top = src.at(ty.i0, tx.i0, c) * (1 - tx.w1) + src.at(ty.i0, tx.i1, c) * tx.w1;
                const float bot = src.at(ty.i1, tx.i0, c) * (1 - tx.w1) + src.at(ty.i1, tx.i1, c) * tx.w1;
                out.at(y, x, c) = std::clamp(top * (1 - ty.w1) + bot * ty.w1, 0.f, 1.f);
            }
        }
    }
    return out;
}

Mask resize_nearest(const Mask& src, int height, int width) {
    if (src.height == height && src.width == width) return src;
    Mask out(height, width);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / width));
            out.at(y, x) = src.at(sy, sx);
        }
    }
    return out;
}

std::vector<float> upsample_bilinear(std::span<const float> src, int src_h, int src_w, int dst_h, int dst_w) {
    std::vector<float> out(static_cast<std::size_t>(dst_h) * dst_w);
    std::vector<Tap> xs(dst_w);
    for (int x = 0; x < dst_w; ++x) xs[x] = source_tap(x, dst_w, src_w);
    for (int y = 0; y < dst_h; ++y) {
        const Tap ty = source_tap(y, dst_h, src_h);
        const float* r0 = src.data() + static_cast<std::size_t>(ty.i0) * src_w;
        const float* r1 = src.data() + static_cast<std::size_t>(ty.i1) * src_w;
        float* o = out.data() + static_cast<std::size_t>(y) * dst_w;
        for (int x = 0; x < dst_w; ++x) {
            const Tap& tx = xs[x];
            const float top = r0[tx.i0] + (r0[tx.i1] - r0[tx.i0]) * tx.w1;
            const float bot = r1[tx.i0] + (r1[tx.i1] - r1[tx.i0]) * tx.w1;
            o[x] = top + (bot - top) * ty.w1;
        }
    }
    return out;
}

std::array<float, 3> corner_mean_color(const Image& img) {
    std::array<float, 3> acc{0, 0, 0};
    const int ys[2] = {0, img.height - 1};
    const int xs[2] = {0, img.width - 1};
    for (int y : ys)
        for (int x : xs)
            for (int c = 0; c < 3; ++c) acc[c] += img.at(y, x, c) / 4.f;
    return acc;
}

}  // namespace convad
