#include "convad/scenarios/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "convad/core/image_ops.hpp"

namespace convad::scenarios {

bool AugmentationPolicy::is_identity() const {
    return hflip_p <= 0 && vflip_p <= 0 && rotation_deg <= 0 && brightness_jitter <= 0 && contrast_jitter <= 0;
}

void to_json(nlohmann::json& j, const AugmentationPolicy& p) {
    j = {{"hflip_p", p.hflip_p},
         {"vflip_p", p.vflip_p},
         {"rotation_deg", p.rotation_deg},
         {"brightness_jitter", p.brightness_jitter},
         {"contrast_jitter", p.contrast_jitter}};
}

void from_json(const nlohmann::json& j, AugmentationPolicy& p) {
    p.hflip_p = j.value("hflip_p", p.hflip_p);
    p.vflip_p = j.value("vflip_p", p.vflip_p);
    p.rotation_deg = j.value("rotation_deg", p.rotation_deg);
    p.brightness_jitter = j.value("brightness_jitter", p.brightness_jitter);
    p.contrast_jitter = j.value("contrast_jitter", p.contrast_jitter);
}

namespace {

struct Draw {
    bool hflip = false;
    bool vflip = false;
    double angle = 0;
    double brightness = 1;
    double contrast = 1;
};

// Every random number is drawn unconditionally so the stream length does not depend on the policy.
Draw draw(const AugmentationPolicy& p, Rng& rng) {
    Draw d;
    d.hflip = uniform(rng, 0, 1) < p.hflip_p;
    d.vflip = uniform(rng, 0, 1) < p.vflip_p;
    const double a = uniform(rng, -1, 1);
    const double b = uniform(rng, -1, 1);
    const double c = uniform(rng, -1, 1);
    d.angle = a * p.rotation_deg;
    d.brightness = 1 + b * p.brightness_jitter;
    d.contrast = 1 + c * p.contrast_jitter;
    return d;
}

// Inverse map from output pixel to source coordinates (flip, then rotation about the center).
struct Geometry {
    int h, w;
    Draw d;
    double cs, sn;

    Geometry(int h_, int w_, const Draw& d_) : h(h_), w(w_), d(d_) {
        const double rad = d.angle * std::numbers::pi / 180.0;
        cs = std::cos(rad);
        sn = std::sin(rad);
    }
    [[nodiscard]] bool rotates() const { return d.angle != 0.0; }

    void source(int y, int x, double& sy, double& sx) const {
        const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
        const double dy = y - cy, dx = x - cx;
        double ry = cy + cs * dy - sn * dx;
        double rx = cx + sn * dy + cs * dx;
        if (d.vflip) ry = (h - 1) - ry;
        if (d.hflip) rx = (w - 1) - rx;
        sy = ry;
        sx = rx;
    }
};

Image transform_image(const Image& src, const Geometry& g, const Draw& d) {
    Image out(src.id, src.height, src.width);
    const auto fill = corner_mean_color(src);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double sy, sx;
            g.source(y, x, sy, sx);
            if (!g.rotates()) {
                const int iy = static_cast<int>(std::lround(sy)), ix = static_cast<int>(std::lround(sx));
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(iy, ix, c);
                continue;
            }
            const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                auto px = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= src.height || xx < 0 || xx >= src.width) return fill[c];
                    return src.at(yy, xx, c);
                };
                const double top = px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx;
                const double bot = px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx;
                out.at(y, x, c) = static_cast<float>(top * (1 - fy) + bot * fy);
            }
        }
    if (d.brightness != 1.0 || d.contrast != 1.0) {
        double mean = 0;
        for (float v : out.pixels) mean += v;
        mean /= static_cast<double>(out.pixels.size());
        for (auto& v : out.pixels)
            v = static_cast<float>(std::clamp(((v - mean) * d.contrast + mean) * d.brightness, 0.0, 1.0));
    }
    return out;
}

Mask transform_mask(const Mask& src, const Geometry& g) {
    Mask out(src.height, src.width);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double sy, sx;
            g.source(y, x, sy, sx);
            const int iy = static_cast<int>(std::lround(sy)), ix = static_cast<int>(std::lround(sx));
            if (iy >= 0 && iy < src.height && ix >= 0 && ix < src.width) out.at(y, x) = src.at(iy, ix);
        }
    return out;
}

}  // namespace

Image augment_image(const Image& image, const AugmentationPolicy& policy, Rng& rng) {
    const Draw d = draw(policy, rng);
    return transform_image(image, Geometry(image.height, image.width, d), d);
}

Sample augment(const Sample& sample, const AugmentationPolicy& policy, Rng& rng) {
    const Draw d = draw(policy, rng);
    const Geometry g(sample.image.height, sample.image.width, d);
    Sample out = sample;
    out.image = transform_image(sample.image, g, d);
    if (sample.mask) out.mask = transform_mask(*sample.mask, g);
    return out;
}

}  // namespace convad::scenarios
