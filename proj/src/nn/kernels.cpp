#include "convad/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace convad::nn {

Shape3 conv3x3_output_shape(Shape3 in, int out_channels, int stride) {
    return {out_channels, (in.h - 1) / stride + 1, (in.w - 1) / stride + 1};
}

namespace kernels {
namespace {

/// Valid output range [lo, hi) along one axis for kernel tap k (input index o*stride + k - 1).
inline void tap_range(int k, int stride, int in_n, int out_n, int& lo, int& hi) {
    lo = k == 0 ? 1 : 0;
    hi = in_n - k < 0 ? 0 : std::min(out_n, (in_n - k) / stride + 1);
    lo = std::min(lo, hi);
}

}  // namespace

void conv3x3_forward(const float* in, Shape3 is, const float* weight, const float* bias, int out_channels, int stride,
                     float* out) {
    const Shape3 os = conv3x3_output_shape(is, out_channels, stride);
    const std::size_t in_plane = is.plane();
    const std::size_t out_plane = os.plane();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < out_channels; ++oc) {
        float* o = out + oc * out_plane;
        std::fill(o, o + out_plane, bias ? bias[oc] : 0.f);
        for (int ic = 0; ic < is.c; ++ic) {
            const float* src = in + ic * in_plane;
            const float* wk = weight + (static_cast<std::size_t>(oc) * is.c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int ylo, yhi;
                tap_range(ky, stride, is.h, os.h, ylo, yhi);
                for (int kx = 0; kx < 3; ++kx) {
                    int xlo, xhi;
                    tap_range(kx, stride, is.w, os.w, xlo, xhi);
                    const float wv = wk[ky * 3 + kx];
                    for (int oy = ylo; oy < yhi; ++oy) {
                        const float* row = src + static_cast<std::size_t>(oy * stride + ky - 1) * is.w + (kx - 1);
                        float* orow = o + static_cast<std::size_t>(oy) * os.w;
                        if (stride == 1) {
                            for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wv * row[ox];
                        } else {
                            for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wv * row[ox * stride];
                        }
                    }
                }
            }
        }
    }
}

void conv3x3_backward_input(const float* grad_out, Shape3 os, const float* weight, Shape3 is, int stride,
                            float* grad_in) {
    const std::size_t in_plane = is.plane();
    const std::size_t out_plane = os.plane();
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < is.c; ++ic) {
        float* gi = grad_in + ic * in_plane;
        std::fill(gi, gi + in_plane, 0.f);
        for (int oc = 0; oc < os.c; ++oc) {
            const float* go = grad_out + oc * out_plane;
            const float* wk = weight + (static_cast<std::size_t>(oc) * is.c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int ylo, yhi;
                tap_range(ky, stride, is.h, os.h, ylo, yhi);
                for (int kx = 0; kx < 3; ++kx) {
                    int xlo, xhi;
                    tap_range(kx, stride, is.w, os.w, xlo, xhi);
                    const float wv = wk[ky * 3 + kx];
                    for (int oy = ylo; oy < yhi; ++oy) {
                        float* row = gi + static_cast<std::size_t>(oy * stride + ky - 1) * is.w + (kx - 1);
                        const float* grow = go + static_cast<std::size_t>(oy) * os.w;
                        if (stride == 1) {
                            for (int ox = xlo; ox < xhi; ++ox) row[ox] += wv * grow[ox];
                        } else {
                            for (int ox = xlo; ox < xhi; ++ox) row[ox * stride] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
}

void conv3x3_backward_weights(const float* in, Shape3 is, const float* grad_out, Shape3 os, int stride,
                              float* grad_weight, float* grad_bias) {
    const std::size_t in_plane = is.plane();
    const std::size_t out_plane = os.plane();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < os.c; ++oc) {
        const float* go = grad_out + oc * out_plane;
        if (grad_bias) {
            float acc = 0.f;
            for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
            grad_bias[oc] += acc;
        }
        for (int ic = 0; ic < is.c; ++ic) {
            const float* src = in + ic * in_plane;
            float* gw = grad_weight + (static_cast<std::size_t>(oc) * is.c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int ylo, yhi;
                tap_range(ky, stride, is.h, os.h, ylo, yhi);
                for (int kx = 0; kx < 3; ++kx) {
                    int xlo, xhi;
                    tap_range(kx, stride, is.w, os.w, xlo, xhi);
                    float acc = 0.f;
                    for (int oy = ylo; oy < yhi; ++oy) {
                        const float* row = src + static_cast<std::size_t>(oy * stride + ky - 1) * is.w + (kx - 1);
                        const float* grow = go + static_cast<std::size_t>(oy) * os.w;
                        if (stride == 1) {
                            for (int ox = xlo; ox < xhi; ++ox) acc += grow[ox] * row[ox];
                        } else {
                            for (int ox = xlo; ox < xhi; ++ox) acc += grow[ox] * row[ox * stride];
                        }
                    }
                    gw[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

void normalized_sq_distance(const float* a, const float* b, Shape3 s, float* out) {
    const std::size_t plane = s.plane();
#pragma omp parallel for schedule(static)
    for (std::size_t p = 0; p < plane; ++p) {
        float na = 0.f, nb = 0.f;
        for (int c = 0; c < s.c; ++c) {
            const float x = a[c * plane + p];
            const float y = b[c * plane + p];
            na += x * x;
            nb += y * y;
        }
        na = std::sqrt(na) + kNormEps;
        nb = std::sqrt(nb) + kNormEps;
        float d = 0.f;
        for (int c = 0; c < s.c; ++c) {
            const float diff = a[c * plane + p] / na - b[c * plane + p] / nb;
            d += diff * diff;
        }
        out[p] = 0.5f * d;
    }
}

}  // namespace kernels

namespace reference {

void conv3x3_forward(const float* in, Shape3 is, const float* weight, const float* bias, int out_channels, int stride,
                     float* out) {
    const Shape3 os = conv3x3_output_shape(is, out_channels, stride);
    for (int oc = 0; oc < os.c; ++oc)
        for (int oy = 0; oy < os.h; ++oy)
            for (int ox = 0; ox < os.w; ++ox) {
                double acc = bias ? bias[oc] : 0.0;
                for (int ic = 0; ic < is.c; ++ic)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy * stride + ky - 1;
                            const int ix = ox * stride + kx - 1;
                            if (iy < 0 || iy >= is.h || ix < 0 || ix >= is.w) continue;
                            acc += static_cast<double>(weight[((oc * is.c + ic) * 3 + ky) * 3 + kx]) *
                                   in[(static_cast<std::size_t>(ic) * is.h + iy) * is.w + ix];
                        }
                out[(static_cast<std::size_t>(oc) * os.h + oy) * os.w + ox] = static_cast<float>(acc);
            }
}

void conv3x3_backward_input(const float* grad_out, Shape3 os, const float* weight, Shape3 is, int stride,
                            float* grad_in) {
    std::vector<double> acc(is.size(), 0.0);
    for (int oc = 0; oc < os.c; ++oc)
        for (int oy = 0; oy < os.h; ++oy)
            for (int ox = 0; ox < os.w; ++ox) {
                const double g = grad_out[(static_cast<std::size_t>(oc) * os.h + oy) * os.w + ox];
                for (int ic = 0; ic < is.c; ++ic)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy * stride + ky - 1;
                            const int ix = ox * stride + kx - 1;
                            if (iy < 0 || iy >= is.h || ix < 0 || ix >= is.w) continue;
                            acc[(static_cast<std::size_t>(ic) * is.h + iy) * is.w + ix] +=
                                g * weight[((oc * is.c + ic) * 3 + ky) * 3 + kx];
                        }
            }
    for (std::size_t i = 0; i < acc.size(); ++i) grad_in[i] = static_cast<float>(acc[i]);
}

void conv3x3_backward_weights(const float* in, Shape3 is, const float* grad_out, Shape3 os, int stride,
                              float* grad_weight, float* grad_bias) {
    for (int oc = 0; oc < os.c; ++oc) {
        double gb = 0.0;
        for (int oy = 0; oy < os.h; ++oy)
            for (int ox = 0; ox < os.w; ++ox) gb += grad_out[(static_cast<std::size_t>(oc) * os.h + oy) * os.w + ox];
        if (grad_bias) grad_bias[oc] += static_cast<float>(gb);
        for (int ic = 0; ic < is.c; ++ic)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < os.h; ++oy)
                        for (int ox = 0; ox < os.w; ++ox) {
                            const int iy = oy * stride + ky - 1;
                            const int ix = ox * stride + kx - 1;
                            if (iy < 0 || iy >= is.h || ix < 0 || ix >= is.w) continue;
                            acc += static_cast<double>(grad_out[(static_cast<std::size_t>(oc) * os.h + oy) * os.w + ox]) *
                                   in[(static_cast<std::size_t>(ic) * is.h + iy) * is.w + ix];
                        }
                    grad_weight[((oc * is.c + ic) * 3 + ky) * 3 + kx] += static_cast<float>(acc);
                }
    }
}

void normalized_sq_distance(const float* a, const float* b, Shape3 s, float* out) {
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            double na = 0, nb = 0;
            for (int c = 0; c < s.c; ++c) {
                const std::size_t i = (static_cast<std::size_t>(c) * s.h + y) * s.w + x;
                na += static_cast<double>(a[i]) * a[i];
                nb += static_cast<double>(b[i]) * b[i];
            }
            na = std::sqrt(na) + kNormEps;
            nb = std::sqrt(nb) + kNormEps;
            double d = 0;
            for (int c = 0; c < s.c; ++c) {
                const std::size_t i = (static_cast<std::size_t>(c) * s.h + y) * s.w + x;
                const double diff = a[i] / na - b[i] / nb;
                d += diff * diff;
            }
            out[static_cast<std::size_t>(y) * s.w + x] = static_cast<float>(0.5 * d);
        }
}

}  // namespace reference
}  // namespace convad::nn
