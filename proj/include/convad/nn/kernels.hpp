#pragma once

// Dense kernels for 3x3 convolutions (padding 1) and the per-pixel feature-distance maps of the
// student-teacher branch. The top-level functions are OpenMP-parallel over channels; every output element
// is owned by one thread and reduced in a fixed order, so results do not depend on the thread count.
// `reference::` holds the naive serial versions the tests and benchmarks compare against.

#include <cstddef>

namespace convad::nn {

struct Shape3 {
    int c = 0;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape3&) const = default;
};

/// Output shape of a 3x3, padding-1 convolution.
Shape3 conv3x3_output_shape(Shape3 in, int out_channels, int stride);

namespace kernels {

/// out = conv(in, weight) + bias. Weight layout [out_c][in_c][3][3].
void conv3x3_forward(const float* in, Shape3 in_shape, const float* weight, const float* bias, int out_channels,
                     int stride, float* out);

/// grad_in = conv_transpose(grad_out, weight); overwrites grad_in.
void conv3x3_backward_input(const float* grad_out, Shape3 out_shape, const float* weight, Shape3 in_shape, int stride,
                            float* grad_in);

/// Accumulates (+=) weight and bias gradients.
void conv3x3_backward_weights(const float* in, Shape3 in_shape, const float* grad_out, Shape3 out_shape, int stride,
                              float* grad_weight, float* grad_bias);

/// Per-position 0.5 * || a/|a| - b/|b| ||^2 over channels, for two CHW tensors of the same shape.
void normalized_sq_distance(const float* a, const float* b, Shape3 shape, float* out);

}  // namespace kernels

namespace reference {

void conv3x3_forward(const float* in, Shape3 in_shape, const float* weight, const float* bias, int out_channels,
                     int stride, float* out);
void conv3x3_backward_input(const float* grad_out, Shape3 out_shape, const float* weight, Shape3 in_shape, int stride,
                            float* grad_in);
void conv3x3_backward_weights(const float* in, Shape3 in_shape, const float* grad_out, Shape3 out_shape, int stride,
                              float* grad_weight, float* grad_bias);
void normalized_sq_distance(const float* a, const float* b, Shape3 shape, float* out);

}  // namespace reference

inline constexpr float kNormEps = 1e-6f;

}  // namespace convad::nn
