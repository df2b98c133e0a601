#pragma once

#include <array>
#include <span>
#include <vector>

#include "convad/core/types.hpp"

namespace convad {

/// Default working resolution of the whole pipeline.
inline constexpr int kDefaultImageSize = 128;

Image resize_bilinear(const Image& src, int height, int width);
Mask resize_nearest(const Mask& src, int height, int width);

/// Bilinear resampling of a single-channel map with half-pixel centers (align_corners = false).
std::vector<float> upsample_bilinear(std::span<const float> src, int src_h, int src_w, int dst_h, int dst_w);

std::array<float, 3> corner_mean_color(const Image& img);

}  // namespace convad
