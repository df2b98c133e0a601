#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "convad/core/types.hpp"

namespace convad::png {

Image read_rgb(const std::filesystem::path& path, std::string id = {});
void write_rgb(const std::filesystem::path& path, const Image& image);

/// 8-bit grayscale mask; any nonzero byte reads as anomalous.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);

void write_gray(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& bytes);

/// In-memory encoders; channels is 1 (gray), 3 (RGB) or 4 (RGBA).
std::string encode(int height, int width, int channels, const std::vector<std::uint8_t>& bytes);
std::string encode_rgb(const Image& image);

std::uint8_t to_byte(float v);

}  // namespace convad::png
