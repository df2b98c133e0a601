#pragma once

// Single-file model archive: magic, format version, JSON manifest, then raw float32 tensors in
// manifest order.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "convad/nn/layers.hpp"
#include "json.hpp"

namespace convad::nn {

inline constexpr char kArchiveMagic[8] = {'C', 'O', 'N', 'V', 'A', 'D', 'C', 'K'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
    nlohmann::json manifest;
    std::map<std::string, std::vector<float>> tensors;
};

/// Stores `manifest` plus every parameter's value; the tensor table is added under manifest["tensors"].
void write_archive(const std::filesystem::path& path, nlohmann::json manifest, const std::vector<ParamRef>& params);
Archive read_archive(const std::filesystem::path& path);

/// Copies archived tensors into `params` by name; throws on a missing tensor or size mismatch.
void load_params(const Archive& archive, const std::vector<ParamRef>& params);

}  // namespace convad::nn
