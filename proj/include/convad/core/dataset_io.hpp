#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "convad/core/types.hpp"
#include "json.hpp"

namespace convad {

struct Dataset {
    ConceptVocabulary vocabulary;
    std::vector<Sample> samples;

    [[nodiscard]] const Sample* find(const std::string& id) const;
};

nlohmann::json to_json(const ConceptVocabulary& vocab);
ConceptVocabulary vocabulary_from_json(const nlohmann::json& j);

/// Relative image/mask paths of a sample inside an MVTec-style tree.
std::string image_relpath(const Sample& s);
std::string mask_relpath(const Sample& s);

/// Sample metadata record of the concept-dataset file (pixels live in the referenced PNGs).
nlohmann::json sample_record(const Sample& s, const std::string& image_path, const std::string& mask_path);

/// Writes PNGs in `<category>/{train,test}/...` layout plus `dataset.json` at the root.
void save_dataset(const std::filesystem::path& root, const Dataset& ds);

/// Writes a concept-dataset JSON whose image paths point at an existing tree rooted at `images_root`.
void write_concept_file(const std::filesystem::path& json_path, const std::filesystem::path& images_root,
                        const Dataset& ds);

/// Reads `dataset.json` when present (or a concept-dataset JSON file path); otherwise scans an MVTec tree,
/// yielding samples with empty concept vectors and an empty vocabulary.
Dataset load_dataset(const std::filesystem::path& root_or_file);

}  // namespace convad
