#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convad/cbm/model.hpp"
#include "json.hpp"

namespace convad::cbm {

struct LogitRow {
    std::string id;
    std::string split;
    std::string defect_type;  // empty for normals
    ConceptLogits logits;
};

struct Projection {
    std::vector<std::array<double, 2>> points;
    std::array<std::vector<double>, 2> components;  // unit loadings, largest-|loading| coordinate positive
    std::array<double, 2> explained_variance{};
};

struct LogitTable {
    std::vector<LogitRow> rows;
    std::optional<Projection> projection;  // absent for fewer than 3 rows

    [[nodiscard]] nlohmann::json to_json() const;
    /// id,split,defect_type,<concept names...>,pc1,pc2
    [[nodiscard]] std::string to_csv(const ConceptVocabulary& vocab) const;
};

/// Two leading principal components of the centered rows of `x`.
Projection pca2(const std::vector<std::vector<double>>& x);

LogitTable export_concept_logits(const TrainedCBM& model, std::span<const Sample> samples);

}  // namespace convad::cbm
