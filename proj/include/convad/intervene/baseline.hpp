#pragma once

#include "convad/cbm/model.hpp"
#include "convad/cbm/train.hpp"
#include "convad/core/types.hpp"

namespace convad::intervene {

/// Backbone with a direct anomaly head and no concept bottleneck; the reference line of intervention plots.
struct DirectDetector {
    cbm::ConceptExtractor net;  // a single head
    [[nodiscard]] double score(const Image& image) const;
};

struct DirectResult {
    DirectDetector model;
    nn::FitHistory history;
};

/// Weighted-BCE training on the anomaly label with the CBM's schedule, augmentation and pretraining.
DirectResult train_direct_detector(const ScenarioSplit& split, const cbm::TrainingConfig& cfg,
                                   const nn::ConvBackbone* pretrained = nullptr);

}  // namespace convad::intervene
