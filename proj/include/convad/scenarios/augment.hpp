#pragma once

#include "convad/core/random.hpp"
#include "convad/core/types.hpp"
#include "json.hpp"

namespace convad::scenarios {

struct AugmentationPolicy {
    double hflip_p = 0.5;
    double vflip_p = 0.5;
    double rotation_deg = 25.0;
    double brightness_jitter = 0.2;
    double contrast_jitter = 0.2;

    static AugmentationPolicy none() { return {0, 0, 0, 0, 0}; }
    [[nodiscard]] bool is_identity() const;
};

void to_json(nlohmann::json& j, const AugmentationPolicy& p);
void from_json(const nlohmann::json& j, AugmentationPolicy& p);

/// Concept-preserving photometric and geometric jitter. The mask, when present, follows the geometric part.
/// Rotation fills exposed corners with the image's corner color.
Sample augment(const Sample& sample, const AugmentationPolicy& policy, Rng& rng);

/// Pixel-only variant used on the training hot path.
Image augment_image(const Image& image, const AugmentationPolicy& policy, Rng& rng);

}  // namespace convad::scenarios
