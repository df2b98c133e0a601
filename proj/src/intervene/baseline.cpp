#include "convad/intervene/baseline.hpp"

#include <stdexcept>

namespace convad::intervene {

double DirectDetector::score(const Image& image) const { return sigmoid(net.logits(image).at(0)); }

DirectResult train_direct_detector(const ScenarioSplit& split, const cbm::TrainingConfig& cfg,
                                   const nn::ConvBackbone* pretrained) {
    // The label becomes the only "concept", so the concept-stage objective is exactly weighted BCE on y.
    auto relabel = [](const std::vector<Sample>& in) {
        std::vector<Sample> out = in;
        for (auto& s : out) s.concepts = {static_cast<std::uint8_t>(s.label)};
        return out;
    };
    const auto train = relabel(split.train);
    const auto val = relabel(split.val);
    if (train.empty()) throw std::invalid_argument("empty training set");
    std::vector<Sample> normals;
    for (const auto& s : split.train)
        if (s.label == 0) normals.push_back(s);
    const nn::ConvBackbone init = pretrained ? *pretrained : cbm::pretrain_backbone(normals, cfg);
    auto r = cbm::train_concept_extractor(train, val, cfg, init);
    return {DirectDetector{std::move(r.g)}, std::move(r.history)};
}

}  // namespace convad::intervene
