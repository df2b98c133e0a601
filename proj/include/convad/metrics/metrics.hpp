#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace convad::metrics {

/// Mann-Whitney ROC AUC, ties counted one half. Throws std::invalid_argument unless both classes occur.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double roc_auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct F1Result {
    double f1 = 0;
    double threshold = 0;
};

/// Maximum F1 of the rule score >= t over observed scores t; equal F1 resolves to the lowest t.
F1Result best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// A score map with its ground-truth mask, both row-major.
struct MapView {
    int height = 0;
    int width = 0;
    std::span<const float> values;
    std::span<const std::uint8_t> mask;
};

inline constexpr double kDefaultFprLimit = 0.3;

/// Per-region overlap integrated over FPR in [0, fpr_limit] and divided by fpr_limit.
/// Regions are 8-connected mask components; the threshold sweep starts above the maximum score.
double pro(std::span<const MapView> maps, double fpr_limit = kDefaultFprLimit);

/// 8-connected component labels (0 = background, 1.. = regions) and the region count.
int label_components(int height, int width, std::span<const std::uint8_t> mask, std::vector<int>& labels);

}  // namespace convad::metrics
