#include "convad/cbm/losses.hpp"

#include <algorithm>
#include <cmath>

#include "convad/core/types.hpp"

namespace convad::cbm {

double imbalance_alpha(std::span<const std::uint8_t> z) {
    std::size_t pos = 0;
    for (auto v : z) pos += v != 0;
    const std::size_t neg = z.size() - pos;
    if (pos == 0 || neg == 0) throw DegenerateClass("imbalance ratio needs both classes");
    return static_cast<double>(neg) / static_cast<double>(pos);
}

double imbalance_alpha_or_one(std::span<const std::uint8_t> z) {
    try {
        return imbalance_alpha(z);
    } catch (const DegenerateClass&) {
        return 1.0;
    }
}

double weighted_bce(double z, double zhat, double alpha) {
    const double p = std::clamp(zhat, kBceEps, 1.0 - kBceEps);
    return -(alpha * z * std::log(p) + (1.0 - z) * std::log(1.0 - p));
}

double weighted_bce(std::span<const double> z, std::span<const double> zhat, double alpha) {
    if (z.size() != zhat.size()) throw std::invalid_argument("weighted_bce: length mismatch");
    if (z.empty()) return 0.0;
    double acc = 0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += weighted_bce(z[i], zhat[i], alpha);
    return acc / static_cast<double>(z.size());
}

double weighted_bce_grad_logit(double z, double logit, double alpha) {
    const double s = sigmoid(logit);
    return -alpha * z * (1.0 - s) + (1.0 - z) * s;
}

double joint_loss(double label_loss, std::span<const double> concept_losses, double lambda) {
    if (concept_losses.empty()) throw std::invalid_argument("joint_loss: k must be at least 1");
    if (lambda < 0) throw std::invalid_argument("joint_loss: lambda must be nonnegative");
    double sum = 0;
    for (double l : concept_losses) sum += l;
    return (label_loss + lambda * sum) / (1.0 + lambda * static_cast<double>(concept_losses.size()));
}

}  // namespace convad::cbm
