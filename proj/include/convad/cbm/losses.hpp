#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace convad::cbm {

inline constexpr double kBceEps = 1e-7;

/// Raised by imbalance_alpha when only one class is present.
class DegenerateClass : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// #negatives / #positives.
double imbalance_alpha(std::span<const std::uint8_t> z);
/// imbalance_alpha, or 1 when the column is single-class.
double imbalance_alpha_or_one(std::span<const std::uint8_t> z);

/// Single weighted BCE term with zhat clipped to [eps, 1-eps].
double weighted_bce(double z, double zhat, double alpha);
/// Batch mean of weighted BCE terms.
double weighted_bce(std::span<const double> z, std::span<const double> zhat, double alpha);

/// d/d(logit) of weighted_bce(z, sigmoid(logit), alpha) for one element (clipping ignored).
double weighted_bce_grad_logit(double z, double logit, double alpha);

/// (L_Y + lambda * sum L_Cj) / (1 + lambda * k).
double joint_loss(double label_loss, std::span<const double> concept_losses, double lambda);

}  // namespace convad::cbm
