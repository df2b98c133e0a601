#pragma once

#include <span>
#include <vector>

namespace convad::intervene {

/// Natural-log binary entropy with 0 log 0 = 0.
double entropy(double p);

/// Concept indices by descending entropy, ties (equal to 12 decimals) by ascending index.
std::vector<int> ucp_order(std::span<const double> probs);

}  // namespace convad::intervene
