#include "convad/intervene/ucp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace convad::intervene {

double entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("entropy: probability outside [0,1]");
    double h = 0;
    if (p > 0) h -= p * std::log(p);
    if (p < 1) h -= (1 - p) * std::log1p(-p);
    return h;
}

std::vector<int> ucp_order(std::span<const double> probs) {
    // p and 1 - p differ in the last bits of their entropy; round so that they tie.
    std::vector<double> h(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) h[i] = std::round(entropy(probs[i]) * 1e12);
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return h[a] > h[b]; });
    return order;
}

}  // namespace convad::intervene
