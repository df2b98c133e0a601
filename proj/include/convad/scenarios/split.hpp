#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "convad/core/types.hpp"

namespace convad::scenarios {

inline constexpr double kFullyTrainFraction = 0.8;
inline constexpr double kValFraction = 0.1;

/// Materializes a supervision scenario. `pool` holds real samples (normals tagged train/test by Sample::subset,
/// real anomalies); `synthetic` holds generated anomalies derived from training normals.
ScenarioSplit build_scenario_split(std::span<const Sample> pool, std::span<const Sample> synthetic,
                                   const ScenarioKind& kind, std::uint64_t seed, double val_fraction = kValFraction);

/// Every violated scenario constraint; empty when the split is consistent.
std::vector<std::string> check_split(const ScenarioSplit& split);

}  // namespace convad::scenarios
