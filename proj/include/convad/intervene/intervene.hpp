#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "convad/cbm/model.hpp"
#include "convad/core/types.hpp"

namespace convad::intervene {

struct Correction {
    int concept_index = 0;
    int value = 0;
};

enum class Ordering { kUcp, kRandom, kIndex };
std::string to_string(Ordering o);
Ordering ordering_from_string(const std::string& s);

struct InterventionPolicy {
    Ordering ordering = Ordering::kUcp;
    int budget = 0;
    std::uint64_t seed = 0;
};

/// Returns a corrected copy of `pred`. Sequential/joint: logit_j := p95_j (value 1) or p5_j (value 0).
/// Independent: the bottleneck bit is set to the value and the displayed logit to the same percentile.
/// Throws std::invalid_argument on out-of-range or duplicate indices and non-binary values.
Prediction apply_interventions(const cbm::TrainedCBM& model, const Prediction& pred,
                               std::span<const Correction> corrections);

/// First `budget` concepts of the policy order for one prediction.
std::vector<int> intervention_targets(const Prediction& pred, const InterventionPolicy& policy,
                                      std::size_t sample_index);

/// Corrections that set `targets` to the ground-truth concepts.
std::vector<Correction> ground_truth_corrections(std::span<const int> targets, const ConceptVector& truth);

enum class CurveMetric { kIAuc, kIF1 };
std::string to_string(CurveMetric m);
CurveMetric curve_metric_from_string(const std::string& s);

struct CurvePoint {
    int budget = 0;
    double metric = 0;
};

/// Metric of the corrected label probabilities for budgets 0..k. `preds[i]` must be model.predict(samples[i]).
std::vector<CurvePoint> intervention_curve(const cbm::TrainedCBM& model, std::span<const Sample> samples,
                                           std::span<const Prediction> preds, Ordering ordering,
                                           CurveMetric metric = CurveMetric::kIAuc, std::uint64_t seed = 0);

/// Convenience overload that runs predict() itself.
std::vector<CurvePoint> intervention_curve(const cbm::TrainedCBM& model, std::span<const Sample> samples,
                                           Ordering ordering, CurveMetric metric = CurveMetric::kIAuc,
                                           std::uint64_t seed = 0);

/// Mean metric over budgets [from, to].
double curve_mean(std::span<const CurvePoint> curve, int from, int to);

}  // namespace convad::intervene
