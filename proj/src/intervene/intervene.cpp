#include "convad/intervene/intervene.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "convad/core/random.hpp"
#include "convad/metrics/metrics.hpp"

namespace convad::intervene {

std::string to_string(Ordering o) {
    switch (o) {
        case Ordering::kUcp: return "ucp";
        case Ordering::kRandom: return "random";
        case Ordering::kIndex: return "index";
    }
    return "ucp";
}

Ordering ordering_from_string(const std::string& s) {
    if (s == "ucp") return Ordering::kUcp;
    if (s == "random") return Ordering::kRandom;
    if (s == "index") return Ordering::kIndex;
    throw std::invalid_argument("unknown ordering '" + s + "'");
}

std::string to_string(CurveMetric m) { return m == CurveMetric::kIAuc ? "I-AUC" : "I-F1"; }

CurveMetric curve_metric_from_string(const std::string& s) {
    if (s == "I-AUC" || s == "auc" || s == "i-auc") return CurveMetric::kIAuc;
    if (s == "I-F1" || s == "f1" || s == "i-f1") return CurveMetric::kIF1;
    throw std::invalid_argument("unknown curve metric '" + s + "'");
}

Prediction apply_interventions(const cbm::TrainedCBM& model, const Prediction& pred,
                               std::span<const Correction> corrections) {
    const int k = model.k();
    std::set<int> seen;
    for (const auto& c : corrections) {
        if (c.concept_index < 0 || c.concept_index >= k)
            throw std::invalid_argument("concept index " + std::to_string(c.concept_index) + " outside 0.." +
                                        std::to_string(k - 1));
        if (c.value != 0 && c.value != 1) throw std::invalid_argument("correction value must be 0 or 1");
        if (!seen.insert(c.concept_index).second)
            throw std::invalid_argument("duplicate correction for concept " + std::to_string(c.concept_index));
    }
    Prediction out = pred;
    if (corrections.empty()) return out;
    for (const auto& c : corrections) {
        const auto& pct = model.percentiles.at(c.concept_index);
        out.concept_logits[c.concept_index] = c.value ? pct.p95 : pct.p5;
        out.bottleneck[c.concept_index] =
            model.paradigm == cbm::Paradigm::kIndependent ? c.value : out.concept_logits[c.concept_index];
    }
    cbm::refresh_concept_stats(out);
    out.label_prob = model.label_prob(out.bottleneck);
    return out;
}

std::vector<int> intervention_targets(const Prediction& pred, const InterventionPolicy& policy,
                                      std::size_t sample_index) {
    const int k = static_cast<int>(pred.concept_logits.size());
    if (policy.budget < 0 || policy.budget > k) throw std::invalid_argument("budget outside 0..k");
    std::vector<int> order;
    switch (policy.ordering) {
        case Ordering::kUcp: order = pred.ucp_order; break;
        case Ordering::kIndex:
            order.resize(k);
            std::iota(order.begin(), order.end(), 0);
            break;
        case Ordering::kRandom: {
            order.resize(k);
            std::iota(order.begin(), order.end(), 0);
            Rng rng(derive_seed(policy.seed, fnv1a("random-order"), sample_index));
            std::shuffle(order.begin(), order.end(), rng);
            break;
        }
    }
    order.resize(policy.budget);
    return order;
}

std::vector<Correction> ground_truth_corrections(std::span<const int> targets, const ConceptVector& truth) {
    std::vector<Correction> out;
    out.reserve(targets.size());
    for (int j : targets) out.push_back({j, truth.at(j)});
    return out;
}

std::vector<CurvePoint> intervention_curve(const cbm::TrainedCBM& model, std::span<const Sample> samples,
                                           std::span<const Prediction> preds, Ordering ordering, CurveMetric metric,
                                           std::uint64_t seed) {
    if (samples.size() != preds.size()) throw std::invalid_argument("one prediction per sample required");
    std::vector<std::uint8_t> labels;
    for (const auto& s : samples) labels.push_back(static_cast<std::uint8_t>(s.label));
    std::vector<CurvePoint> curve;
    for (int b = 0; b <= model.k(); ++b) {
        std::vector<double> scores(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto targets = intervention_targets(preds[i], {ordering, b, seed}, i);
            const auto corr = ground_truth_corrections(targets, samples[i].concepts);
            scores[i] = apply_interventions(model, preds[i], corr).label_prob;
        }
        const double v =
            metric == CurveMetric::kIAuc ? metrics::roc_auc(scores, labels) : metrics::best_f1(scores, labels).f1;
        curve.push_back({b, v});
    }
    return curve;
}

std::vector<CurvePoint> intervention_curve(const cbm::TrainedCBM& model, std::span<const Sample> samples,
                                           Ordering ordering, CurveMetric metric, std::uint64_t seed) {
    std::vector<Prediction> preds;
    preds.reserve(samples.size());
    for (const auto& s : samples) preds.push_back(model.predict(s.image));
    return intervention_curve(model, samples, preds, ordering, metric, seed);
}

double curve_mean(std::span<const CurvePoint> curve, int from, int to) {
    double acc = 0;
    int n = 0;
    for (const auto& p : curve)
        if (p.budget >= from && p.budget <= to) {
            acc += p.metric;
            ++n;
        }
    if (n == 0) throw std::invalid_argument("empty budget range");
    return acc / n;
}

}  // namespace convad::intervene
