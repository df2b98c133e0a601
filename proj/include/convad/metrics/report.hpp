#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convad/cbm/model.hpp"
#include "convad/core/types.hpp"
#include "convad/metrics/metrics.hpp"
#include "convad/vision/student_teacher.hpp"
#include "json.hpp"

namespace convad::metrics {

inline const std::vector<std::string> kMetricNames = {"C-AUC", "C-F1", "I-AUC", "I-F1", "P-AUC", "P-F1", "PRO"};

struct MetricValue {
    std::optional<double> value;
    std::string skipped;  // reason when value is empty
};

struct ConceptScore {
    std::string name;
    ConceptKind kind = ConceptKind::kAnomaly;
    std::optional<double> auc;
    std::optional<double> f1;
};

using MetricTable = std::map<std::string, MetricValue>;

struct EvaluationReport {
    MetricTable overall;
    std::map<std::string, MetricTable> per_category;
    /// Unweighted mean over categories (equals `overall` for a single category).
    MetricTable category_average;
    std::vector<ConceptScore> concepts;
    int concepts_skipped = 0;
    int n_samples = 0;

    [[nodiscard]] double get(const std::string& metric) const;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct EvaluationOptions {
    /// C-AUC on the flattened concept matrix instead of the macro mean over concepts.
    bool flattened_concepts = false;
    double fpr_limit = kDefaultFprLimit;
    bool per_category = true;
};

/// Scores already computed for every sample; `maps` may be empty (no visual branch).
EvaluationReport evaluate_predictions(std::span<const Sample> samples, std::span<const Prediction> preds,
                                      std::span<const AnomalyMap> maps, const ConceptVocabulary& vocab,
                                      const EvaluationOptions& opts = {});

EvaluationReport evaluate_model(const cbm::TrainedCBM& model, const vision::StudentTeacher* visual,
                                std::span<const Sample> test, const EvaluationOptions& opts = {});

/// Mean of each metric over reports; a metric missing from any report stays skipped.
MetricTable mean_over_seeds(std::span<const EvaluationReport> reports);

/// Mean of each metric over tables, skipping tables where it is unavailable.
MetricTable mean_of_tables(std::span<const MetricTable> tables);

nlohmann::json to_json(const MetricTable& t);

}  // namespace convad::metrics
