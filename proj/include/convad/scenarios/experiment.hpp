#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "convad/cbm/model.hpp"
#include "convad/metrics/report.hpp"
#include "convad/vision/student_teacher.hpp"
#include "json.hpp"

namespace convad::scenarios {

struct ExperimentConfig {
    /// "shapes_ad" for the built-in generator, otherwise a dataset directory or concept-dataset file.
    std::string dataset = "shapes_ad";
    std::uint64_t dataset_seed = 0;
    int n_synthetic_per_defect = 25;
    std::vector<ScenarioKind> scenarios{ScenarioKind::fully(),  ScenarioKind::weakly(1),     ScenarioKind::weakly(3),
                                        ScenarioKind::sag(),    ScenarioKind::weakly_sag(1), ScenarioKind::weakly_sag(3)};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    cbm::TrainingConfig training;
    bool visual = true;
    vision::StudentConfig student;
    metrics::EvaluationOptions evaluation;
};

/// Accepts the full field names plus the shorthands "paradigm", "lambda" and "augmentation".
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);

struct ExperimentData {
    ConceptVocabulary vocabulary;
    std::vector<Sample> pool;       // real samples
    std::vector<Sample> synthetic;  // generated anomalies
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

struct CellResult {
    ScenarioKind scenario;
    std::uint64_t seed = 0;
    std::optional<metrics::EvaluationReport> report;
    std::string error;
    double seconds = 0;
};

struct ExperimentReport {
    std::vector<CellResult> cells;
    /// scenario name -> metric means over the seeds that succeeded
    std::vector<std::pair<std::string, metrics::MetricTable>> rows;

    [[nodiscard]] nlohmann::json to_json() const;
    /// One row per scenario: scenario,C-AUC,I-AUC,I-F1,P-AUC,P-F1,PRO,C-F1,failed_cells
    [[nodiscard]] std::string to_csv() const;
};

using ProgressFn = std::function<void(const CellResult&)>;

/// Every (scenario, seed) cell: split, train the CBM, train the student, evaluate. A failing stage is recorded
/// in its cell and the run continues. With `out_dir`, writes <scenario>/seed<k>/report.json, results.json
/// and results.csv.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir = {},
                                const ProgressFn& progress = {});

}  // namespace convad::scenarios
