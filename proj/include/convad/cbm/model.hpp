#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "convad/core/types.hpp"
#include "convad/nn/backbone.hpp"
#include "convad/nn/fit.hpp"
#include "convad/nn/layers.hpp"
#include "convad/scenarios/augment.hpp"
#include "json.hpp"

namespace convad::cbm {

enum class Paradigm { kIndependent, kSequential, kJoint };
std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

struct TrainingConfig {
    Paradigm paradigm = Paradigm::kJoint;
    double lambda_tradeoff = 1.0;
    int max_epochs = 100;
    int early_stop_patience = 10;
    int lr_plateau_patience = 5;
    double lr_decay_factor = 0.1;
    int warmup_epochs = 20;
    int batch_size = 16;
    double learning_rate = 3e-3;
    /// Learning rate of the separately trained label predictor (independent/sequential).
    double label_learning_rate = 1e-2;
    std::uint64_t seed = 0;
    /// Number of trailing backbone blocks updated during concept training.
    int finetune_blocks = 4;
    int pretrain_epochs = 5;
    double pretrain_learning_rate = 1e-3;
    int hidden_units = 8;
    scenarios::AugmentationPolicy augmentation;
    nn::BackboneConfig backbone;

    [[nodiscard]] nn::FitSchedule schedule() const;
    [[nodiscard]] int first_trainable_block() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

/// g: backbone + k parallel linear heads on the pooled embedding.
struct ConceptExtractor {
    nn::ConvBackbone backbone;
    nn::Linear heads;

    [[nodiscard]] int k() const { return heads.out_f; }
    void logits(const Image& image, std::vector<float>& out) const;
    [[nodiscard]] ConceptLogits logits(const Image& image) const;
    std::vector<nn::ParamRef> params(int first_trainable_block);
};

struct LogitPercentiles {
    double p5 = 0;
    double p95 = 0;
};

/// Linear-interpolated percentile (q in [0,100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

class TrainedCBM {
public:
    ConceptVocabulary vocabulary;
    Paradigm paradigm = Paradigm::kJoint;
    TrainingConfig config;
    ConceptExtractor g;
    nn::Mlp f;
    std::vector<LogitPercentiles> percentiles;
    /// Free-form record of the data the model was trained on (dataset, scenario, seed).
    nlohmann::json metadata = nlohmann::json::object();

    [[nodiscard]] int k() const { return g.k(); }

    /// Vector consumed by f: thresholded bits for the independent paradigm, raw logits otherwise.
    [[nodiscard]] std::vector<double> bottleneck(std::span<const double> logits) const;
    [[nodiscard]] double label_prob(std::span<const double> bottleneck) const;

    [[nodiscard]] Prediction predict(const Image& image) const;
    /// Fills every Prediction field from already computed logits.
    [[nodiscard]] Prediction predict_from_logits(ConceptLogits logits) const;

    void save(const std::filesystem::path& path) const;
    static TrainedCBM load(const std::filesystem::path& path);
};

/// Recomputes probs, entropies and UCP order from concept_logits.
void refresh_concept_stats(Prediction& p);

}  // namespace convad::cbm
