#pragma once

#include <span>
#include <vector>

#include "convad/cbm/model.hpp"
#include "convad/core/types.hpp"
#include "convad/nn/fit.hpp"

namespace convad::cbm {

/// Object-type classification pretraining over `samples` (grouped by Sample::category), all blocks trainable.
/// Returns a freshly initialized backbone when fewer than two categories are present.
nn::ConvBackbone pretrain_backbone(std::span<const Sample> samples, const TrainingConfig& cfg);

struct ExtractorResult {
    ConceptExtractor g;
    nn::FitHistory history;
};

/// Concept-only stage: mean over concepts of weighted BCE, alpha per concept from `train`.
ExtractorResult train_concept_extractor(std::span<const Sample> train, std::span<const Sample> val,
                                        const TrainingConfig& cfg, const nn::ConvBackbone& initial);

struct LabelFitResult {
    nn::Mlp f;
    nn::FitHistory history;
};

/// Trains f on fixed bottleneck inputs with weighted BCE (alpha from train labels).
LabelFitResult fit_label_predictor(const std::vector<std::vector<float>>& train_x, const std::vector<int>& train_y,
                                   const std::vector<std::vector<float>>& val_x, const std::vector<int>& val_y,
                                   const TrainingConfig& cfg);

struct TrainResult {
    TrainedCBM model;
    nn::FitHistory concept_history;  // g stage, or the single joint optimization
    nn::FitHistory label_history;    // f stage (independent/sequential only)
};

/// Trains a CBM in cfg.paradigm. `pretrained` skips pretraining; `extractor` reuses an already trained g for
/// the independent and sequential paradigms.
TrainResult train(const ScenarioSplit& split, const ConceptVocabulary& vocab, const TrainingConfig& cfg,
                  const nn::ConvBackbone* pretrained = nullptr, const ExtractorResult* extractor = nullptr);

/// Per-concept alphas over the given samples (single-class columns fall back to 1).
std::vector<double> concept_alphas(std::span<const Sample> samples, std::size_t k);

/// g logits of every sample, unaugmented.
std::vector<std::vector<float>> extract_logits(const ConceptExtractor& g, std::span<const Sample> samples);

std::vector<LogitPercentiles> logit_percentiles(const std::vector<std::vector<float>>& train_logits);

}  // namespace convad::cbm
