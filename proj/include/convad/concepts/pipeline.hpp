#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convad/concepts/vlm.hpp"
#include "convad/core/types.hpp"
#include "json.hpp"

namespace convad::concepts {

struct PipelineConfig {
    double subset_fraction = 0.05;
    double similarity_threshold = 0.9;
    int max_grouped = 50;
    /// Extra attempts after a retryable VLM failure.
    int max_retries = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// ceil(fraction * N) samples covering every defect type, in dataset order.
std::vector<Sample> select_context_subset(std::span<const Sample> dataset, const PipelineConfig& cfg);

struct ExtractedConcept {
    std::string term;
    std::string sample_id;
    int label = 0;
};

/// describe() then extract_concepts() per image; duplicates are kept.
std::vector<ExtractedConcept> create_concept_list(std::span<const Sample> subset, VLMClient& vlm,
                                                  const PromptSet& prompts, const PipelineConfig& cfg = {});

struct GroupingResult {
    std::vector<std::string> terms;
    /// grouped term -> raw terms it stands for
    std::map<std::string, std::vector<std::string>> members;
};

/// Asks the VLM to merge related terms, then keeps at most max_grouped groups (most frequent first).
/// Throws IntegrityError when a group is empty or names a member that is not among the raw terms.
GroupingResult group_concepts(std::span<const std::string> raw, VLMClient& vlm, const PromptSet& prompts,
                              const PipelineConfig& cfg = {});

/// u.v / (|u||v|); throws std::invalid_argument on a zero vector or a dimension mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct Removal {
    std::string term;
    std::string reason;
};

struct FilterResult {
    std::vector<std::string> kept;
    std::vector<Removal> removed;
};

/// Drops the term with the most above-threshold partners until no such pair remains; degree ties are
/// broken by a seeded draw.
FilterResult filter_concepts(std::span<const std::string> terms, TextEmbedder& embedder, const PipelineConfig& cfg);

/// One binary vector per sample aligned with `vocab`. Throws IntegrityError when the VLM omits a concept
/// or answers for one outside the vocabulary.
std::vector<ConceptVector> annotate_dataset(std::span<const Sample> dataset, const ConceptVocabulary& vocab,
                                            VLMClient& vlm, const PromptSet& prompts, const PipelineConfig& cfg = {});

struct ConceptQuality {
    std::string name;
    ConceptKind kind = ConceptKind::kAnomaly;
    double accuracy = 0;
    std::optional<double> precision;
    std::optional<double> recall;
};

struct MeanStd {
    double mean = 0;
    double std = 0;
    int count = 0;
    int excluded = 0;
};

struct QualityAggregate {
    MeanStd accuracy, precision, recall;
};

struct AnnotationReport {
    std::vector<ConceptQuality> concepts;
    /// "all", "anomaly", "normal"
    std::map<std::string, QualityAggregate> aggregates;

    [[nodiscard]] nlohmann::json to_json() const;
};

AnnotationReport evaluate_annotations(std::span<const ConceptVector> pred, std::span<const ConceptVector> truth,
                                      const ConceptVocabulary& vocab);

/// Ground-truth vectors (aligned with `truth_vocab`) re-indexed to `target`; throws std::invalid_argument when a
/// target concept has no ground-truth counterpart.
std::vector<ConceptVector> align_concepts(std::span<const Sample> samples, const ConceptVocabulary& truth_vocab,
                                          const ConceptVocabulary& target);

struct PipelineResult {
    std::vector<std::string> subset_ids;
    std::vector<ExtractedConcept> raw;
    GroupingResult grouping;
    FilterResult filtering;
    ConceptVocabulary vocabulary;
    std::vector<ConceptVector> annotations;  // aligned with the input dataset

    [[nodiscard]] nlohmann::json to_json(std::span<const Sample> dataset) const;
};

/// All three steps. Context images come from `context_pool` (usually the training split); every sample of
/// `dataset` is annotated. A kept term is normal-indicative when any of its raw terms came from a normal image.
PipelineResult run_pipeline(std::span<const Sample> context_pool, std::span<const Sample> dataset, VLMClient& vlm,
                            TextEmbedder& embedder, const PromptSet& prompts, const PipelineConfig& cfg);

}  // namespace convad::concepts
