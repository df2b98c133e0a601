#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "convad/core/types.hpp"

namespace convad::concepts {

inline constexpr std::size_t kMaxConceptsPerImage = 5;

/// Transport or protocol failure of a VLM/embedder call.
class VlmError : public std::runtime_error {
public:
    VlmError(const std::string& what, bool retryable, std::string image_id = {})
        : std::runtime_error(what), retryable_(retryable), image_id_(std::move(image_id)) {}
    [[nodiscard]] bool retryable() const { return retryable_; }
    [[nodiscard]] const std::string& image_id() const { return image_id_; }

private:
    bool retryable_;
    std::string image_id_;
};

/// A VLM answer that violates the pipeline contract (orphan terms, missing annotations).
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConceptGroup {
    std::string name;
    std::vector<std::string> members;
};

class VLMClient {
public:
    virtual ~VLMClient() = default;
    virtual std::string describe(const Sample& sample, const std::string& prompt) = 0;
    /// At most kMaxConceptsPerImage terms; `prompt` already contains the description.
    virtual std::vector<std::string> extract_concepts(const Sample& sample, const std::string& prompt) = 0;
    virtual std::vector<ConceptGroup> group_concepts(const std::vector<std::string>& terms,
                                                     const std::string& prompt) = 0;
    /// One entry per vocabulary name.
    virtual std::map<std::string, bool> annotate(const Sample& sample, const std::vector<std::string>& vocabulary,
                                                 const std::string& prompt) = 0;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    /// Unit-norm vector of dimension dim(); deterministic per term.
    virtual std::vector<double> embed(const std::string& term) = 0;
    [[nodiscard]] virtual int dim() const = 0;
};

/// canonical name -> synonyms
using SynonymTable = std::map<std::string, std::vector<std::string>>;

/// Synonyms for the ShapesAD vocabulary.
SynonymTable shapes_ad_synonyms();

/// Offline oracle answering from generator ground truth. Concept bits are read from Sample::concepts,
/// aligned with `truth_vocabulary`.
class MockVLMOracle : public VLMClient {
public:
    MockVLMOracle(ConceptVocabulary truth_vocabulary, SynonymTable synonyms, double noise_rate = 0.0,
                  std::uint64_t seed = 0);

    std::string describe(const Sample& sample, const std::string& prompt) override;
    std::vector<std::string> extract_concepts(const Sample& sample, const std::string& prompt) override;
    std::vector<ConceptGroup> group_concepts(const std::vector<std::string>& terms,
                                             const std::string& prompt) override;
    std::map<std::string, bool> annotate(const Sample& sample, const std::vector<std::string>& vocabulary,
                                         const std::string& prompt) override;

    /// "describe:<id>" / "extract:<id>" / "group" / "annotate:<id>" in call order.
    [[nodiscard]] std::vector<std::string> trace() const;
    [[nodiscard]] std::string canonical(const std::string& term) const;

private:
    void record(std::string entry);
    [[nodiscard]] std::vector<std::string> present_names(const Sample& sample) const;

    ConceptVocabulary vocab_;
    SynonymTable synonyms_;
    std::map<std::string, std::string> to_canonical_;
    double noise_rate_;
    std::uint64_t seed_;
    mutable std::mutex mu_;
    std::vector<std::string> trace_;
};

/// Seeded unit vectors per canonical term; synonyms sit within `epsilon` of their canonical vector
/// (cosine >= sqrt(1 - epsilon^2)).
class MockEmbedder : public TextEmbedder {
public:
    explicit MockEmbedder(SynonymTable synonyms = {}, int dim = 64, double epsilon = 0.15, std::uint64_t seed = 0);
    std::vector<double> embed(const std::string& term) override;
    [[nodiscard]] int dim() const override { return dim_; }

private:
    std::map<std::string, std::string> to_canonical_;
    int dim_;
    double epsilon_;
    std::uint64_t seed_;
};

/// Prompt templates with named placeholders such as {object_category}, {defect_type}, {label}.
struct PromptSet {
    std::string describe;
    std::string extract;
    std::string group;
    std::string annotate;

    /// Reads describe.txt, extract.txt, group.txt and annotate.txt.
    static PromptSet load(const std::filesystem::path& dir);
    static PromptSet load_default();

    /// Substitutes {name} placeholders; throws std::invalid_argument on an unknown one.
    static std::string render(const std::string& tmpl, const std::map<std::string, std::string>& values);
};

/// Placeholder values describing one sample.
std::map<std::string, std::string> prompt_context(const Sample& sample);

}  // namespace convad::concepts
