#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace convad {

/// RGB image stored row-major, channel-interleaved (HWC), values in [0,1].
struct Image {
    std::string id;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::string id_, int h, int w, std::array<float, 3> fill = {0.f, 0.f, 0.f});

    [[nodiscard]] std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    [[nodiscard]] float at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
    float& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

/// Binary per-pixel mask (1 = anomalous).
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

    [[nodiscard]] std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] std::size_t count() const;
};

enum class ConceptKind { kNormal, kAnomaly };

std::string to_string(ConceptKind kind);
ConceptKind concept_kind_from_string(const std::string& s);

struct Concept {
    std::string name;
    ConceptKind kind = ConceptKind::kAnomaly;
    bool operator==(const Concept&) const = default;
};

/// Ordered list of named concepts; the coordinate system of every concept vector.
class ConceptVocabulary {
public:
    ConceptVocabulary() = default;
    /// Throws std::invalid_argument when names repeat, are empty, k < 2, or a kind is missing.
    explicit ConceptVocabulary(std::vector<Concept> concepts);

    /// Skips validation; for vocabularies still under construction (raw MVTec loads).
    static ConceptVocabulary unchecked(std::vector<Concept> concepts);

    [[nodiscard]] std::size_t size() const { return concepts_.size(); }
    [[nodiscard]] bool empty() const { return concepts_.empty(); }
    [[nodiscard]] const Concept& operator[](std::size_t i) const { return concepts_[i]; }
    [[nodiscard]] const std::vector<Concept>& concepts() const { return concepts_; }
    [[nodiscard]] std::optional<std::size_t> index_of(const std::string& name) const;
    [[nodiscard]] std::vector<std::size_t> indices_of(ConceptKind kind) const;
    [[nodiscard]] std::vector<std::string> names() const;

    bool operator==(const ConceptVocabulary&) const = default;

private:
    std::vector<Concept> concepts_;
};

using ConceptVector = std::vector<std::uint8_t>;
using ConceptLogits = std::vector<double>;

enum class Origin { kReal, kSynthetic };
std::string to_string(Origin origin);
Origin origin_from_string(const std::string& s);

/// Which folder of an MVTec-style layout a sample came from.
enum class Subset { kTrain, kTest };
std::string to_string(Subset subset);
Subset subset_from_string(const std::string& s);

struct Sample {
    Image image;
    int label = 0;
    ConceptVector concepts;
    std::optional<Mask> mask;
    std::optional<std::string> defect_type;
    Origin origin = Origin::kReal;
    std::string category;
    Subset subset = Subset::kTrain;
    /// Paths relative to the dataset root when loaded from disk; empty for in-memory samples.
    std::string image_path;
    std::string mask_path;

    [[nodiscard]] const std::string& id() const { return image.id; }
};

struct AnomalyMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;
    double image_score = 0.0;
};

struct Prediction {
    ConceptLogits concept_logits;
    std::vector<double> concept_probs;
    std::vector<double> concept_entropies;
    std::vector<int> ucp_order;
    /// The vector the label predictor consumed (logits, or thresholded bits for the independent paradigm).
    std::vector<double> bottleneck;
    double label_prob = 0.0;
    std::optional<AnomalyMap> anomaly_map;
    std::optional<double> image_score;
};

struct ScenarioKind {
    enum class Base { kFully, kWeakly, kSag, kWeaklySag };
    Base base = Base::kFully;
    int shots = 0;  // weakly variants only

    static ScenarioKind fully() { return {Base::kFully, 0}; }
    static ScenarioKind weakly(int n) { return {Base::kWeakly, n}; }
    static ScenarioKind sag() { return {Base::kSag, 0}; }
    static ScenarioKind weakly_sag(int n) { return {Base::kWeaklySag, n}; }

    [[nodiscard]] bool uses_synthetic() const { return base == Base::kSag || base == Base::kWeaklySag; }
    [[nodiscard]] bool is_weakly() const { return base == Base::kWeakly || base == Base::kWeaklySag; }
    bool operator==(const ScenarioKind&) const = default;
};

/// Canonical names: fully, weakly1, weakly3, sag, weakly1+sag, weakly3+sag.
std::string to_string(const ScenarioKind& kind);
ScenarioKind scenario_from_string(const std::string& s);

struct ScenarioSplit {
    ScenarioKind scenario;
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
    std::uint64_t seed = 0;
};

double sigmoid(double x);

/// Every violated Sample/ConceptVector invariant; empty when valid.
std::vector<std::string> validate_sample(const Sample& s, const ConceptVocabulary& vocab);

}  // namespace convad
