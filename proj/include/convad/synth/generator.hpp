#pragma once

// Procedural ShapesAD generator: normal object renders plus pose-locked defect injection with exact
// ground-truth masks and concept vectors.

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "convad/core/types.hpp"
#include "json.hpp"

namespace convad::synth {

using Rgb = std::array<float, 3>;

struct Point {
    double x = 0;
    double y = 0;
};

struct Pose {
    Point center;
    double rotation_deg = 0;
    double scale = 1.0;
};

struct ObjectSpec {
    std::string object_type;  // disc | ring | plate
    Rgb base_color{0.5f, 0.5f, 0.5f};
    std::uint64_t texture_seed = 0;
    Pose pose;
    float brightness = 1.0f;
    Rgb background{0.10f, 0.10f, 0.12f};
    int height = 128;
    int width = 128;
};

/// Straight stroke (scratch).
struct LineGeometry {
    Point a, b;
    double width = 2.0;
};
/// Main polyline plus an optional side branch (crack).
struct PolylineGeometry {
    std::vector<Point> vertices;
    std::vector<Point> branch;
    double width = 1.8;
};
/// Rotated ellipse (hole).
struct EllipseGeometry {
    Point center;
    double rx = 5, ry = 4, angle_deg = 0;
};
/// Union of overlapping discs (stain).
struct BlobGeometry {
    struct Lobe {
        Point center;
        double radius = 4;
    };
    std::vector<Lobe> lobes;
};

using DefectGeometry = std::variant<LineGeometry, PolylineGeometry, EllipseGeometry, BlobGeometry>;

struct DefectSpec {
    std::string defect_type;  // scratch | hole | stain | crack
    DefectGeometry geometry;
    double intensity = 1.0;   // (0,1]
    std::vector<std::size_t> implied_concepts;
    std::vector<std::size_t> suppressed_concepts;
};

struct EditPrompt {
    DefectSpec defect;
    ObjectSpec object;
    bool pose_lock = true;
};

struct ConceptRule {
    std::vector<std::size_t> implied;
    std::vector<std::size_t> suppresses;
};

struct GeneratorConfig {
    int height = 128;
    int width = 128;
    int n_normal = 100;
    /// Share of normals written to test/good; the rest form the normal training pool.
    double normal_test_fraction = 0.2;
    int n_anomalous_per_defect = 25;
    int n_synthetic_per_defect = 0;
    std::vector<std::string> object_types{"disc", "ring", "plate"};
    std::vector<std::string> defect_types;
    ConceptVocabulary vocabulary;
    std::map<std::string, ConceptRule> concept_map;
    std::vector<std::size_t> normal_concepts;
    Rgb background{0.10f, 0.10f, 0.12f};
    std::uint64_t seed = 0;

    /// The default 12-concept, 4-defect ShapesAD configuration.
    static GeneratorConfig shapes_ad(std::uint64_t seed = 0);
    /// Throws std::invalid_argument on a broken configuration.
    void validate() const;
    [[nodiscard]] int n_normal_test() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& cfg);
void from_json(const nlohmann::json& j, GeneratorConfig& cfg);

/// Raised when a defect's geometry leaves the object region or its spec is malformed.
class DefectRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Minimum mean absolute per-channel change inside the mask of any generated defect.
inline constexpr double kSeparabilityFloor = 0.08;
inline constexpr double kMinIntensity = 0.75;

ObjectSpec object_spec(const GeneratorConfig& cfg, std::int64_t index);
Image render_object(const ObjectSpec& spec, std::string id);
/// Pixels fully covered by the object (all supersamples inside).
Mask object_interior(const ObjectSpec& spec);

Sample generate_normal(const GeneratorConfig& cfg, std::int64_t index);

/// Rasterized defect coverage in [0,1] per pixel (4x4 supersampling).
std::vector<float> defect_coverage(const DefectGeometry& geometry, int height, int width);

/// Random defect of the given type placed inside the object's interior.
DefectSpec sample_defect(const GeneratorConfig& cfg, const ObjectSpec& object, const std::string& defect_type,
                         std::uint64_t seed);

/// Pose-locked edit: pixels outside the returned mask are bit-identical to the parent.
Sample inject_defect(const Sample& normal, const EditPrompt& prompt, std::uint64_t seed);

struct GeneratedDataset {
    ConceptVocabulary vocabulary;
    std::vector<Sample> samples;    // real pool: normals (train + test) and real anomalies
    std::vector<Sample> synthetic;  // edits of training normals
};

GeneratedDataset build_dataset(const GeneratorConfig& cfg);

/// generate_normal index of the parent of real anomaly i of defect type `defect`.
std::int64_t real_anomaly_parent(std::size_t defect, int i);
/// generate_normal index of the (training) parent of synthetic anomaly i of defect type `defect`.
std::int64_t synthetic_parent(const GeneratorConfig& cfg, std::size_t defect, int i);

}  // namespace convad::synth
