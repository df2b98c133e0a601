#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "convad/cbm/model.hpp"
#include "convad/core/dataset_io.hpp"
#include "convad/server/lru_cache.hpp"
#include "convad/vision/student_teacher.hpp"
#include "json.hpp"

namespace convad::server {

struct SessionConfig {
    std::filesystem::path model_path;
    std::optional<std::filesystem::path> visual_path;
    std::filesystem::path dataset_path;
    std::string host = "127.0.0.1";
    int port = 8080;
    bool reveal = false;
    std::string cors_origin = "*";
    int default_page_size = 500;
    std::size_t cache_capacity = 256;
};

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Request handling without the transport. The model is immutable after construction; the only shared mutable
/// state is the prediction and render caches.
class InferenceService {
public:
    /// Throws std::invalid_argument when the dataset vocabulary differs from the model's.
    InferenceService(cbm::TrainedCBM model, std::optional<vision::StudentTeacher> visual, Dataset dataset,
                     bool reveal, std::size_t cache_capacity = 256);
    static std::unique_ptr<InferenceService> load(const SessionConfig& cfg);

    [[nodiscard]] nlohmann::json health() const;
    [[nodiscard]] nlohmann::json meta() const;
    /// split is "train" or "test"; anything else raises NotFound.
    [[nodiscard]] nlohmann::json list_samples(const std::string& split, int offset, int limit) const;
    [[nodiscard]] nlohmann::json prediction(const std::string& id) const;
    /// Body {corrections: [{index, value}]}; BadRequest on malformed, out-of-range or duplicate corrections.
    [[nodiscard]] nlohmann::json intervene(const std::string& id, const nlohmann::json& body) const;

    [[nodiscard]] std::string image_png(const std::string& id) const;
    /// Per-image normalized heatmap blended over the image. NotFound without a visual branch.
    [[nodiscard]] std::string anomaly_map_png(const std::string& id) const;
    [[nodiscard]] nlohmann::json anomaly_map_raw(const std::string& id) const;

    [[nodiscard]] const cbm::TrainedCBM& model() const { return model_; }
    [[nodiscard]] bool has_visual() const { return visual_.has_value(); }
    [[nodiscard]] bool reveal() const { return reveal_; }

private:
    const Sample& sample(const std::string& id) const;
    Prediction predict(const Sample& s) const;
    AnomalyMap map_of(const Sample& s) const;
    nlohmann::json prediction_body(const Sample& s, const Prediction& p, std::span<const int> ranking) const;

    cbm::TrainedCBM model_;
    std::optional<vision::StudentTeacher> visual_;
    Dataset dataset_;
    std::unordered_map<std::string, std::size_t> by_id_;
    bool reveal_;
    mutable LruCache<std::string, Prediction> predictions_;
    mutable LruCache<std::string, AnomalyMap> maps_;
    mutable LruCache<std::string, std::string> renders_;
};

/// Jet-style colormap of v in [0,1].
std::array<std::uint8_t, 3> heat_color(double v);

}  // namespace convad::server
