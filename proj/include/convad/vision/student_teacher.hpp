#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "convad/core/types.hpp"
#include "convad/nn/backbone.hpp"
#include "convad/nn/fit.hpp"
#include "convad/scenarios/augment.hpp"

namespace convad::vision {

struct StudentConfig {
    int max_epochs = 100;
    int early_stop_patience = 10;
    int lr_plateau_patience = 5;
    double lr_decay_factor = 0.1;
    int batch_size = 16;
    double learning_rate = 3e-3;
    std::uint64_t seed = 0;
    /// Off by default: the frozen teacher's features are then computed once.
    scenarios::AugmentationPolicy augmentation = scenarios::AugmentationPolicy::none();

    [[nodiscard]] nn::FitSchedule schedule() const;
};

void to_json(nlohmann::json& j, const StudentConfig& c);
void from_json(const nlohmann::json& j, StudentConfig& c);

/// Frozen teacher, trainable student of the same architecture, compared on pyramid levels.
class StudentTeacher {
public:
    StudentTeacher() = default;
    /// Fresh student initialized from `seed`; levels default to the backbone's pyramid blocks.
    StudentTeacher(nn::ConvBackbone teacher, std::uint64_t seed, std::vector<int> levels = {});

    [[nodiscard]] AnomalyMap anomaly_map(const Image& image) const;
    /// Sum over levels of the spatial mean of 0.5 * ||t_hat - s_hat||^2.
    [[nodiscard]] double loss(const Image& image) const;

    [[nodiscard]] const nn::ConvBackbone& teacher() const { return teacher_; }
    [[nodiscard]] const nn::ConvBackbone& student() const { return student_; }
    nn::ConvBackbone& student() { return student_; }
    [[nodiscard]] const std::vector<int>& levels() const { return levels_; }

    void save(const std::filesystem::path& path) const;
    static StudentTeacher load(const std::filesystem::path& path);

private:
    nn::ConvBackbone teacher_;
    nn::ConvBackbone student_;
    std::vector<int> levels_;
};

/// Per-position 0.5 * ||a_hat - b_hat||^2 and its gradient with respect to `b` scaled by `scale`.
/// grad_b is overwritten.
double feature_matching_backward(std::span<const float> a, std::span<const float> b, nn::Shape3 shape, double scale,
                                 std::span<float> grad_b);

struct StudentResult {
    StudentTeacher model;
    nn::FitHistory history;
};

/// Distills the teacher into the student on normal images only. Throws std::invalid_argument when any
/// training or validation sample is anomalous.
StudentResult train_student(StudentTeacher st, std::span<const Sample> train_normals,
                            std::span<const Sample> val_normals, const StudentConfig& cfg);

}  // namespace convad::vision
