#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "convad/core/types.hpp"
#include "convad/nn/layers.hpp"

namespace convad::nn {

struct BackboneConfig {
    std::vector<int> channels{8, 16, 32, 64};  // one stride-2 conv+ReLU block each
    int height = 128;
    int width = 128;
    /// Blocks whose outputs form the feature pyramid.
    std::vector<int> pyramid_blocks{1, 2, 3};

    bool operator==(const BackboneConfig&) const = default;
};

/// Per-call activations; one per concurrent forward pass.
struct BackboneActivations {
    std::vector<float> input;
    std::vector<std::vector<float>> outputs;  // post-ReLU output of every block
    std::vector<float> embedding;             // [avg-pool | max-pool] of the last block
    std::vector<int> argmax;
};

/// Small strided CNN: feature pyramid plus a pooled embedding.
class ConvBackbone {
public:
    ConvBackbone() = default;
    ConvBackbone(BackboneConfig cfg, std::uint64_t seed);

    void forward(const Image& image, BackboneActivations& acts) const;

    /// Backpropagates into blocks >= first_trainable. `grad_embedding` may be empty; `grad_blocks` may be
    /// empty or hold one (possibly empty) gradient per block output.
    void backward(const BackboneActivations& acts, std::span<const float> grad_embedding,
                  const std::vector<std::vector<float>>& grad_blocks, int first_trainable);

    std::vector<ParamRef> params(int first_trainable = 0);

    [[nodiscard]] const BackboneConfig& config() const { return cfg_; }
    [[nodiscard]] int num_blocks() const { return static_cast<int>(blocks_.size()); }
    [[nodiscard]] Shape3 block_shape(int b) const { return shapes_[b + 1]; }
    [[nodiscard]] Shape3 input_shape() const { return shapes_[0]; }
    [[nodiscard]] int embedding_dim() const { return 2 * cfg_.channels.back(); }
    [[nodiscard]] const std::vector<Conv2d>& blocks() const { return blocks_; }
    std::vector<Conv2d>& blocks() { return blocks_; }

private:
    BackboneConfig cfg_;
    std::vector<Conv2d> blocks_;
    std::vector<Shape3> shapes_;
};

/// HWC [0,1] image -> CHW tensor scaled to [-1,1].
void image_to_tensor(const Image& image, std::vector<float>& out);

}  // namespace convad::nn
