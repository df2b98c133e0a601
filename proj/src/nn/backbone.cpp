#include "convad/nn/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace convad::nn {

void image_to_tensor(const Image& image, std::vector<float>& out) {
    const std::size_t plane = image.pixel_count();
    out.resize(plane * 3);
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) out[c * plane + p] = image.pixels[p * 3 + c] * 2.f - 1.f;
}

ConvBackbone::ConvBackbone(BackboneConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    if (cfg_.channels.size() < 2) throw std::invalid_argument("backbone needs at least two blocks");
    Rng rng(seed);
    shapes_.push_back({3, cfg_.height, cfg_.width});
    int in_c = 3;
    for (int c : cfg_.channels) {
        Conv2d conv(in_c, c, 2);
        conv.init_he(rng);
        shapes_.push_back(conv.output_shape(shapes_.back()));
        blocks_.push_back(std::move(conv));
        in_c = c;
    }
    for (int b : cfg_.pyramid_blocks)
        if (b < 0 || b >= num_blocks()) throw std::invalid_argument("pyramid block index out of range");
}

void ConvBackbone::forward(const Image& image, BackboneActivations& acts) const {
    if (image.height != cfg_.height || image.width != cfg_.width)
        throw std::invalid_argument("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                                    ", backbone expects " + std::to_string(cfg_.height) + "x" +
                                    std::to_string(cfg_.width));
    image_to_tensor(image, acts.input);
    acts.outputs.resize(blocks_.size());
    const float* in = acts.input.data();
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        auto& out = acts.outputs[b];
        out.resize(shapes_[b + 1].size());
        blocks_[b].forward(in, shapes_[b], out.data());
        for (auto& v : out) v = std::max(v, 0.f);
        in = out.data();
    }
    const Shape3 last = shapes_.back();
    const std::size_t plane = last.plane();
    acts.embedding.assign(2 * last.c, 0.f);
    acts.argmax.assign(last.c, 0);
    const auto& top = acts.outputs.back();
    for (int c = 0; c < last.c; ++c) {
        const float* p = top.data() + c * plane;
        float sum = 0.f;
        std::size_t best = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            sum += p[i];
            if (p[i] > p[best]) best = i;
        }
        acts.embedding[c] = sum / static_cast<float>(plane);
        acts.embedding[last.c + c] = p[best];
        acts.argmax[c] = static_cast<int>(best);
    }
}

void ConvBackbone::backward(const BackboneActivations& acts, std::span<const float> grad_embedding,
                            const std::vector<std::vector<float>>& grad_blocks, int first_trainable) {
    const int nb = num_blocks();
    first_trainable = std::clamp(first_trainable, 0, nb);
    if (first_trainable >= nb) return;

    const Shape3 last = shapes_.back();
    const std::size_t plane = last.plane();
    std::vector<float> grad(last.size(), 0.f);
    if (!grad_embedding.empty()) {
        for (int c = 0; c < last.c; ++c) {
            const float ga = grad_embedding[c] / static_cast<float>(plane);
            float* g = grad.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) g[i] = ga;
            g[acts.argmax[c]] += grad_embedding[last.c + c];
        }
    }
    std::vector<float> grad_below;
    for (int b = nb - 1; b >= first_trainable; --b) {
        if (b < static_cast<int>(grad_blocks.size()) && !grad_blocks[b].empty()) {
            const auto& extra = grad_blocks[b];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += extra[i];
        }
        const auto& out = acts.outputs[b];
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (out[i] <= 0.f) grad[i] = 0.f;
        const float* in = b == 0 ? acts.input.data() : acts.outputs[b - 1].data();
        const bool need_input_grad = b > first_trainable;
        if (need_input_grad) grad_below.resize(shapes_[b].size());
        blocks_[b].backward(in, shapes_[b], grad.data(), need_input_grad ? grad_below.data() : nullptr);
        if (need_input_grad) grad.swap(grad_below);
    }
}

std::vector<ParamRef> ConvBackbone::params(int first_trainable) {
    std::vector<ParamRef> p;
    for (int b = std::max(0, first_trainable); b < num_blocks(); ++b)
        blocks_[b].append_params(p, "backbone.block" + std::to_string(b));
    return p;
}

}  // namespace convad::nn
