#pragma once

#include <span>
#include <string>
#include <vector>

#include "convad/core/random.hpp"
#include "convad/nn/kernels.hpp"

namespace convad::nn {

struct ParamRef {
    std::string name;
    std::span<float> value;
    std::span<float> grad;
};

using ParamSnapshot = std::vector<std::vector<float>>;
ParamSnapshot snapshot(const std::vector<ParamRef>& params);
void restore(const std::vector<ParamRef>& params, const ParamSnapshot& snap);
void zero_grad(const std::vector<ParamRef>& params);

/// 3x3 convolution, padding 1, followed by nothing; activations live in the caller.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int stride);

    void init_he(Rng& rng);
    [[nodiscard]] Shape3 output_shape(Shape3 in) const { return conv3x3_output_shape(in, out_c, stride); }
    void forward(const float* in, Shape3 in_shape, float* out) const;
    /// Accumulates parameter gradients; writes grad_in when non-null.
    void backward(const float* in, Shape3 in_shape, const float* grad_out, float* grad_in);
    void append_params(std::vector<ParamRef>& out, const std::string& prefix);

    int in_c = 0;
    int out_c = 0;
    int stride = 1;
    std::vector<float> weight, bias, grad_weight, grad_bias;
};

/// y = W x + b with W of shape [out][in].
class Linear {
public:
    Linear() = default;
    Linear(int in_features, int out_features);

    void init_he(Rng& rng, double gain = 2.0);
    void forward(std::span<const float> x, std::span<float> y) const;
    void backward(std::span<const float> x, std::span<const float> grad_y, std::span<float> grad_x);
    void append_params(std::vector<ParamRef>& out, const std::string& prefix);

    int in_f = 0;
    int out_f = 0;
    std::vector<float> weight, bias, grad_weight, grad_bias;
};

/// Feed-forward net in -> hidden (ReLU) -> 1 logit.
class Mlp {
public:
    struct Cache {
        std::vector<float> input, hidden;
    };

    Mlp() = default;
    Mlp(int in_features, int hidden, std::uint64_t seed);

    float forward(std::span<const float> x, Cache& cache) const;
    [[nodiscard]] float forward(std::span<const float> x) const;
    /// grad_x may be empty when the input gradient is not needed.
    void backward(const Cache& cache, float grad_logit, std::span<float> grad_x);
    std::vector<ParamRef> params();
    [[nodiscard]] int in_features() const { return l1.in_f; }

    Linear l1, l2;
};

class Adam {
public:
    explicit Adam(std::vector<ParamRef> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step();
    void set_lr(double lr) { lr_ = lr; }
    [[nodiscard]] double lr() const { return lr_; }
    [[nodiscard]] const std::vector<ParamRef>& params() const { return params_; }

private:
    std::vector<ParamRef> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
};

}  // namespace convad::nn
