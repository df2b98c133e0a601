#include "convad/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace convad::nn {

ParamSnapshot snapshot(const std::vector<ParamRef>& params) {
    ParamSnapshot s;
    s.reserve(params.size());
    for (const auto& p : params) s.emplace_back(p.value.begin(), p.value.end());
    return s;
}

void restore(const std::vector<ParamRef>& params, const ParamSnapshot& snap) {
    if (snap.size() != params.size()) throw std::logic_error("snapshot does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(snap[i].begin(), snap[i].end(), params[i].value.begin());
}

void zero_grad(const std::vector<ParamRef>& params) {
    for (const auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.f);
}

Conv2d::Conv2d(int in_channels, int out_channels, int stride_)
    : in_c(in_channels),
      out_c(out_channels),
      stride(stride_),
      weight(static_cast<std::size_t>(out_channels) * in_channels * 9, 0.f),
      bias(out_channels, 0.f),
      grad_weight(weight.size(), 0.f),
      grad_bias(bias.size(), 0.f) {}

void Conv2d::init_he(Rng& rng) {
    std::normal_distribution<float> dist(0.f, std::sqrt(2.f / (9.f * in_c)));
    for (auto& w : weight) w = dist(rng);
    std::fill(bias.begin(), bias.end(), 0.f);
}

void Conv2d::forward(const float* in, Shape3 in_shape, float* out) const {
    kernels::conv3x3_forward(in, in_shape, weight.data(), bias.data(), out_c, stride, out);
}

void Conv2d::backward(const float* in, Shape3 in_shape, const float* grad_out, float* grad_in) {
    const Shape3 os = output_shape(in_shape);
    kernels::conv3x3_backward_weights(in, in_shape, grad_out, os, stride, grad_weight.data(), grad_bias.data());
    if (grad_in) kernels::conv3x3_backward_input(grad_out, os, weight.data(), in_shape, stride, grad_in);
}

void Conv2d::append_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight, grad_weight});
    out.push_back({prefix + ".bias", bias, grad_bias});
}

Linear::Linear(int in_features, int out_features)
    : in_f(in_features),
      out_f(out_features),
      weight(static_cast<std::size_t>(in_features) * out_features, 0.f),
      bias(out_features, 0.f),
      grad_weight(weight.size(), 0.f),
      grad_bias(bias.size(), 0.f) {}

void Linear::init_he(Rng& rng, double gain) {
    std::normal_distribution<float> dist(0.f, static_cast<float>(std::sqrt(gain / in_f)));
    for (auto& w : weight) w = dist(rng);
    std::fill(bias.begin(), bias.end(), 0.f);
}

void Linear::forward(std::span<const float> x, std::span<float> y) const {
    for (int o = 0; o < out_f; ++o) {
        const float* row = weight.data() + static_cast<std::size_t>(o) * in_f;
        float acc = bias[o];
        for (int i = 0; i < in_f; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

void Linear::backward(std::span<const float> x, std::span<const float> grad_y, std::span<float> grad_x) {
    if (!grad_x.empty()) std::fill(grad_x.begin(), grad_x.end(), 0.f);
    for (int o = 0; o < out_f; ++o) {
        const float g = grad_y[o];
        if (g == 0.f) continue;
        grad_bias[o] += g;
        float* grow = grad_weight.data() + static_cast<std::size_t>(o) * in_f;
        const float* row = weight.data() + static_cast<std::size_t>(o) * in_f;
        for (int i = 0; i < in_f; ++i) grow[i] += g * x[i];
        if (!grad_x.empty())
            for (int i = 0; i < in_f; ++i) grad_x[i] += g * row[i];
    }
}

void Linear::append_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight, grad_weight});
    out.push_back({prefix + ".bias", bias, grad_bias});
}

Mlp::Mlp(int in_features, int hidden, std::uint64_t seed) : l1(in_features, hidden), l2(hidden, 1) {
    Rng rng(seed);
    l1.init_he(rng);
    l2.init_he(rng, 1.0);
}

float Mlp::forward(std::span<const float> x, Cache& cache) const {
    cache.input.assign(x.begin(), x.end());
    cache.hidden.resize(l1.out_f);
    l1.forward(x, cache.hidden);
    for (auto& h : cache.hidden) h = std::max(h, 0.f);
    float out = 0.f;
    l2.forward(cache.hidden, std::span<float>(&out, 1));
    return out;
}

float Mlp::forward(std::span<const float> x) const {
    Cache c;
    return forward(x, c);
}

void Mlp::backward(const Cache& cache, float grad_logit, std::span<float> grad_x) {
    std::vector<float> grad_hidden(l2.in_f);
    l2.backward(cache.hidden, std::span<const float>(&grad_logit, 1), grad_hidden);
    for (std::size_t i = 0; i < grad_hidden.size(); ++i)
        if (cache.hidden[i] <= 0.f) grad_hidden[i] = 0.f;
    l1.backward(cache.input, grad_hidden, grad_x);
}

std::vector<ParamRef> Mlp::params() {
    std::vector<ParamRef> p;
    l1.append_params(p, "f.l1");
    l2.append_params(p, "f.l2");
    return p;
}

Adam::Adam(std::vector<ParamRef> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.value.size(), 0.f);
        v_.emplace_back(p.value.size(), 0.f);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const auto step_size = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const auto b1 = static_cast<float>(b1_);
    const auto b2 = static_cast<float>(b2_);
    const auto eps = static_cast<float>(eps_ * std::sqrt(c2));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const float g = p.grad[i];
            m[i] = b1 * m[i] + (1 - b1) * g;
            v[i] = b2 * v[i] + (1 - b2) * g * g;
            p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps);
        }
    }
}

}  // namespace convad::nn
