#include <cmath>
#include <random>
#include <vector>

#include "convad/nn/backbone.hpp"
#include "convad/nn/kernels.hpp"
#include "doctest.h"

using namespace convad;
using namespace convad::nn;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> d(0.f, 1.f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

void check_close(const std::vector<float>& a, const std::vector<float>& b, float tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == doctest::Approx(b[i]).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("conv kernels match the reference implementation") {
    for (int stride : {1, 2})
        for (Shape3 is : {Shape3{3, 9, 7}, Shape3{4, 8, 8}, Shape3{2, 1, 5}}) {
            const int oc = 5;
            const Shape3 os = conv3x3_output_shape(is, oc, stride);
            auto in = random_vec(is.size(), 1);
            auto w = random_vec(static_cast<std::size_t>(oc) * is.c * 9, 2);
            auto b = random_vec(oc, 3);
            auto go = random_vec(os.size(), 4);

            std::vector<float> o1(os.size()), o2(os.size());
            kernels::conv3x3_forward(in.data(), is, w.data(), b.data(), oc, stride, o1.data());
            reference::conv3x3_forward(in.data(), is, w.data(), b.data(), oc, stride, o2.data());
            check_close(o1, o2, 1e-4f);

            std::vector<float> gi1(is.size(), 7.f), gi2(is.size());
            kernels::conv3x3_backward_input(go.data(), os, w.data(), is, stride, gi1.data());
            reference::conv3x3_backward_input(go.data(), os, w.data(), is, stride, gi2.data());
            check_close(gi1, gi2, 1e-4f);

            std::vector<float> gw1(w.size(), 0.5f), gw2(w.size(), 0.5f), gb1(oc, 0.f), gb2(oc, 0.f);
            kernels::conv3x3_backward_weights(in.data(), is, go.data(), os, stride, gw1.data(), gb1.data());
            reference::conv3x3_backward_weights(in.data(), is, go.data(), os, stride, gw2.data(), gb2.data());
            check_close(gw1, gw2, 1e-4f);
            check_close(gb1, gb2, 1e-4f);
        }
}

TEST_CASE("conv output shape") {
    CHECK(conv3x3_output_shape({3, 128, 128}, 8, 2) == Shape3{8, 64, 64});
    CHECK(conv3x3_output_shape({3, 7, 5}, 2, 2) == Shape3{2, 4, 3});
    CHECK(conv3x3_output_shape({3, 7, 5}, 2, 1) == Shape3{2, 7, 5});
}

TEST_CASE("normalized distance matches reference and is zero for parallel features") {
    const Shape3 s{6, 5, 4};
    auto a = random_vec(s.size(), 5);
    auto b = random_vec(s.size(), 6);
    std::vector<float> d1(s.plane()), d2(s.plane());
    kernels::normalized_sq_distance(a.data(), b.data(), s, d1.data());
    reference::normalized_sq_distance(a.data(), b.data(), s, d2.data());
    check_close(d1, d2, 1e-5f);
    for (float v : d1) CHECK((v >= 0.f && v <= 2.f + 1e-5f));

    auto scaled = a;
    for (auto& x : scaled) x *= 3.f;
    kernels::normalized_sq_distance(a.data(), scaled.data(), s, d1.data());
    for (float v : d1) CHECK(v == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
}

TEST_CASE("backbone gradient matches finite differences") {
    BackboneConfig cfg;
    cfg.channels = {3, 4, 5};
    cfg.height = cfg.width = 12;
    cfg.pyramid_blocks = {0, 1};
    ConvBackbone net(cfg, 11);
    Image img("x", 12, 12);
    Rng rng(3);
    for (auto& p : img.pixels) p = static_cast<float>(uniform(rng, 0, 1));

    // Scalar objective: dot(embedding, r) + dot(block1 output, q).
    BackboneActivations acts;
    net.forward(img, acts);
    const auto r = random_vec(acts.embedding.size(), 8);
    const auto q = random_vec(acts.outputs[1].size(), 9);
    auto objective = [&]() {
        BackboneActivations a;
        net.forward(img, a);
        double v = 0;
        for (std::size_t i = 0; i < r.size(); ++i) v += static_cast<double>(r[i]) * a.embedding[i];
        for (std::size_t i = 0; i < q.size(); ++i) v += static_cast<double>(q[i]) * a.outputs[1][i];
        return v;
    };
    auto params = net.params(0);
    zero_grad(params);
    std::vector<std::vector<float>> level_grads(net.num_blocks());
    level_grads[1] = q;
    net.backward(acts, r, level_grads, 0);

    int checked = 0;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); i += 7) {
            const float orig = p.value[i];
            const float h = 1e-3f;
            p.value[i] = orig + h;
            const double up = objective();
            p.value[i] = orig - h;
            const double down = objective();
            p.value[i] = orig;
            const double fd = (up - down) / (2 * h);
            CHECK(p.grad[i] == doctest::Approx(fd).epsilon(3e-2).scale(1.0));
            ++checked;
        }
    }
    CHECK(checked > 20);
}

TEST_CASE("backbone freezes blocks below the trainable tail") {
    BackboneConfig cfg;
    cfg.channels = {3, 4, 5};
    cfg.height = cfg.width = 12;
    cfg.pyramid_blocks = {1};
    ConvBackbone net(cfg, 1);
    Image img("x", 12, 12, {0.3f, 0.6f, 0.9f});
    BackboneActivations acts;
    net.forward(img, acts);
    auto all = net.params(0);
    zero_grad(all);
    std::vector<float> g(acts.embedding.size(), 1.f);
    net.backward(acts, g, {}, 2);
    for (auto& p : all) {
        bool any = false;
        for (float v : p.grad) any |= v != 0.f;
        if (p.name.rfind("backbone.block2", 0) != 0) CHECK_FALSE(any);
    }
    CHECK(net.params(2).size() == 2);
}
