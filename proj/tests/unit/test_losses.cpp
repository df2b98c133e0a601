#include <cmath>
#include <random>
#include <vector>

#include "convad/cbm/losses.hpp"
#include "convad/core/random.hpp"
#include "convad/core/types.hpp"
#include "doctest.h"

using namespace convad;
using namespace convad::cbm;

TEST_CASE("imbalance alpha is negatives over positives") {
    const std::vector<std::uint8_t> a{1, 0, 0, 0}, b{1, 1, 0, 0};
    CHECK(imbalance_alpha(a) == 3.0);
    CHECK(imbalance_alpha(b) == 1.0);
    std::vector<std::uint8_t> rep;
    for (int i = 0; i < 50; ++i) rep.insert(rep.end(), {1, 0});
    CHECK(imbalance_alpha(rep) == 1.0);

    const std::vector<std::uint8_t> ones(5, 1), zeros(5, 0);
    CHECK_THROWS_AS(imbalance_alpha(ones), DegenerateClass);
    CHECK_THROWS_AS(imbalance_alpha(zeros), DegenerateClass);
    CHECK(imbalance_alpha_or_one(ones) == 1.0);
    CHECK(imbalance_alpha_or_one(zeros) == 1.0);
}

TEST_CASE("weighted BCE closed-form values") {
    CHECK(weighted_bce(1.0, 1.0, 5.0) < 5 * 1.1e-7);
    CHECK(std::abs(weighted_bce(0.0, 0.5, 7.0) - std::log(2.0)) < 1e-9);
    CHECK(std::abs(weighted_bce(1.0, 0.5, 2.0) - 2.0 * std::log(2.0)) < 1e-9);
    CHECK(std::abs(weighted_bce(0.0, 0.5, 1.0) - 0.693147180559945) < 1e-9);
    CHECK(std::abs(weighted_bce(1.0, 0.5, 2.0) - 1.386294361119891) < 1e-9);

    // Clipping keeps the loss finite at the boundaries.
    CHECK(std::isfinite(weighted_bce(1.0, 0.0, 1.0)));
    CHECK(std::abs(weighted_bce(1.0, 0.0, 1.0) + std::log(kBceEps)) < 1e-9);

    // alpha multiplies positive terms only; batch form is the mean.
    const std::vector<double> z{1, 0, 1}, zh{0.8, 0.3, 0.6};
    const double expected = (3 * -std::log(0.8) - std::log(0.7) + 3 * -std::log(0.6)) / 3.0;
    CHECK(std::abs(weighted_bce(z, zh, 3.0) - expected) < 1e-12);
}

TEST_CASE("joint loss closed-form values") {
    const std::vector<double> c1{1, 1}, c3{0.1, 0.2, 0.3}, any{5.0, 9.0, 0.25};
    CHECK(std::abs(joint_loss(0.42, any, 0.0) - 0.42) < 1e-12);
    CHECK(std::abs(joint_loss(1.0, c1, 1.0) - 1.0) < 1e-12);
    CHECK(std::abs(joint_loss(0.6, c3, 2.0) - 0.257142857142857) < 1e-9);
    CHECK_THROWS(joint_loss(0.6, c3, -1.0));
    CHECK_THROWS(joint_loss(0.6, std::vector<double>{}, 1.0));
}

TEST_CASE("weighted BCE logit gradient matches central differences") {
    Rng rng(7);
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
        const double z = uniform(rng, 0, 1) < 0.5 ? 0.0 : 1.0;
        const double logit = uniform(rng, -6, 6);
        const double alpha = uniform(rng, 0.1, 20);
        const double h = 1e-5;
        auto f = [&](double x) { return weighted_bce(z, sigmoid(x), alpha); };
        const double fd = (f(logit + h) - f(logit - h)) / (2 * h);
        const double an = weighted_bce_grad_logit(z, logit, alpha);
        CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("joint loss gradient through logits matches central differences") {
    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        const int k = uniform_int(rng, 1, 6);
        const double lambda = uniform(rng, 0, 3);
        std::vector<double> logits(k), z(k), alphas(k);
        for (int j = 0; j < k; ++j) {
            logits[j] = uniform(rng, -5, 5);
            z[j] = uniform(rng, 0, 1) < 0.4;
            alphas[j] = uniform(rng, 0.2, 10);
        }
        const double y_logit = uniform(rng, -5, 5), y = uniform(rng, 0, 1) < 0.5, alpha_y = uniform(rng, 0.2, 10);
        auto total = [&](const std::vector<double>& l, double yl) {
            std::vector<double> lc(k);
            for (int j = 0; j < k; ++j) lc[j] = weighted_bce(z[j], sigmoid(l[j]), alphas[j]);
            return joint_loss(weighted_bce(y, sigmoid(yl), alpha_y), lc, lambda);
        };
        const double norm = 1.0 + lambda * k;
        const double h = 1e-5;
        for (int j = 0; j < k; ++j) {
            auto up = logits, dn = logits;
            up[j] += h;
            dn[j] -= h;
            const double fd = (total(up, y_logit) - total(dn, y_logit)) / (2 * h);
            const double an = lambda * weighted_bce_grad_logit(z[j], logits[j], alphas[j]) / norm;
            CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
        const double fd_y = (total(logits, y_logit + h) - total(logits, y_logit - h)) / (2 * h);
        CHECK(std::abs(weighted_bce_grad_logit(y, y_logit, alpha_y) / norm - fd_y) <= 1e-4 * std::max(1.0, std::abs(fd_y)));
    }
}
