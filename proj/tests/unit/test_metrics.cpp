#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <vector>

#include "convad/core/random.hpp"
#include "convad/metrics/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace convad;
using namespace convad::metrics;


TEST_CASE("roc_auc spec example and errors") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<std::uint8_t> y{0, 0, 1, 1};
    CHECK(roc_auc(s, y) == 0.75);
    const std::vector<std::uint8_t> one_class{1, 1, 1, 1};
    CHECK_THROWS_AS(roc_auc(s, one_class), std::invalid_argument);
    const std::vector<double> tied{0.5, 0.5};
    const std::vector<std::uint8_t> y2{0, 1};
    CHECK(roc_auc(tied, y2) == 0.5);
}

TEST_CASE("roc_auc matches the pairwise oracle on random instances") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const int n = uniform_int(rng, 2, 200);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = std::round(uniform(rng, 0, 1) * 20) / 20;  // many ties
            y[i] = uniform(rng, 0, 1) < 0.4;
        }
        y[0] = 0;
        y[1] = 1;
        CHECK(roc_auc(s, y) == doctest::Approx(oracles::auc(s, y)).epsilon(1e-12));

        std::vector<double> neg(n), warped(n);
        std::vector<std::uint8_t> flipped(n);
        for (int i = 0; i < n; ++i) {
            neg[i] = -s[i];
            flipped[i] = 1 - y[i];
            warped[i] = std::exp(3 * s[i]);
        }
        CHECK(roc_auc(neg, flipped) == doctest::Approx(roc_auc(s, y)).epsilon(1e-12));
        CHECK(roc_auc(neg, y) == doctest::Approx(1 - roc_auc(s, y)).epsilon(1e-12));
        CHECK(roc_auc(warped, y) == doctest::Approx(roc_auc(s, y)).epsilon(1e-12));
    }
}

TEST_CASE("best_f1 spec example") {
    const std::vector<double> s{0.9, 0.8, 0.7, 0.1};
    const std::vector<std::uint8_t> y{1, 1, 0, 0};
    const auto r = best_f1(s, y);
    CHECK(r.f1 == 1.0);
    CHECK(r.threshold == 0.8);
}

TEST_CASE("best_f1 matches exhaustive enumeration") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const int n = uniform_int(rng, 2, 200);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = std::round(uniform(rng, 0, 1) * 30) / 30;
            y[i] = uniform(rng, 0, 1) < 0.3;
        }
        y[0] = 1;
        const auto got = best_f1(s, y);
        const auto want = oracles::best_f1(s, y);
        CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
        CHECK(got.threshold == want.threshold);
    }
}

TEST_CASE("label_components uses 8-connectivity") {
    // Diagonal pixels join; separated block stays apart.
    const std::vector<std::uint8_t> mask{1, 0, 0, 0,
                                         0, 1, 0, 1,
                                         0, 0, 0, 1,
                                         0, 0, 0, 0};
    std::vector<int> labels;
    CHECK(label_components(4, 4, mask, labels) == 2);
    CHECK(labels[0] == labels[5]);
    CHECK(labels[7] == labels[11]);
    CHECK(labels[0] != labels[7]);
    CHECK(labels[1] == 0);
}

TEST_CASE("pro on simple maps") {
    oracles::OwnedMap perfect{8, 8, std::vector<float>(64, 0.f), std::vector<std::uint8_t>(64, 0)};
    for (int r = 2; r < 4; ++r)
        for (int c = 2; c < 5; ++c) {
            perfect.m[r * 8 + c] = 1;
            perfect.v[r * 8 + c] = 1.f;
        }
    const std::vector<MapView> pv{perfect.view()};
    CHECK(pro(pv) == doctest::Approx(1.0).epsilon(1e-12));

    oracles::OwnedMap inverted = perfect;
    for (int p = 0; p < 64; ++p) inverted.v[p] = 1.f - perfect.v[p];
    const std::vector<MapView> iv{inverted.view()};
    CHECK(pro(iv) == 0.0);

    // A constant map reaches FPR 1 in one step; the chord from (0,0) gives limit / 2.
    oracles::OwnedMap flat = perfect;
    std::fill(flat.v.begin(), flat.v.end(), 0.5f);
    const std::vector<MapView> fv{flat.view()};
    CHECK(pro(fv) == doctest::Approx(0.15).epsilon(1e-12));

    oracles::OwnedMap no_region = perfect;
    std::fill(no_region.m.begin(), no_region.m.end(), 0);
    const std::vector<MapView> nv{no_region.view()};
    CHECK_THROWS_AS(pro(nv), std::invalid_argument);
    CHECK_THROWS_AS(pro(pv, 0.0), std::invalid_argument);
}

TEST_CASE("pro matches a brute-force oracle on random 8x8 maps") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<oracles::OwnedMap> maps{oracles::random_map(rng)};
        if (t % 2) maps.push_back(oracles::random_map(rng));
        std::vector<MapView> views;
        for (const auto& m : maps) views.push_back(m.view());
        for (double limit : {0.3, 0.05, 1.0})
            CHECK(std::abs(pro(views, limit) - oracles::pro(maps, limit)) < 1e-9);
    }
}
