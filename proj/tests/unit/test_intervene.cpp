#include <algorithm>
#include <cmath>
#include <numeric>

#include "convad/intervene/intervene.hpp"
#include "convad/intervene/ucp.hpp"
#include "convad/metrics/metrics.hpp"
#include "doctest.h"
#include "tiny_models.hpp"

using namespace convad;
using namespace convad::intervene;

TEST_CASE("binary entropy examples") {
    CHECK(std::abs(entropy(0.5) - std::log(2.0)) < 1e-12);
    CHECK(entropy(0.0) == 0.0);
    CHECK(entropy(1.0) == 0.0);
    CHECK(std::abs(entropy(0.9) - 0.325083) < 1e-6);
    CHECK(entropy(0.3) == doctest::Approx(entropy(0.7)));
}

TEST_CASE("ucp order examples and the |p - 0.5| identity") {
    CHECK(ucp_order(std::vector<double>{0.5, 0.99, 0.7}) == std::vector<int>{0, 2, 1});
    CHECK(ucp_order(std::vector<double>{0.2, 0.2, 0.2}) == std::vector<int>{0, 1, 2});
    CHECK(ucp_order(std::vector<double>{0.3, 0.7}) == std::vector<int>{0, 1});

    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(uniform_int(rng, 1, 15));
        for (auto& x : p) x = std::round(uniform(rng, 0, 1) * 50) / 50;
        std::vector<int> want(p.size());
        std::iota(want.begin(), want.end(), 0);
        std::stable_sort(want.begin(), want.end(), [&](int a, int b) {
            const double da = std::abs(p[a] - 0.5), db = std::abs(p[b] - 0.5);
            return da < db - 1e-12;
        });
        CHECK(ucp_order(p) == want);
    }
}

TEST_CASE("apply_interventions clamps to percentiles and validates corrections") {
    auto m = testing::tiny_model(cbm::Paradigm::kJoint);
    m.percentiles[0] = {-3.2, 4.1};
    const auto& s = testing::tiny_split().test.front();
    const Prediction pred = m.predict(s.image);
    const Prediction copy = pred;

    const std::vector<Correction> up{{0, 1}};
    const auto r = apply_interventions(m, pred, up);
    CHECK(r.concept_logits[0] == 4.1);
    CHECK(r.bottleneck[0] == 4.1);
    for (std::size_t j = 1; j < pred.concept_logits.size(); ++j) CHECK(r.concept_logits[j] == pred.concept_logits[j]);
    CHECK(r.label_prob == m.label_prob(r.bottleneck));
    const std::vector<Correction> down{{0, 0}};
    CHECK(apply_interventions(m, pred, down).concept_logits[0] == -3.2);

    const auto same = apply_interventions(m, pred, std::vector<Correction>{});
    CHECK(same.concept_logits == pred.concept_logits);
    CHECK(same.label_prob == pred.label_prob);
    CHECK(pred.concept_logits == copy.concept_logits);
    CHECK(pred.label_prob == copy.label_prob);

    const int k = m.k();
    CHECK_THROWS_AS(apply_interventions(m, pred, std::vector<Correction>{{k, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_interventions(m, pred, std::vector<Correction>{{-1, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_interventions(m, pred, std::vector<Correction>{{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_interventions(m, pred, std::vector<Correction>{{1, 1}, {1, 0}}), std::invalid_argument);
}

TEST_CASE("full ground-truth correction reaches the clamped pattern") {
    for (auto paradigm : {cbm::Paradigm::kJoint, cbm::Paradigm::kIndependent}) {
        const auto& m = testing::tiny_model(paradigm);
        for (const auto& s : testing::tiny_split().test) {
            const auto pred = m.predict(s.image);
            std::vector<int> all(m.k());
            std::iota(all.begin(), all.end(), 0);
            const auto r = apply_interventions(m, pred, ground_truth_corrections(all, s.concepts));
            std::vector<double> clamped(m.k());
            for (int j = 0; j < m.k(); ++j)
                clamped[j] = paradigm == cbm::Paradigm::kIndependent
                                 ? s.concepts[j]
                                 : (s.concepts[j] ? m.percentiles[j].p95 : m.percentiles[j].p5);
            CHECK(r.bottleneck == clamped);
            CHECK(r.label_prob == m.label_prob(clamped));
        }
    }
}

TEST_CASE("intervention curve endpoints") {
    const auto& split = testing::tiny_split();
    std::vector<std::uint8_t> labels;
    for (const auto& s : split.test) labels.push_back(static_cast<std::uint8_t>(s.label));

    const auto& joint = testing::tiny_model(cbm::Paradigm::kJoint);
    std::vector<double> plain;
    for (const auto& s : split.test) plain.push_back(joint.predict(s.image).label_prob);
    const auto curve = intervention_curve(joint, split.test, Ordering::kUcp);
    REQUIRE(curve.size() == static_cast<std::size_t>(joint.k()) + 1);
    CHECK(curve[0].budget == 0);
    CHECK(curve[0].metric == metrics::roc_auc(plain, labels));

    const auto& ind = testing::tiny_model(cbm::Paradigm::kIndependent);
    std::vector<double> truth_scores;
    for (const auto& s : split.test) {
        const std::vector<double> bits(s.concepts.begin(), s.concepts.end());
        truth_scores.push_back(ind.label_prob(bits));
    }
    const double want = metrics::roc_auc(truth_scores, labels);
    for (auto order : {Ordering::kUcp, Ordering::kRandom, Ordering::kIndex})
        CHECK(intervention_curve(ind, split.test, order).back().metric == want);

    const auto r1 = intervention_curve(joint, split.test, Ordering::kRandom, CurveMetric::kIAuc, 3);
    const auto r2 = intervention_curve(joint, split.test, Ordering::kRandom, CurveMetric::kIAuc, 3);
    for (std::size_t b = 0; b < r1.size(); ++b) CHECK(r1[b].metric == r2[b].metric);
    CHECK(curve_mean(curve, 0, 0) == curve[0].metric);
}

TEST_CASE("intervention targets follow the policy") {
    Prediction p;
    p.concept_logits = {0, 3, -1, 0.2};
    p.ucp_order = {0, 3, 2, 1};
    CHECK(intervention_targets(p, {Ordering::kUcp, 2, 0}, 0) == std::vector<int>{0, 3});
    CHECK(intervention_targets(p, {Ordering::kIndex, 3, 0}, 0) == std::vector<int>{0, 1, 2});
    auto r = intervention_targets(p, {Ordering::kRandom, 4, 9}, 5);
    std::sort(r.begin(), r.end());
    CHECK(r == std::vector<int>{0, 1, 2, 3});
    CHECK(intervention_targets(p, {Ordering::kRandom, 4, 9}, 5) == intervention_targets(p, {Ordering::kRandom, 4, 9}, 5));
    CHECK_THROWS(intervention_targets(p, {Ordering::kUcp, 5, 0}, 0));
    CHECK(ordering_from_string(to_string(Ordering::kRandom)) == Ordering::kRandom);
}
