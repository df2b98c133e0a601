#include <cmath>
#include <filesystem>
#include <fstream>

#include "convad/cbm/export.hpp"
#include "convad/cbm/losses.hpp"
#include "convad/cbm/model.hpp"
#include "convad/nn/fit.hpp"
#include "doctest.h"
#include "tiny_models.hpp"

using namespace convad;
using namespace convad::cbm;

TEST_CASE("sigmoid examples") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(std::abs(sigmoid(1.0) - 0.7310586) < 1e-7);
    CHECK(sigmoid(50.0) == 1.0);  // 1 - 1e-20 is not representable in double
    CHECK(sigmoid(-50.0) > 0.0);
    CHECK(sigmoid(-50.0) < 1e-21);
    double prev = 0;
    for (double x = -30; x <= 30; x += 0.5) {
        CHECK(sigmoid(x) > prev);
        prev = sigmoid(x);
    }
}

TEST_CASE("sample validation reports violations") {
    const auto& vocab = testing::small_dataset().vocabulary;
    Sample s = testing::small_dataset().samples.front();
    CHECK(validate_sample(s, vocab).empty());
    Sample missing = s;
    missing.label = 1;
    missing.mask = Mask(s.image.height, s.image.width);
    missing.mask->data[0] = 1;
    const auto v1 = validate_sample(missing, vocab);
    CHECK(std::find(v1.begin(), v1.end(), "defect_type absent") != v1.end());
    Sample shortv = s;
    shortv.concepts.pop_back();
    const auto v2 = validate_sample(shortv, vocab);
    CHECK(std::find(v2.begin(), v2.end(), "length mismatch") != v2.end());
}

TEST_CASE("alpha balances the class weights of an uninformed predictor") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::uint8_t> z(uniform_int(rng, 2, 60));
        for (auto& b : z) b = uniform(rng, 0, 1) < 0.3;
        z[0] = 1;
        z[1] = 0;
        const double a = imbalance_alpha(z);
        double pos = 0, neg = 0;
        for (auto b : z) (b ? pos : neg) += b ? weighted_bce(1.0, 0.5, a) : weighted_bce(0.0, 0.5, a);
        CHECK(pos == doctest::Approx(neg).epsilon(1e-12));
    }
}

TEST_CASE("fit: early stopping, plateau decay, warmup and best-weight restore") {
    std::vector<float> w{0.f}, g{0.f};
    nn::ParamRef p{"w", w, g};
    const std::vector<double> losses{5, 4, 3, 3.5, 3.6, 3.7, 3.8, 3.9, 4, 4.1, 4.2, 4.3, 4.4, 4.5, 4.6, 4.7, 4.8};
    auto run = [&](nn::FitSchedule s, std::vector<double>* lrs = nullptr) {
        nn::Adam opt({p}, 1.0);
        int epoch_seen = 0;
        auto h = nn::fit(
            opt, s,
            [&](int e) {
                epoch_seen = e;
                w[0] = static_cast<float>(e);
                if (lrs) lrs->push_back(opt.lr());
                return 0.0;
            },
            [&] { return losses[std::min<std::size_t>(epoch_seen, losses.size() - 1)]; });
        return h;
    };
    nn::FitSchedule s;
    s.early_stop_patience = 10;
    s.lr_plateau_patience = 5;
    std::vector<double> lrs;
    const auto h = run(s, &lrs);
    CHECK(h.best_epoch == 2);
    CHECK(h.early_stopped);
    CHECK(h.val_loss.size() == 13);  // best at 2, then 10 epochs without improvement
    CHECK(w[0] == 2.f);              // restored
    CHECK(lrs[7] == 1.0);
    CHECK(lrs[8] == doctest::Approx(0.1));  // decayed after the 5th stale epoch
    CHECK(lrs[12] == doctest::Approx(0.1));

    nn::FitSchedule warm = s;
    warm.warmup_epochs = 6;
    const auto hw = run(warm);
    CHECK(hw.best_epoch == 2);
    CHECK(hw.val_loss.size() == 16);  // counting starts at epoch 6

    nn::FitSchedule capped = s;
    capped.max_epochs = 4;
    const auto hc = run(capped);
    CHECK_FALSE(hc.early_stopped);
    CHECK(hc.val_loss.size() == 4);
}

TEST_CASE("percentile interpolates linearly") {
    CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3.0);
    CHECK(percentile({5, 1, 4, 2, 3}, 0) == 1.0);
    CHECK(percentile({1, 2, 3, 4, 5}, 100) == 5.0);
    CHECK(percentile({0, 10}, 5) == doctest::Approx(0.5));
    CHECK(percentile({0, 10}, 95) == doctest::Approx(9.5));
}

TEST_CASE("prediction contracts") {
    for (auto paradigm : {Paradigm::kJoint, Paradigm::kSequential, Paradigm::kIndependent}) {
        const auto& m = testing::tiny_model(paradigm);
        CHECK(m.percentiles.size() == m.vocabulary.size());
        for (const auto& pc : m.percentiles) CHECK(pc.p5 <= pc.p95);
        for (const auto& s : testing::tiny_split().test) {
            const auto a = m.predict(s.image), b = m.predict(s.image);
            CHECK(a.concept_logits == b.concept_logits);
            CHECK(a.label_prob == b.label_prob);
            CHECK((a.label_prob >= 0 && a.label_prob <= 1));
            for (double e : a.concept_entropies) CHECK(e >= 0);
            if (paradigm == Paradigm::kIndependent) {
                std::vector<double> bits(a.concept_probs.size());
                for (std::size_t j = 0; j < bits.size(); ++j) bits[j] = a.concept_probs[j] > 0.5 ? 1.0 : 0.0;
                CHECK(a.bottleneck == bits);
                CHECK(a.label_prob == m.label_prob(bits));
            } else {
                CHECK(a.bottleneck == a.concept_logits);
            }
        }
        Image wrong("x", 32, 32);
        CHECK_THROWS(m.predict(wrong));
    }
}

TEST_CASE("checkpoint round-trip keeps weights, vocabulary, percentiles, config and metadata") {
    auto m = testing::tiny_model(Paradigm::kSequential);
    m.metadata = {{"scenario", "fully"}, {"seed", 0}};
    const auto dir = std::filesystem::path(CONVAD_TEST_TMP);
    std::filesystem::create_directories(dir);
    const auto path = dir / "roundtrip.ckpt";
    m.save(path);
    const auto r = TrainedCBM::load(path);
    CHECK(r.vocabulary == m.vocabulary);
    CHECK(r.paradigm == m.paradigm);
    CHECK(r.metadata == m.metadata);
    CHECK(r.config.warmup_epochs == m.config.warmup_epochs);
    CHECK(r.config.backbone == m.config.backbone);
    REQUIRE(r.percentiles.size() == m.percentiles.size());
    for (std::size_t j = 0; j < m.percentiles.size(); ++j) {
        CHECK(r.percentiles[j].p5 == m.percentiles[j].p5);
        CHECK(r.percentiles[j].p95 == m.percentiles[j].p95);
    }
    for (const auto& s : testing::tiny_split().test) {
        CHECK(r.predict(s.image).concept_logits == m.predict(s.image).concept_logits);
        CHECK(r.predict(s.image).label_prob == m.predict(s.image).label_prob);
    }
    {
        std::ofstream bad(dir / "garbage.ckpt");
        bad << "not an archive";
    }
    CHECK_THROWS(TrainedCBM::load(dir / "garbage.ckpt"));
}

TEST_CASE("training is deterministic per seed") {
    const auto cfg = testing::tiny_config(Paradigm::kJoint);
    const auto a = train(testing::tiny_split(), testing::small_dataset().vocabulary, cfg);
    const auto b = train(testing::tiny_split(), testing::small_dataset().vocabulary, cfg);
    CHECK(a.concept_history.val_loss == b.concept_history.val_loss);
}

TEST_CASE("with lambda 0 joint training ignores the concept labels") {
    auto cfg = testing::tiny_config(Paradigm::kJoint);
    cfg.lambda_tradeoff = 0.0;
    cfg.max_epochs = 2;
    const auto& vocab = testing::small_dataset().vocabulary;
    ScenarioSplit scrambled = testing::tiny_split();
    Rng rng(1);
    for (auto* part : {&scrambled.train, &scrambled.val})
        for (auto& s : *part)
            for (auto& c : s.concepts) c = uniform(rng, 0, 1) < 0.5;
    const auto a = train(testing::tiny_split(), vocab, cfg);
    const auto b = train(scrambled, vocab, cfg);
    CHECK(a.concept_history.val_loss == b.concept_history.val_loss);
    const auto& s = testing::tiny_split().test.front();
    CHECK(a.model.predict(s.image).concept_logits == b.model.predict(s.image).concept_logits);

    cfg.lambda_tradeoff = 1.0;
    const auto c = train(scrambled, vocab, cfg);
    const auto d = train(testing::tiny_split(), vocab, cfg);
    CHECK(c.model.predict(s.image).concept_logits != d.model.predict(s.image).concept_logits);
}

TEST_CASE("concept-logit export and projection") {
    const auto& m = testing::tiny_model(Paradigm::kJoint);
    std::vector<Sample> samples = testing::tiny_split().test;
    samples.push_back(samples.front());
    const auto table = export_concept_logits(m, samples);
    REQUIRE(table.rows.size() == samples.size());
    for (const auto& r : table.rows) CHECK(r.logits.size() == m.vocabulary.size());
    CHECK(table.rows.front().logits == table.rows.back().logits);
    REQUIRE(table.projection.has_value());
    const auto& pr = *table.projection;
    CHECK(pr.points.size() == samples.size());
    CHECK(pr.explained_variance[0] >= pr.explained_variance[1]);
    CHECK(pr.points.front() == pr.points.back());
    for (const auto& comp : pr.components) {
        std::size_t arg = 0;
        for (std::size_t j = 0; j < comp.size(); ++j)
            if (std::abs(comp[j]) > std::abs(comp[arg])) arg = j;
        CHECK(comp[arg] > 0);
    }
    const std::vector<Sample> two(samples.begin(), samples.begin() + 2);
    CHECK_FALSE(export_concept_logits(m, two).projection.has_value());
    CHECK(table.to_json()["rows"].size() == samples.size());
}

TEST_CASE("pca2 recovers the dominant direction") {
    // Points along (3,4)/5 with a small orthogonal wobble.
    std::vector<std::vector<double>> x;
    for (int i = 0; i < 20; ++i) {
        const double t = i / 2 - 4.5, e = (i % 2 ? 0.1 : -0.1);
        x.push_back({3 * t / 5 - 4 * e / 5, 4 * t / 5 + 3 * e / 5});
    }
    const auto p = pca2(x);
    CHECK(std::abs(p.components[0][0] - 0.6) < 1e-9);
    CHECK(std::abs(p.components[0][1] - 0.8) < 1e-9);
    CHECK(p.explained_variance[0] > 100 * p.explained_variance[1]);
    const std::vector<std::vector<double>> tiny{{1, 2}, {3, 4}};
    CHECK_THROWS(pca2(tiny));
}
