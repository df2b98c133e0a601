#include <algorithm>
#include <map>

#include "contracts.hpp"
#include "convad/scenarios/augment.hpp"
#include "convad/scenarios/split.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace convad;
using namespace convad::scenarios;

namespace {

std::map<std::string, int> anomalies_by_type(const std::vector<Sample>& v) {
    std::map<std::string, int> m;
    for (const auto& s : v)
        if (s.label == 1) ++m[*s.defect_type];
    return m;
}

std::vector<Sample> with_pool_anomalies(int per_type) {
    auto cfg = synth::GeneratorConfig::shapes_ad(1);
    cfg.height = cfg.width = 48;
    cfg.n_normal = 20;
    cfg.n_anomalous_per_defect = per_type;
    return synth::build_dataset(cfg).samples;
}

}  // namespace

TEST_CASE("every scenario and seed respects its constraints") {
    const auto& ds = testing::small_dataset();
    int train_normals = 0;
    for (const auto& s : ds.samples) train_normals += s.label == 0 && s.subset == Subset::kTrain;
    for (const auto& kind : testing::all_scenarios())
        for (std::uint64_t seed : {0, 1, 2}) {
            CAPTURE(to_string(kind));
            const auto split = build_scenario_split(ds.samples, ds.synthetic, kind, seed);
            CHECK(check_split(split).empty());
            CHECK(testing::leaked_ids(split).empty());
            for (const auto& s : split.test) CHECK(s.origin == Origin::kReal);

            int normals = 0;
            for (const auto* part : {&split.train, &split.val})
                for (const auto& s : *part) normals += s.label == 0;
            CHECK(normals == train_normals);

            std::vector<Sample> train_all = split.train;
            train_all.insert(train_all.end(), split.val.begin(), split.val.end());
            const auto real_train = [&] {
                std::map<std::string, int> m;
                for (const auto& s : train_all)
                    if (s.label == 1 && s.origin == Origin::kReal) ++m[*s.defect_type];
                return m;
            }();
            int synthetic = 0;
            for (const auto& s : train_all) synthetic += s.origin == Origin::kSynthetic;
            CHECK(synthetic == (kind.uses_synthetic() ? static_cast<int>(ds.synthetic.size()) : 0));
            if (kind.is_weakly()) {
                CHECK(real_train.size() == 4);
                for (const auto& [t, n] : real_train) CHECK(n == kind.shots);
            } else if (kind.base == ScenarioKind::Base::kSag) {
                CHECK(real_train.empty());
            }

            const auto again = build_scenario_split(ds.samples, ds.synthetic, kind, seed);
            REQUIRE(again.train.size() == split.train.size());
            for (std::size_t i = 0; i < split.train.size(); ++i) CHECK(again.train[i].id() == split.train[i].id());
        }
}

TEST_CASE("fully split is 80/20 and stratified") {
    const auto pool = with_pool_anomalies(25);
    const auto split = build_scenario_split(pool, {}, ScenarioKind::fully(), 0);
    std::vector<Sample> train_all = split.train;
    train_all.insert(train_all.end(), split.val.begin(), split.val.end());
    const auto tr = anomalies_by_type(train_all), te = anomalies_by_type(split.test);
    int total_train = 0, total_test = 0;
    for (const auto& [t, n] : tr) {
        total_train += n;
        CHECK(std::abs(n - 20) <= 1);
    }
    for (const auto& [t, n] : te) total_test += n;
    CHECK(total_train == 80);
    CHECK(total_test == 20);
}

TEST_CASE("weakly split needs enough anomalies per type") {
    const auto pool = with_pool_anomalies(2);
    CHECK_NOTHROW(build_scenario_split(pool, {}, ScenarioKind::weakly(1), 0));
    try {
        (void)build_scenario_split(pool, {}, ScenarioKind::weakly(3), 0);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("crack") != std::string::npos);
    }
    const auto& ds = testing::small_dataset();
    CHECK_THROWS(build_scenario_split(ds.samples, {}, ScenarioKind::sag(), 0));
}

TEST_CASE("scenario names round-trip") {
    for (const auto& kind : testing::all_scenarios()) CHECK(scenario_from_string(to_string(kind)) == kind);
    CHECK(to_string(ScenarioKind::weakly_sag(1)) == "weakly1+sag");
    CHECK_THROWS(scenario_from_string("weakly0"));
}

TEST_CASE("augmentation preserves supervision and moves the mask with the pixels") {
    const auto& ds = testing::small_dataset();
    const Sample* anomaly = nullptr;
    for (const auto& s : ds.samples)
        if (s.label == 1) {
            anomaly = &s;
            break;
        }
    REQUIRE(anomaly);

    Rng rng(5);
    const auto id = augment(*anomaly, AugmentationPolicy::none(), rng);
    CHECK(testing::same_pixels(id.image, anomaly->image));
    CHECK(id.mask->data == anomaly->mask->data);

    AugmentationPolicy flip = AugmentationPolicy::none();
    flip.hflip_p = 1.0;
    const auto f = augment(*anomaly, flip, rng);
    const int h = anomaly->image.height, w = anomaly->image.width;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            CHECK(f.mask->data[y * w + x] == anomaly->mask->data[y * w + (w - 1 - x)]);
            CHECK(f.image.pixels[(y * w + x) * 3] == anomaly->image.pixels[(y * w + (w - 1 - x)) * 3]);
        }

    const AugmentationPolicy full;
    for (int t = 0; t < 50; ++t) {
        const auto& s = ds.samples[static_cast<std::size_t>(t) % ds.samples.size()];
        const auto a = augment(s, full, rng);
        CHECK(a.concepts == s.concepts);
        CHECK(a.label == s.label);
        CHECK(a.defect_type == s.defect_type);
        CHECK(a.mask.has_value() == s.mask.has_value());
        for (float v : a.image.pixels) CHECK((v >= 0.f && v <= 1.f));
    }
    CHECK(AugmentationPolicy::none().is_identity());
    CHECK_FALSE(full.is_identity());
}
