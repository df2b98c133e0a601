#include <future>
#include <numeric>
#include <thread>

#include "convad/intervene/intervene.hpp"
#include "convad/server/http_server.hpp"
#include "convad/server/service.hpp"
#include "doctest.h"
#include "httplib.h"
#include "tiny_models.hpp"

using namespace convad;
using namespace convad::server;
using nlohmann::json;

namespace {

Dataset tiny_dataset() {
    const auto& ds = testing::small_dataset();
    return {ds.vocabulary, ds.samples};
}

const InferenceService& service(bool reveal, bool visual) {
    static std::map<std::pair<bool, bool>, std::unique_ptr<InferenceService>> cache;
    auto& slot = cache[{reveal, visual}];
    if (!slot) {
        const auto& m = testing::tiny_model(cbm::Paradigm::kJoint);
        std::optional<vision::StudentTeacher> st;
        if (visual) st = vision::StudentTeacher(m.g.backbone, 1);
        slot = std::make_unique<InferenceService>(m, st, tiny_dataset(), reveal, 16);
    }
    return *slot;
}

std::string first_test_id() {
    for (const auto& s : testing::small_dataset().samples)
        if (s.subset == Subset::kTest && s.label == 1) return s.id();
    return {};
}

json all_to_truth(const Sample& s) {
    json c = json::array();
    for (std::size_t j = 0; j < s.concepts.size(); ++j) c.push_back({{"index", j}, {"value", s.concepts[j]}});
    return {{"corrections", c}};
}

}  // namespace

TEST_CASE("sample listing honours split, paging and the reveal flag") {
    const auto& svc = service(false, false);
    int n_test = 0, n_train = 0;
    for (const auto& s : testing::small_dataset().samples) (s.subset == Subset::kTest ? n_test : n_train)++;
    const auto test = svc.list_samples("test", 0, 500);
    CHECK(test["total"] == n_test);
    CHECK(test["items"].size() == static_cast<std::size_t>(n_test));
    for (const auto& it : test["items"]) {
        CHECK_FALSE(it.contains("label"));
        CHECK_FALSE(it.contains("defect_type"));
        CHECK(it["thumbnail_url"].get<std::string>().find("/image.png") != std::string::npos);
    }
    CHECK(svc.list_samples("train", 0, 500)["total"] == n_train);
    const auto page = svc.list_samples("test", 3, 2);
    CHECK(page["items"].size() == 2);
    CHECK(page["items"][0]["id"] == test["items"][3]["id"]);
    CHECK_THROWS_AS(svc.list_samples("holdout", 0, 10), NotFound);
    CHECK_THROWS_AS(svc.list_samples("test", -1, 10), BadRequest);

    const auto revealed = service(true, false).list_samples("test", 0, 500);
    bool saw_defect = false;
    for (const auto& it : revealed["items"]) {
        CHECK(it.contains("label"));
        saw_defect |= it.contains("defect_type");
    }
    CHECK(saw_defect);
}

TEST_CASE("prediction bodies") {
    const auto& svc = service(false, false);
    const auto id = first_test_id();
    const auto a = svc.prediction(id), b = svc.prediction(id);
    CHECK(a == b);
    const int k = svc.model().k();
    REQUIRE(a["concepts"].size() == static_cast<std::size_t>(k));
    std::vector<int> ranks;
    for (std::size_t r = 0; r < a["concepts"].size(); ++r) {
        CHECK(a["concepts"][r]["ucp_rank"] == static_cast<int>(r));
        ranks.push_back(a["concepts"][r]["index"]);
    }
    std::sort(ranks.begin(), ranks.end());
    for (int j = 0; j < k; ++j) CHECK(ranks[j] == j);
    CHECK_FALSE(a.contains("anomaly_map_url"));
    CHECK_FALSE(a.contains("truth"));
    CHECK_THROWS_AS(svc.prediction("nope"), NotFound);
    CHECK_THROWS_AS(svc.anomaly_map_png(id), NotFound);

    const auto& vis = service(true, true);
    const auto v = vis.prediction(id);
    CHECK(v.contains("anomaly_map_url"));
    CHECK(v.contains("image_score"));
    CHECK(v.contains("truth"));
    const auto png = vis.anomaly_map_png(id);
    CHECK(png.substr(1, 3) == "PNG");
    const auto raw = vis.anomaly_map_raw(id);
    CHECK(raw["values"].size() == static_cast<std::size_t>(raw["height"].get<int>() * raw["width"].get<int>()));
}

TEST_CASE("intervention requests") {
    const auto& svc = service(true, false);
    const auto id = first_test_id();
    const auto ds = tiny_dataset();
    const auto& s = *ds.find(id);
    const auto base = svc.prediction(id);

    const auto same = svc.intervene(id, {{"corrections", json::array()}});
    CHECK(same["label_prob"] == base["label_prob"]);
    CHECK(same["original_label_prob"] == base["label_prob"]);

    const auto full = svc.intervene(id, all_to_truth(s));
    std::vector<int> all(svc.model().k());
    std::iota(all.begin(), all.end(), 0);
    const auto want = intervene::apply_interventions(svc.model(), svc.model().predict(s.image),
                                                     intervene::ground_truth_corrections(all, s.concepts));
    CHECK(full["label_prob"].get<double>() == want.label_prob);
    CHECK(full["concepts"][0]["index"] == base["concepts"][0]["index"]);
    CHECK(svc.prediction(id) == base);

    const int k = svc.model().k();
    CHECK_THROWS_AS(svc.intervene(id, {{"corrections", {{{"index", k}, {"value", 1}}}}}), BadRequest);
    CHECK_THROWS_AS(svc.intervene(id, {{"corrections", {{{"index", 0}, {"value", 1}}, {{"index", 0}, {"value", 0}}}}}),
                    BadRequest);
    CHECK_THROWS_AS(svc.intervene(id, {{"corrections", "x"}}), BadRequest);
    CHECK_THROWS_AS(svc.intervene(id, json::object()), BadRequest);
    CHECK_THROWS_AS(svc.intervene("nope", all_to_truth(s)), NotFound);
}

TEST_CASE("vocabulary mismatch is rejected at startup") {
    auto ds = tiny_dataset();
    auto concepts = ds.vocabulary.concepts();
    std::swap(concepts[0], concepts[1]);
    ds.vocabulary = ConceptVocabulary(concepts);
    CHECK_THROWS_AS(InferenceService(testing::tiny_model(cbm::Paradigm::kJoint), std::nullopt, ds, false),
                    std::invalid_argument);
}

TEST_CASE("concurrent interventions match serial execution") {
    const auto& svc = service(true, false);
    std::vector<std::string> ids;
    for (const auto& s : testing::small_dataset().samples)
        if (s.subset == Subset::kTest && ids.size() < 6) ids.push_back(s.id());
    std::vector<json> bodies;
    for (int j = 0; j < 4; ++j) bodies.push_back({{"corrections", {{{"index", j}, {"value", j % 2}}}}});
    std::map<std::pair<std::string, int>, json> serial;
    for (const auto& id : ids)
        for (int b = 0; b < 4; ++b) serial[{id, b}] = svc.intervene(id, bodies[b]);

    std::vector<std::future<bool>> jobs;
    for (int t = 0; t < 4; ++t)
        jobs.push_back(std::async(std::launch::async, [&, t] {
            bool ok = true;
            for (int r = 0; r < 3; ++r)
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const int b = static_cast<int>((i + t + r) % 4);
                    ok &= svc.intervene(ids[i], bodies[b]) == serial[{ids[i], b}];
                }
            return ok;
        }));
    for (auto& j : jobs) CHECK(j.get());
}

TEST_CASE("REST endpoints over HTTP") {
    const auto& svc = service(false, true);
    SessionConfig cfg;
    cfg.host = "127.0.0.1";
    ApiServer api(svc, cfg);
    const int port = api.bind_to_any_port();
    REQUIRE(port > 0);
    std::thread loop([&] { api.listen_after_bind(); });
    api.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);
    const auto id = first_test_id();

    auto health = cli.Get("/api/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

    auto meta = cli.Get("/api/meta");
    REQUIRE(meta);
    const auto m = json::parse(meta->body);
    CHECK(m["k"] == svc.model().k());
    CHECK(m["reveal"] == false);
    CHECK(m["vocabulary"].size() == static_cast<std::size_t>(svc.model().k()));

    auto list = cli.Get("/api/samples?split=test&limit=5");
    REQUIRE(list);
    CHECK(list->status == 200);
    CHECK(json::parse(list->body)["items"].size() == 5);
    CHECK(cli.Get("/api/samples?split=other")->status == 404);

    auto pred = cli.Get("/api/samples/" + id + "/prediction");
    REQUIRE(pred);
    CHECK(pred->status == 200);
    CHECK(json::parse(pred->body) == svc.prediction(id));
    CHECK(cli.Get("/api/samples/missing/prediction")->status == 404);

    const json body = {{"corrections", {{{"index", 0}, {"value", 1}}}}};
    auto post = cli.Post("/api/samples/" + id + "/intervene", body.dump(), "application/json");
    REQUIRE(post);
    CHECK(post->status == 200);
    CHECK(json::parse(post->body) == svc.intervene(id, body));
    const json bad = {{"corrections", {{{"index", svc.model().k()}, {"value", 1}}}}};
    auto rejected = cli.Post("/api/samples/" + id + "/intervene", bad.dump(), "application/json");
    CHECK(rejected->status == 400);
    CHECK(json::parse(rejected->body).contains("error"));
    CHECK(cli.Post("/api/samples/" + id + "/intervene", "{not json", "application/json")->status == 400);

    auto img = cli.Get("/api/samples/" + id + "/image.png");
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(cli.Get("/api/samples/" + id + "/anomaly_map.png")->status == 200);
    CHECK(cli.Get("/api/samples/" + id + "/anomaly_map.json")->status == 200);

    auto pre = cli.Options("/api/samples/" + id + "/intervene");
    REQUIRE(pre);
    CHECK(pre->status < 300);

    api.stop();
    loop.join();
}
