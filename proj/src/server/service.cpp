#include "convad/server/service.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "convad/core/png_io.hpp"
#include "convad/intervene/intervene.hpp"

namespace convad::server {
namespace {

std::string sample_url(const std::string& id, const std::string& leaf) { return "/api/samples/" + id + "/" + leaf; }

}  // namespace

std::array<std::uint8_t, 3> heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    auto channel = [&](double center) {
        return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(1.5 - std::abs(4.0 * v - center), 0.0, 1.0)));
    };
    return {channel(3.0), channel(2.0), channel(1.0)};
}

InferenceService::InferenceService(cbm::TrainedCBM model, std::optional<vision::StudentTeacher> visual,
                                   Dataset dataset, bool reveal, std::size_t cache_capacity)
    : model_(std::move(model)),
      visual_(std::move(visual)),
      dataset_(std::move(dataset)),
      reveal_(reveal),
      predictions_(cache_capacity),
      maps_(cache_capacity),
      renders_(cache_capacity) {
    if (!dataset_.vocabulary.empty() && !(dataset_.vocabulary == model_.vocabulary))
        throw std::invalid_argument("dataset vocabulary does not match the model vocabulary");
    for (std::size_t i = 0; i < dataset_.samples.size(); ++i)
        if (!by_id_.emplace(dataset_.samples[i].id(), i).second)
            throw std::invalid_argument("duplicate sample id " + dataset_.samples[i].id());
}

std::unique_ptr<InferenceService> InferenceService::load(const SessionConfig& cfg) {
    auto model = cbm::TrainedCBM::load(cfg.model_path);
    std::optional<vision::StudentTeacher> visual;
    if (cfg.visual_path) visual = vision::StudentTeacher::load(*cfg.visual_path);
    return std::make_unique<InferenceService>(std::move(model), std::move(visual), load_dataset(cfg.dataset_path),
                                              cfg.reveal, cfg.cache_capacity);
}

nlohmann::json InferenceService::health() const {
    return {{"status", "ok"}, {"samples", dataset_.samples.size()}, {"visual", has_visual()}};
}

nlohmann::json InferenceService::meta() const {
    auto vocab = nlohmann::json::array();
    for (std::size_t j = 0; j < model_.vocabulary.size(); ++j)
        vocab.push_back({{"index", j},
                         {"name", model_.vocabulary[j].name},
                         {"kind", convad::to_string(model_.vocabulary[j].kind)}});
    return {{"vocabulary", vocab},
            {"k", model_.vocabulary.size()},
            {"paradigm", cbm::to_string(model_.paradigm)},
            {"reveal", reveal_},
            {"visual", has_visual()}};
}

const Sample& InferenceService::sample(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw NotFound("unknown sample " + id);
    return dataset_.samples[it->second];
}

nlohmann::json InferenceService::list_samples(const std::string& split, int offset, int limit) const {
    Subset subset;
    try {
        subset = subset_from_string(split);
    } catch (const std::invalid_argument&) {
        throw NotFound("unknown split " + split);
    }
    if (offset < 0 || limit < 1) throw BadRequest("offset must be >= 0 and limit >= 1");
    auto items = nlohmann::json::array();
    int total = 0;
    for (const auto& s : dataset_.samples) {
        if (s.subset != subset) continue;
        if (total++ < offset || static_cast<int>(items.size()) >= limit) continue;
        nlohmann::json e = {{"id", s.id()}, {"category", s.category}, {"thumbnail_url", sample_url(s.id(), "image.png")}};
        if (reveal_) {
            e["label"] = s.label;
            if (s.defect_type) e["defect_type"] = *s.defect_type;
        }
        items.push_back(std::move(e));
    }
    return {{"split", split}, {"total", total}, {"offset", offset}, {"limit", limit}, {"items", items}};
}

Prediction InferenceService::predict(const Sample& s) const {
    if (auto hit = predictions_.get(s.id())) return *hit;
    Prediction p = model_.predict(s.image);
    if (visual_) p.image_score = map_of(s).image_score;
    predictions_.put(s.id(), p);
    return p;
}

AnomalyMap InferenceService::map_of(const Sample& s) const {
    if (!visual_) throw NotFound("no visual branch loaded");
    if (auto hit = maps_.get(s.id())) return *hit;
    AnomalyMap m = visual_->anomaly_map(s.image);
    maps_.put(s.id(), m);
    return m;
}

nlohmann::json InferenceService::prediction_body(const Sample& s, const Prediction& p,
                                                 std::span<const int> ranking) const {
    std::vector<int> rank(ranking.size());
    for (std::size_t r = 0; r < ranking.size(); ++r) rank[ranking[r]] = static_cast<int>(r);
    auto concepts = nlohmann::json::array();
    for (int j : ranking)
        concepts.push_back({{"index", j},
                            {"name", model_.vocabulary[j].name},
                            {"kind", convad::to_string(model_.vocabulary[j].kind)},
                            {"prob", p.concept_probs[j]},
                            {"logit", p.concept_logits[j]},
                            {"entropy", p.concept_entropies[j]},
                            {"ucp_rank", rank[j]}});
    nlohmann::json body = {{"id", s.id()}, {"concepts", concepts}, {"label_prob", p.label_prob}};
    if (p.image_score) body["image_score"] = *p.image_score;
    if (visual_) {
        body["anomaly_map_url"] = sample_url(s.id(), "anomaly_map.png");
        body["anomaly_map_raw_url"] = sample_url(s.id(), "anomaly_map.json");
    }
    if (reveal_) {
        nlohmann::json truth = {{"label", s.label}, {"concepts", s.concepts}};
        if (s.defect_type) truth["defect_type"] = *s.defect_type;
        body["truth"] = truth;
    }
    return body;
}

nlohmann::json InferenceService::prediction(const std::string& id) const {
    const Sample& s = sample(id);
    const Prediction p = predict(s);
    return prediction_body(s, p, p.ucp_order);
}

nlohmann::json InferenceService::intervene(const std::string& id, const nlohmann::json& body) const {
    const Sample& s = sample(id);
    std::vector<intervene::Correction> corrections;
    try {
        for (const auto& c : body.at("corrections"))
            corrections.push_back({c.at("index").get<int>(), c.at("value").get<int>()});
    } catch (const nlohmann::json::exception& e) {
        throw BadRequest(std::string("malformed corrections: ") + e.what());
    }
    const Prediction original = predict(s);
    Prediction corrected;
    try {
        corrected = intervene::apply_interventions(model_, original, corrections);
    } catch (const std::invalid_argument& e) {
        throw BadRequest(e.what());
    }
    // Rows keep the original UCP ranking so a client's list does not reorder while correcting.
    nlohmann::json out = prediction_body(s, corrected, original.ucp_order);
    out["original_label_prob"] = original.label_prob;
    auto applied = nlohmann::json::array();
    for (const auto& c : corrections) applied.push_back({{"index", c.concept_index}, {"value", c.value}});
    out["corrections"] = applied;
    return out;
}

std::string InferenceService::image_png(const std::string& id) const {
    const Sample& s = sample(id);
    const std::string key = "image:" + id;
    if (auto hit = renders_.get(key)) return *hit;
    std::string png = png::encode_rgb(s.image);
    renders_.put(key, png);
    return png;
}

std::string InferenceService::anomaly_map_png(const std::string& id) const {
    const Sample& s = sample(id);
    const std::string key = "map:" + id;
    if (auto hit = renders_.get(key)) return *hit;
    const AnomalyMap m = map_of(s);
    if (m.height != s.image.height || m.width != s.image.width)
        throw std::runtime_error("anomaly map and image sizes differ for " + id);
    const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
    const double range = *hi - *lo;
    std::vector<std::uint8_t> rgb(m.values.size() * 3);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const double v = range > 0 ? (m.values[i] - *lo) / range : 0.0;
        const auto c = heat_color(v);
        for (int ch = 0; ch < 3; ++ch) {
            const double base = s.image.pixels[i * 3 + ch] * 255.0;
            rgb[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(0.5 * base + 0.5 * c[ch]));
        }
    }
    std::string png = png::encode(m.height, m.width, 3, rgb);
    renders_.put(key, png);
    return png;
}

nlohmann::json InferenceService::anomaly_map_raw(const std::string& id) const {
    const AnomalyMap m = map_of(sample(id));
    return {{"id", id}, {"height", m.height}, {"width", m.width}, {"image_score", m.image_score}, {"values", m.values}};
}

}  // namespace convad::server
