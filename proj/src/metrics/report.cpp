#include "convad/metrics/report.hpp"

#include <stdexcept>

namespace convad::metrics {
namespace {

MetricValue skipped(std::string why) { return {std::nullopt, std::move(why)}; }

template <typename F>
MetricValue guarded(F&& f) {
    try {
        return {f(), {}};
    } catch (const std::invalid_argument& e) {
        return skipped(e.what());
    }
}

MetricTable score_subset(std::span<const Sample> samples, std::span<const Prediction> preds,
                         std::span<const AnomalyMap> maps, const ConceptVocabulary& vocab,
                         const EvaluationOptions& opts, std::vector<ConceptScore>* concepts, int* n_skipped) {
    MetricTable t;
    std::vector<double> label_scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        label_scores.push_back(preds[i].label_prob);
        labels.push_back(static_cast<std::uint8_t>(samples[i].label));
    }
    t["I-AUC"] = guarded([&] { return roc_auc(label_scores, labels); });
    t["I-F1"] = guarded([&] { return best_f1(label_scores, labels).f1; });

    const std::size_t k = vocab.size();
    double auc_sum = 0, f1_sum = 0;
    int used = 0, skipped_count = 0;
    std::vector<double> flat_scores;
    std::vector<std::uint8_t> flat_labels;
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> s;
        std::vector<std::uint8_t> z;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            s.push_back(preds[i].concept_probs[j]);
            z.push_back(samples[i].concepts[j]);
        }
        flat_scores.insert(flat_scores.end(), s.begin(), s.end());
        flat_labels.insert(flat_labels.end(), z.begin(), z.end());
        ConceptScore cs{vocab[j].name, vocab[j].kind, std::nullopt, std::nullopt};
        try {
            cs.auc = roc_auc(s, z);
            cs.f1 = best_f1(s, z).f1;
            auc_sum += *cs.auc;
            f1_sum += *cs.f1;
            ++used;
        } catch (const std::invalid_argument&) {
            ++skipped_count;
        }
        if (concepts) concepts->push_back(cs);
    }
    if (n_skipped) *n_skipped = skipped_count;
    if (opts.flattened_concepts) {
        t["C-AUC"] = guarded([&] { return roc_auc(flat_scores, flat_labels); });
        t["C-F1"] = guarded([&] { return best_f1(flat_scores, flat_labels).f1; });
    } else if (used > 0) {
        t["C-AUC"] = {auc_sum / used, {}};
        t["C-F1"] = {f1_sum / used, {}};
    } else {
        t["C-AUC"] = t["C-F1"] = skipped("no concept has both classes");
    }

    if (maps.empty()) {
        t["P-AUC"] = t["P-F1"] = t["PRO"] = skipped("no visual branch");
        return t;
    }
    std::vector<float> pix;
    std::vector<std::uint8_t> pix_labels;
    std::vector<std::vector<std::uint8_t>> masks(samples.size());
    std::vector<MapView> views;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& m = maps[i];
        const std::size_t n = m.values.size();
        masks[i] = samples[i].mask ? samples[i].mask->data : std::vector<std::uint8_t>(n, 0);
        if (masks[i].size() != n) throw std::invalid_argument("mask of " + samples[i].id() + " differs from its map");
        pix.insert(pix.end(), m.values.begin(), m.values.end());
        pix_labels.insert(pix_labels.end(), masks[i].begin(), masks[i].end());
        views.push_back({m.height, m.width, m.values, masks[i]});
    }
    t["P-AUC"] = guarded([&] { return roc_auc(pix, pix_labels); });
    t["P-F1"] = guarded([&] {
        std::vector<double> d(pix.begin(), pix.end());
        return best_f1(d, pix_labels).f1;
    });
    t["PRO"] = guarded([&] { return pro(views, opts.fpr_limit); });
    return t;
}

}  // namespace

double EvaluationReport::get(const std::string& metric) const {
    const auto& v = overall.at(metric);
    if (!v.value) throw std::runtime_error(metric + " was skipped: " + v.skipped);
    return *v.value;
}

nlohmann::json to_json(const MetricTable& t) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, v] : t) j[name] = v.value ? nlohmann::json(*v.value) : nlohmann::json({{"skipped", v.skipped}});
    return j;
}

nlohmann::json EvaluationReport::to_json() const {
    nlohmann::json j;
    j["n_samples"] = n_samples;
    j["overall"] = metrics::to_json(overall);
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [c, t] : per_category) cats[c] = metrics::to_json(t);
    j["per_category"] = cats;
    j["average"] = metrics::to_json(category_average);
    auto cs = nlohmann::json::array();
    for (const auto& c : concepts) {
        nlohmann::json e = {{"name", c.name}, {"kind", convad::to_string(c.kind)}};
        e["auc"] = c.auc ? nlohmann::json(*c.auc) : nlohmann::json(nullptr);
        e["f1"] = c.f1 ? nlohmann::json(*c.f1) : nlohmann::json(nullptr);
        cs.push_back(e);
    }
    j["concepts"] = cs;
    j["concepts_skipped"] = concepts_skipped;
    return j;
}

EvaluationReport evaluate_predictions(std::span<const Sample> samples, std::span<const Prediction> preds,
                                      std::span<const AnomalyMap> maps, const ConceptVocabulary& vocab,
                                      const EvaluationOptions& opts) {
    if (preds.size() != samples.size() || (!maps.empty() && maps.size() != samples.size()))
        throw std::invalid_argument("one prediction (and map) per sample required");
    EvaluationReport r;
    r.n_samples = static_cast<int>(samples.size());
    r.overall = score_subset(samples, preds, maps, vocab, opts, &r.concepts, &r.concepts_skipped);
    if (opts.per_category) {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].category].push_back(i);
        if (groups.size() > 1)
            for (const auto& [cat, idx] : groups) {
                std::vector<Sample> s;
                std::vector<Prediction> p;
                std::vector<AnomalyMap> m;
                for (auto i : idx) {
                    s.push_back(samples[i]);
                    p.push_back(preds[i]);
                    if (!maps.empty()) m.push_back(maps[i]);
                }
                r.per_category[cat] = score_subset(s, p, m, vocab, opts, nullptr, nullptr);
            }
    }
    if (r.per_category.empty()) {
        r.category_average = r.overall;
    } else {
        std::vector<MetricTable> tables;
        for (const auto& [_, t] : r.per_category) tables.push_back(t);
        r.category_average = mean_of_tables(tables);
    }
    return r;
}

EvaluationReport evaluate_model(const cbm::TrainedCBM& model, const vision::StudentTeacher* visual,
                                std::span<const Sample> test, const EvaluationOptions& opts) {
    std::vector<Prediction> preds;
    std::vector<AnomalyMap> maps;
    for (const auto& s : test) {
        preds.push_back(model.predict(s.image));
        if (visual) {
            maps.push_back(visual->anomaly_map(s.image));
            preds.back().image_score = maps.back().image_score;
        }
    }
    return evaluate_predictions(test, preds, maps, model.vocabulary, opts);
}

MetricTable mean_of_tables(std::span<const MetricTable> tables) {
    MetricTable out;
    for (const auto& name : kMetricNames) {
        double acc = 0;
        int n = 0;
        for (const auto& t : tables)
            if (auto it = t.find(name); it != t.end() && it->second.value) {
                acc += *it->second.value;
                ++n;
            }
        out[name] = n ? MetricValue{acc / n, {}} : skipped("unavailable in every table");
    }
    return out;
}

MetricTable mean_over_seeds(std::span<const EvaluationReport> reports) {
    MetricTable out;
    if (reports.empty()) return out;
    for (const auto& name : kMetricNames) {
        double acc = 0;
        bool ok = true;
        std::string why;
        for (const auto& r : reports) {
            auto it = r.overall.find(name);
            if (it == r.overall.end() || !it->second.value) {
                ok = false;
                why = it == r.overall.end() ? "missing" : it->second.skipped;
                break;
            }
            acc += *it->second.value;
        }
        out[name] = ok ? MetricValue{acc / static_cast<double>(reports.size()), {}} : skipped(why);
    }
    return out;
}

}  // namespace convad::metrics
