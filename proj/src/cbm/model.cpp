#include "convad/cbm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "convad/core/dataset_io.hpp"
#include "convad/intervene/ucp.hpp"
#include "convad/nn/archive.hpp"

namespace convad::cbm {

std::string to_string(Paradigm p) {
    switch (p) {
        case Paradigm::kIndependent: return "independent";
        case Paradigm::kSequential: return "sequential";
        case Paradigm::kJoint: return "joint";
    }
    return "joint";
}

Paradigm paradigm_from_string(const std::string& s) {
    if (s == "independent") return Paradigm::kIndependent;
    if (s == "sequential") return Paradigm::kSequential;
    if (s == "joint") return Paradigm::kJoint;
    throw std::invalid_argument("unknown paradigm '" + s + "'");
}

nn::FitSchedule TrainingConfig::schedule() const {
    nn::FitSchedule s;
    s.max_epochs = max_epochs;
    s.early_stop_patience = early_stop_patience;
    s.lr_plateau_patience = lr_plateau_patience;
    s.lr_decay_factor = lr_decay_factor;
    s.warmup_epochs = warmup_epochs;
    return s;
}

int TrainingConfig::first_trainable_block() const {
    const int n = static_cast<int>(backbone.channels.size());
    return std::clamp(n - finetune_blocks, 0, n);
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
    j = {{"paradigm", to_string(c.paradigm)},
         {"lambda", c.lambda_tradeoff},
         {"max_epochs", c.max_epochs},
         {"early_stop_patience", c.early_stop_patience},
         {"lr_plateau_patience", c.lr_plateau_patience},
         {"lr_decay_factor", c.lr_decay_factor},
         {"warmup_epochs", c.warmup_epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"label_learning_rate", c.label_learning_rate},
         {"seed", c.seed},
         {"finetune_blocks", c.finetune_blocks},
         {"pretrain_epochs", c.pretrain_epochs},
         {"pretrain_learning_rate", c.pretrain_learning_rate},
         {"hidden_units", c.hidden_units},
         {"augmentation", c.augmentation},
         {"backbone",
          {{"channels", c.backbone.channels},
           {"height", c.backbone.height},
           {"width", c.backbone.width},
           {"pyramid_blocks", c.backbone.pyramid_blocks}}}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
    if (j.contains("paradigm")) c.paradigm = paradigm_from_string(j.at("paradigm").get<std::string>());
    c.lambda_tradeoff = j.value("lambda", c.lambda_tradeoff);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.lr_plateau_patience = j.value("lr_plateau_patience", c.lr_plateau_patience);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.label_learning_rate = j.value("label_learning_rate", c.label_learning_rate);
    c.seed = j.value("seed", c.seed);
    c.finetune_blocks = j.value("finetune_blocks", c.finetune_blocks);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.pretrain_learning_rate = j.value("pretrain_learning_rate", c.pretrain_learning_rate);
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    if (j.contains("augmentation")) c.augmentation = j.at("augmentation").get<scenarios::AugmentationPolicy>();
    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        c.backbone.channels = b.value("channels", c.backbone.channels);
        c.backbone.height = b.value("height", c.backbone.height);
        c.backbone.width = b.value("width", c.backbone.width);
        c.backbone.pyramid_blocks = b.value("pyramid_blocks", c.backbone.pyramid_blocks);
    }
    if (c.lambda_tradeoff < 0) throw std::invalid_argument("lambda must be nonnegative");
    if (c.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
}

void ConceptExtractor::logits(const Image& image, std::vector<float>& out) const {
    nn::BackboneActivations acts;
    backbone.forward(image, acts);
    out.resize(heads.out_f);
    heads.forward(acts.embedding, out);
}

ConceptLogits ConceptExtractor::logits(const Image& image) const {
    std::vector<float> tmp;
    logits(image, tmp);
    return {tmp.begin(), tmp.end()};
}

std::vector<nn::ParamRef> ConceptExtractor::params(int first_trainable_block) {
    auto p = backbone.params(first_trainable_block);
    heads.append_params(p, "g.heads");
    return p;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

std::vector<double> TrainedCBM::bottleneck(std::span<const double> logits) const {
    std::vector<double> b(logits.begin(), logits.end());
    if (paradigm == Paradigm::kIndependent)
        for (auto& v : b) v = sigmoid(v) > 0.5 ? 1.0 : 0.0;
    return b;
}

double TrainedCBM::label_prob(std::span<const double> bottleneck) const {
    std::vector<float> x(bottleneck.begin(), bottleneck.end());
    return sigmoid(f.forward(x));
}

void refresh_concept_stats(Prediction& p) {
    const std::size_t k = p.concept_logits.size();
    p.concept_probs.resize(k);
    p.concept_entropies.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        p.concept_probs[j] = sigmoid(p.concept_logits[j]);
        p.concept_entropies[j] = intervene::entropy(p.concept_probs[j]);
    }
    p.ucp_order = intervene::ucp_order(p.concept_probs);
}

Prediction TrainedCBM::predict_from_logits(ConceptLogits logits) const {
    if (static_cast<int>(logits.size()) != k()) throw std::invalid_argument("logit vector length differs from k");
    Prediction p;
    p.concept_logits = std::move(logits);
    refresh_concept_stats(p);
    p.bottleneck = bottleneck(p.concept_logits);
    p.label_prob = label_prob(p.bottleneck);
    return p;
}

Prediction TrainedCBM::predict(const Image& image) const { return predict_from_logits(g.logits(image)); }

namespace {

std::vector<nn::ParamRef> all_params(TrainedCBM& m) {
    auto p = m.g.params(0);
    auto fp = m.f.params();
    p.insert(p.end(), fp.begin(), fp.end());
    return p;
}

}  // namespace

void TrainedCBM::save(const std::filesystem::path& path) const {
    nlohmann::json m;
    m["kind"] = "cbm";
    m["vocabulary"] = to_json(vocabulary);
    m["paradigm"] = to_string(paradigm);
    m["config"] = config;
    auto pct = nlohmann::json::array();
    for (const auto& p : percentiles) pct.push_back({p.p5, p.p95});
    m["logit_percentiles"] = pct;
    m["embedding_dim"] = g.heads.in_f;
    m["metadata"] = metadata;
    // Parameters are only read.
    nn::write_archive(path, m, all_params(const_cast<TrainedCBM&>(*this)));
}

TrainedCBM TrainedCBM::load(const std::filesystem::path& path) {
    const auto a = nn::read_archive(path);
    if (a.manifest.value("kind", "") != "cbm") throw std::runtime_error(path.string() + " is not a CBM checkpoint");
    TrainedCBM m;
    m.vocabulary = vocabulary_from_json(a.manifest.at("vocabulary"));
    m.paradigm = paradigm_from_string(a.manifest.at("paradigm").get<std::string>());
    m.config = a.manifest.at("config").get<TrainingConfig>();
    for (const auto& p : a.manifest.at("logit_percentiles")) m.percentiles.push_back({p[0].get<double>(), p[1].get<double>()});
    m.metadata = a.manifest.value("metadata", nlohmann::json::object());
    const int k = static_cast<int>(m.vocabulary.size());
    m.g.backbone = nn::ConvBackbone(m.config.backbone, 0);
    m.g.heads = nn::Linear(m.g.backbone.embedding_dim(), k);
    m.f = nn::Mlp(k, m.config.hidden_units, 0);
    nn::load_params(a, all_params(m));
    return m;
}

}  // namespace convad::cbm
