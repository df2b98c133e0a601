#include "convad/cbm/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "convad/cbm/losses.hpp"
#include "convad/core/random.hpp"
#include "convad/scenarios/augment.hpp"

namespace convad::cbm {
namespace {

constexpr std::uint64_t kAugStream = 0xa11;
constexpr std::uint64_t kOrderStream = 0x0d3;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, kOrderStream, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

Image training_view(const Sample& s, const TrainingConfig& cfg, std::uint64_t stream, int epoch, std::size_t idx) {
    if (cfg.augmentation.is_identity()) return s.image;
    Rng rng(derive_seed(cfg.seed, stream, kAugStream, epoch, idx));
    return scenarios::augment_image(s.image, cfg.augmentation, rng);
}

struct Objective {
    bool joint = false;
    std::vector<double> alpha;
    double alpha_y = 1.0;
    double lambda = 1.0;
    int first_trainable = 0;
};

// Loss of one sample; when grad_scale > 0 its gradient times grad_scale is accumulated.
double sample_objective(ConceptExtractor& g, nn::Mlp* f, const Objective& obj, const Image& image,
                        const Sample& s, double grad_scale) {
    const int k = g.k();
    nn::BackboneActivations acts;
    g.backbone.forward(image, acts);
    std::vector<float> logits(k);
    g.heads.forward(acts.embedding, logits);

    std::vector<float> grad_logits(k, 0.f);
    double concept_sum = 0;
    std::vector<double> dconcept(k);
    for (int j = 0; j < k; ++j) {
        const double z = s.concepts[j];
        concept_sum += weighted_bce(z, sigmoid(logits[j]), obj.alpha[j]);
        dconcept[j] = weighted_bce_grad_logit(z, logits[j], obj.alpha[j]);
    }

    double loss;
    if (!obj.joint) {
        loss = concept_sum / k;
        if (grad_scale > 0)
            for (int j = 0; j < k; ++j) grad_logits[j] = static_cast<float>(dconcept[j] / k * grad_scale);
    } else {
        nn::Mlp::Cache cache;
        const float label_logit = f->forward(logits, cache);
        const double norm = 1.0 / (1.0 + obj.lambda * k);
        const double ly = weighted_bce(s.label, sigmoid(label_logit), obj.alpha_y);
        loss = (ly + obj.lambda * concept_sum) * norm;
        if (grad_scale > 0) {
            const double gy = weighted_bce_grad_logit(s.label, label_logit, obj.alpha_y) * norm * grad_scale;
            std::vector<float> gx(k);
            f->backward(cache, static_cast<float>(gy), gx);
            for (int j = 0; j < k; ++j)
                grad_logits[j] = gx[j] + static_cast<float>(obj.lambda * norm * dconcept[j] * grad_scale);
        }
    }
    if (grad_scale > 0) {
        std::vector<float> grad_emb(acts.embedding.size());
        g.heads.backward(acts.embedding, grad_logits, grad_emb);
        g.backbone.backward(acts, grad_emb, {}, obj.first_trainable);
    }
    return loss;
}

/// Early stopping on a validation set without anomalies would reward predicting "normal" everywhere.
bool has_both_labels(std::span<const Sample> samples) {
    bool pos = false, neg = false;
    for (const auto& s : samples) (s.label ? pos : neg) = true;
    return pos && neg;
}

double mean_objective(ConceptExtractor& g, nn::Mlp* f, const Objective& obj, std::span<const Sample> samples) {
    double acc = 0;
    for (const auto& s : samples) acc += sample_objective(g, f, obj, s.image, s, 0.0);
    return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

nn::FitHistory optimize_extractor(ConceptExtractor& g, nn::Mlp* f, const Objective& obj,
                                  std::span<const Sample> train, std::span<const Sample> val,
                                  const TrainingConfig& cfg) {
    auto params = g.params(obj.first_trainable);
    if (f) {
        auto fp = f->params();
        params.insert(params.end(), fp.begin(), fp.end());
    }
    nn::Adam opt(params, cfg.learning_rate);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    auto train_epoch = [&](int epoch) {
        const auto order = epoch_order(train.size(), cfg.seed, epoch);
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            nn::zero_grad(params);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = train[order[i]];
                const Image view = training_view(s, cfg, 1, epoch, order[i]);
                total += sample_objective(g, f, obj, view, s, scale);
            }
            opt.step();
        }
        return total / static_cast<double>(train.size());
    };
    const auto monitored = has_both_labels(val) ? val : train;
    auto val_loss = [&]() { return mean_objective(g, f, obj, monitored); };
    return nn::fit(opt, cfg.schedule(), train_epoch, val_loss);
}

void require_trainable(std::span<const Sample> train, std::size_t k) {
    if (train.empty()) throw std::invalid_argument("empty training set");
    bool pos = false, neg = false;
    for (const auto& s : train) {
        if (s.concepts.size() != k) throw std::invalid_argument("sample " + s.id() + " has a concept vector of length " +
                                                                std::to_string(s.concepts.size()));
        (s.label ? pos : neg) = true;
    }
    if (!pos) throw std::invalid_argument("training set has no anomalous samples");
    if (!neg) throw std::invalid_argument("training set has no normal samples");
}

std::vector<std::vector<float>> bits_of(std::span<const Sample> samples) {
    std::vector<std::vector<float>> x;
    x.reserve(samples.size());
    for (const auto& s : samples) x.emplace_back(s.concepts.begin(), s.concepts.end());
    return x;
}

std::vector<int> labels_of(std::span<const Sample> samples) {
    std::vector<int> y;
    for (const auto& s : samples) y.push_back(s.label);
    return y;
}

}  // namespace

std::vector<double> concept_alphas(std::span<const Sample> samples, std::size_t k) {
    std::vector<double> alpha(k);
    std::vector<std::uint8_t> col(samples.size());
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i].concepts[j];
        alpha[j] = imbalance_alpha_or_one(col);
    }
    return alpha;
}

nn::ConvBackbone pretrain_backbone(std::span<const Sample> samples, const TrainingConfig& cfg) {
    nn::ConvBackbone net(cfg.backbone, derive_seed(cfg.seed, fnv1a("backbone")));
    std::map<std::string, int> classes;
    for (const auto& s : samples) classes.emplace(s.category, 0);
    if (classes.size() < 2 || cfg.pretrain_epochs <= 0) return net;
    int next = 0;
    for (auto& [name, id] : classes) id = next++;

    const int nc = static_cast<int>(classes.size());
    nn::Linear head(net.embedding_dim(), nc);
    Rng rng(derive_seed(cfg.seed, fnv1a("pretrain-head")));
    head.init_he(rng, 1.0);
    auto params = net.params(0);
    head.append_params(params, "pretrain.head");
    nn::Adam opt(params, cfg.pretrain_learning_rate);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const auto order = epoch_order(samples.size(), derive_seed(cfg.seed, fnv1a("pretrain")), epoch);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            nn::zero_grad(params);
            const float scale = 1.f / static_cast<float>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = samples[order[i]];
                const Image view = training_view(s, cfg, 2, epoch, order[i]);
                nn::BackboneActivations acts;
                net.forward(view, acts);
                std::vector<float> z(nc);
                head.forward(acts.embedding, z);
                const float mx = *std::max_element(z.begin(), z.end());
                double denom = 0;
                for (float v : z) denom += std::exp(v - mx);
                std::vector<float> gz(nc);
                const int target = classes.at(s.category);
                for (int c = 0; c < nc; ++c)
                    gz[c] = (static_cast<float>(std::exp(z[c] - mx) / denom) - (c == target ? 1.f : 0.f)) * scale;
                std::vector<float> ge(acts.embedding.size());
                head.backward(acts.embedding, gz, ge);
                net.backward(acts, ge, {}, 0);
            }
            opt.step();
        }
    }
    return net;
}

ExtractorResult train_concept_extractor(std::span<const Sample> train, std::span<const Sample> val,
                                        const TrainingConfig& cfg, const nn::ConvBackbone& initial) {
    if (train.empty()) throw std::invalid_argument("empty training set");
    const std::size_t k = train.front().concepts.size();
    ExtractorResult r;
    r.g.backbone = initial;
    r.g.heads = nn::Linear(initial.embedding_dim(), static_cast<int>(k));
    Rng rng(derive_seed(cfg.seed, fnv1a("heads")));
    r.g.heads.init_he(rng, 1.0);
    Objective obj;
    obj.alpha = concept_alphas(train, k);
    obj.first_trainable = cfg.first_trainable_block();
    r.history = optimize_extractor(r.g, nullptr, obj, train, val, cfg);
    return r;
}

LabelFitResult fit_label_predictor(const std::vector<std::vector<float>>& train_x, const std::vector<int>& train_y,
                                   const std::vector<std::vector<float>>& val_x, const std::vector<int>& val_y,
                                   const TrainingConfig& cfg) {
    if (train_x.empty()) throw std::invalid_argument("empty training set");
    const int k = static_cast<int>(train_x.front().size());
    LabelFitResult r;
    r.f = nn::Mlp(k, cfg.hidden_units, derive_seed(cfg.seed, fnv1a("label-predictor")));
    std::vector<std::uint8_t> ybits(train_y.begin(), train_y.end());
    const double alpha = imbalance_alpha_or_one(ybits);
    auto params = r.f.params();
    nn::Adam opt(params, cfg.label_learning_rate);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    auto loss_on = [&](const std::vector<std::vector<float>>& x, const std::vector<int>& y) {
        double acc = 0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += weighted_bce(y[i], sigmoid(r.f.forward(x[i])), alpha);
        return acc / static_cast<double>(x.size());
    };
    auto train_epoch = [&](int epoch) {
        const auto order = epoch_order(train_x.size(), derive_seed(cfg.seed, fnv1a("f-order")), epoch);
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            nn::zero_grad(params);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& x = train_x[order[i]];
                const int y = train_y[order[i]];
                nn::Mlp::Cache cache;
                const float logit = r.f.forward(x, cache);
                total += weighted_bce(y, sigmoid(logit), alpha);
                r.f.backward(cache, static_cast<float>(weighted_bce_grad_logit(y, logit, alpha) * scale), {});
            }
            opt.step();
        }
        return total / static_cast<double>(train_x.size());
    };
    const bool val_usable = std::find(val_y.begin(), val_y.end(), 0) != val_y.end() &&
                            std::find(val_y.begin(), val_y.end(), 1) != val_y.end();
    auto val_loss = [&]() { return val_usable ? loss_on(val_x, val_y) : loss_on(train_x, train_y); };
    r.history = nn::fit(opt, cfg.schedule(), train_epoch, val_loss);
    return r;
}

std::vector<std::vector<float>> extract_logits(const ConceptExtractor& g, std::span<const Sample> samples) {
    std::vector<std::vector<float>> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) g.logits(samples[i].image, out[i]);
    return out;
}

std::vector<LogitPercentiles> logit_percentiles(const std::vector<std::vector<float>>& train_logits) {
    if (train_logits.empty()) throw std::invalid_argument("percentiles need training logits");
    const std::size_t k = train_logits.front().size();
    std::vector<LogitPercentiles> out(k);
    std::vector<double> col(train_logits.size());
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < train_logits.size(); ++i) col[i] = train_logits[i][j];
        out[j] = {percentile(col, 5.0), percentile(col, 95.0)};
    }
    return out;
}

TrainResult train(const ScenarioSplit& split, const ConceptVocabulary& vocab, const TrainingConfig& cfg,
                  const nn::ConvBackbone* pretrained, const ExtractorResult* extractor) {
    const std::size_t k = vocab.size();
    require_trainable(split.train, k);

    TrainResult r;
    TrainedCBM& m = r.model;
    m.vocabulary = vocab;
    m.paradigm = cfg.paradigm;
    m.config = cfg;

    auto initial_backbone = [&]() {
        if (pretrained) return *pretrained;
        std::vector<Sample> normals;
        for (const auto& s : split.train)
            if (s.label == 0) normals.push_back(s);
        return pretrain_backbone(normals, cfg);
    };

    if (cfg.paradigm == Paradigm::kJoint) {
        m.g.backbone = initial_backbone();
        m.g.heads = nn::Linear(m.g.backbone.embedding_dim(), static_cast<int>(k));
        Rng rng(derive_seed(cfg.seed, fnv1a("heads")));
        m.g.heads.init_he(rng, 1.0);
        m.f = nn::Mlp(static_cast<int>(k), cfg.hidden_units, derive_seed(cfg.seed, fnv1a("label-predictor")));
        Objective obj;
        obj.joint = true;
        obj.alpha = concept_alphas(split.train, k);
        std::vector<std::uint8_t> y(split.train.size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::uint8_t>(split.train[i].label);
        obj.alpha_y = imbalance_alpha_or_one(y);
        obj.lambda = cfg.lambda_tradeoff;
        obj.first_trainable = cfg.first_trainable_block();
        r.concept_history = optimize_extractor(m.g, &m.f, obj, split.train, split.val, cfg);
        m.percentiles = logit_percentiles(extract_logits(m.g, split.train));
        return r;
    }

    if (extractor) {
        if (extractor->g.k() != static_cast<int>(k)) throw std::invalid_argument("reused extractor has wrong k");
        m.g = extractor->g;
        r.concept_history = extractor->history;
    } else {
        auto er = train_concept_extractor(split.train, split.val, cfg, initial_backbone());
        m.g = std::move(er.g);
        r.concept_history = std::move(er.history);
    }
    const auto train_logits = extract_logits(m.g, split.train);
    m.percentiles = logit_percentiles(train_logits);

    LabelFitResult lf;
    if (cfg.paradigm == Paradigm::kIndependent)
        lf = fit_label_predictor(bits_of(split.train), labels_of(split.train), bits_of(split.val), labels_of(split.val),
                                 cfg);
    else
        lf = fit_label_predictor(train_logits, labels_of(split.train), extract_logits(m.g, split.val),
                                 labels_of(split.val), cfg);
    m.f = std::move(lf.f);
    r.label_history = std::move(lf.history);
    return r;
}

}  // namespace convad::cbm
