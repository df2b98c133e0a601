#include "convad/concepts/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "convad/core/random.hpp"

namespace convad::concepts {
namespace {

template <typename F>
auto with_retries(const PipelineConfig& cfg, const std::string& image_id, F&& call) {
    for (int attempt = 0;; ++attempt) {
        try {
            return call();
        } catch (const VlmError& e) {
            if (e.retryable() && attempt < cfg.max_retries) continue;
            throw VlmError(image_id.empty() ? e.what() : "image " + image_id + ": " + e.what(), e.retryable(),
                           image_id);
        }
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string join(std::span<const std::string> items, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
    return out;
}

MeanStd mean_std(const std::vector<std::optional<double>>& values) {
    MeanStd m;
    double sum = 0;
    for (const auto& v : values) {
        if (!v) {
            ++m.excluded;
            continue;
        }
        sum += *v;
        ++m.count;
    }
    if (m.count == 0) return m;
    m.mean = sum / m.count;
    double sq = 0;
    for (const auto& v : values)
        if (v) sq += (*v - m.mean) * (*v - m.mean);
    m.std = std::sqrt(sq / m.count);
    return m;
}

nlohmann::json mean_std_json(const MeanStd& m) {
    return {{"mean", m.mean}, {"std", m.std}, {"count", m.count}, {"excluded", m.excluded}};
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(subset_fraction > 0 && subset_fraction <= 1)) throw std::invalid_argument("subset_fraction must be in (0,1]");
    if (!(similarity_threshold > 0 && similarity_threshold <= 1))
        throw std::invalid_argument("similarity_threshold must be in (0,1]");
    if (max_grouped < 1) throw std::invalid_argument("max_grouped must be >= 1");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = {{"subset_fraction", c.subset_fraction},
         {"similarity_threshold", c.similarity_threshold},
         {"max_grouped", c.max_grouped},
         {"max_retries", c.max_retries},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
    c.subset_fraction = j.value("subset_fraction", c.subset_fraction);
    c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
    c.max_grouped = j.value("max_grouped", c.max_grouped);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.seed = j.value("seed", c.seed);
}

std::vector<Sample> select_context_subset(std::span<const Sample> dataset, const PipelineConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("cannot select a context subset of an empty dataset");
    const std::size_t n = std::min(
        dataset.size(),
        static_cast<std::size_t>(std::ceil(cfg.subset_fraction * static_cast<double>(dataset.size()) - 1e-9)));

    std::set<std::string> types;
    for (const auto& s : dataset)
        if (s.defect_type) types.insert(*s.defect_type);
    if (types.size() > n) {
        const std::vector<std::string> all(types.begin(), types.end());
        throw std::invalid_argument("a context subset of " + std::to_string(n) + " images cannot cover all " +
                                    std::to_string(all.size()) + " defect types (" + join(all, ", ") + "); " +
                                    std::to_string(all.size() - n) + " would stay uncovered");
    }

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, fnv1a("context-subset")));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(dataset.size(), false);
    std::set<std::string> covered;
    for (auto i : order) {
        const auto& d = dataset[i].defect_type;
        if (d && covered.insert(*d).second) {
            chosen.push_back(i);
            taken[i] = true;
        }
    }
    for (auto i : order) {
        if (chosen.size() >= n) break;
        if (!taken[i]) chosen.push_back(i);
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<Sample> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(dataset[i]);
    return out;
}

std::vector<ExtractedConcept> create_concept_list(std::span<const Sample> subset, VLMClient& vlm,
                                                  const PromptSet& prompts, const PipelineConfig& cfg) {
    if (subset.empty()) throw std::invalid_argument("empty context subset");
    std::vector<ExtractedConcept> out;
    for (const auto& s : subset) {
        auto ctx = prompt_context(s);
        const std::string describe_prompt = PromptSet::render(prompts.describe, ctx);
        ctx["description"] = with_retries(cfg, s.id(), [&] { return vlm.describe(s, describe_prompt); });
        const std::string extract_prompt = PromptSet::render(prompts.extract, ctx);
        auto terms = with_retries(cfg, s.id(), [&] { return vlm.extract_concepts(s, extract_prompt); });
        if (terms.size() > kMaxConceptsPerImage) terms.resize(kMaxConceptsPerImage);
        for (auto& t : terms) {
            t = trim(t);
            if (!t.empty()) out.push_back({t, s.id(), s.label});
        }
    }
    return out;
}

GroupingResult group_concepts(std::span<const std::string> raw, VLMClient& vlm, const PromptSet& prompts,
                              const PipelineConfig& cfg) {
    cfg.validate();
    if (raw.empty()) throw std::invalid_argument("no concepts to group");
    std::vector<std::string> unique;
    std::map<std::string, int> freq;
    for (const auto& t : raw)
        if (freq[t]++ == 0) unique.push_back(t);

    const std::string prompt = PromptSet::render(prompts.group, {{"concepts", join(unique, "\n")}});
    const auto groups = with_retries(cfg, "", [&] { return vlm.group_concepts(unique, prompt); });

    std::vector<ConceptGroup> valid;
    std::map<std::string, std::string> owner;
    std::vector<std::string> orphans;
    for (const auto& g : groups) {
        if (trim(g.name).empty()) throw IntegrityError("grouping returned an unnamed group");
        if (g.members.empty()) throw IntegrityError("group '" + g.name + "' has no members");
        for (const auto& m : g.members) {
            if (!freq.contains(m)) {
                orphans.push_back(m);
                continue;
            }
            auto [it, inserted] = owner.emplace(m, g.name);
            if (!inserted && it->second != g.name)
                throw IntegrityError("term '" + m + "' placed in groups '" + it->second + "' and '" + g.name + "'");
        }
        valid.push_back(g);
    }
    if (!orphans.empty()) throw IntegrityError("grouping invented terms: " + join(orphans, ", "));

    std::map<std::string, std::size_t> by_name;
    std::vector<ConceptGroup> merged;
    for (const auto& g : valid) {
        auto [it, inserted] = by_name.emplace(trim(g.name), merged.size());
        if (inserted) merged.push_back({trim(g.name), {}});
        for (const auto& m : g.members) {
            auto& mem = merged[it->second].members;
            if (std::find(mem.begin(), mem.end(), m) == mem.end()) mem.push_back(m);
        }
    }
    for (const auto& t : unique)
        if (!owner.contains(t) && !by_name.contains(t)) {
            by_name.emplace(t, merged.size());
            merged.push_back({t, {t}});
        } else if (!owner.contains(t)) {
            merged[by_name[t]].members.push_back(t);
        }

    std::vector<int> weight(merged.size(), 0);
    for (std::size_t i = 0; i < merged.size(); ++i)
        for (const auto& m : merged[i].members) weight[i] += freq[m];
    std::vector<std::size_t> order(merged.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return weight[a] > weight[b]; });
    if (order.size() > static_cast<std::size_t>(cfg.max_grouped)) order.resize(cfg.max_grouped);

    GroupingResult r;
    for (auto i : order) {
        r.terms.push_back(merged[i].name);
        r.members[merged[i].name] = merged[i].members;
    }
    return r;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0 || nv == 0) throw std::invalid_argument("cosine_similarity: zero vector");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

FilterResult filter_concepts(std::span<const std::string> terms, TextEmbedder& embedder, const PipelineConfig& cfg) {
    cfg.validate();
    const std::set<std::string> distinct(terms.begin(), terms.end());
    if (distinct.size() != terms.size()) throw std::invalid_argument("filter_concepts needs unique terms");
    const std::size_t n = terms.size();
    std::vector<std::vector<double>> emb;
    emb.reserve(n);
    for (const auto& t : terms) emb.push_back(embedder.embed(t));
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) sim[i][j] = sim[j][i] = cosine_similarity(emb[i], emb[j]);

    std::vector<bool> alive(n, true);
    FilterResult r;
    Rng rng(derive_seed(cfg.seed, fnv1a("filter")));
    for (;;) {
        std::vector<int> degree(n, 0);
        int max_degree = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (alive[i] && alive[j] && sim[i][j] > cfg.similarity_threshold) {
                    max_degree = std::max({max_degree, ++degree[i], ++degree[j]});
                }
        if (max_degree == 0) break;
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < n; ++i)
            if (alive[i] && degree[i] == max_degree) candidates.push_back(i);
        const std::size_t victim =
            candidates.size() == 1 ? candidates[0]
                                   : candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
        std::string reason = "cosine > " + std::to_string(cfg.similarity_threshold) + " with";
        bool first = true;
        for (std::size_t j = 0; j < n; ++j)
            if (j != victim && alive[j] && sim[victim][j] > cfg.similarity_threshold) {
                reason += (first ? " " : ", ") + terms[j] + " (" + std::to_string(sim[victim][j]) + ")";
                first = false;
            }
        alive[victim] = false;
        r.removed.push_back({terms[victim], reason});
    }
    for (std::size_t i = 0; i < n; ++i)
        if (alive[i]) r.kept.push_back(terms[i]);
    return r;
}

std::vector<ConceptVector> annotate_dataset(std::span<const Sample> dataset, const ConceptVocabulary& vocab,
                                            VLMClient& vlm, const PromptSet& prompts, const PipelineConfig& cfg) {
    const auto names = vocab.names();
    const std::string listing = join(names, "\n");
    std::vector<ConceptVector> out;
    out.reserve(dataset.size());
    for (const auto& s : dataset) {
        auto ctx = prompt_context(s);
        ctx["vocabulary"] = listing;
        const std::string prompt = PromptSet::render(prompts.annotate, ctx);
        const auto answer = with_retries(cfg, s.id(), [&] { return vlm.annotate(s, names, prompt); });
        ConceptVector v(names.size(), 0);
        for (std::size_t j = 0; j < names.size(); ++j) {
            auto it = answer.find(names[j]);
            if (it == answer.end()) throw IntegrityError("annotation of " + s.id() + " omits concept '" + names[j] + "'");
            v[j] = it->second ? 1 : 0;
        }
        if (answer.size() != names.size()) {
            std::vector<std::string> extra;
            for (const auto& [k, _] : answer)
                if (!vocab.index_of(k)) extra.push_back(k);
            throw IntegrityError("annotation of " + s.id() + " names unknown concepts: " + join(extra, ", "));
        }
        out.push_back(std::move(v));
    }
    return out;
}

AnnotationReport evaluate_annotations(std::span<const ConceptVector> pred, std::span<const ConceptVector> truth,
                                      const ConceptVocabulary& vocab) {
    if (pred.size() != truth.size()) throw std::invalid_argument("prediction and truth differ in length");
    if (pred.empty()) throw std::invalid_argument("no annotations to evaluate");
    const std::size_t k = vocab.size();
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i].size() != k || truth[i].size() != k)
            throw std::invalid_argument("annotation " + std::to_string(i) + " is not aligned with the vocabulary");

    AnnotationReport r;
    for (std::size_t j = 0; j < k; ++j) {
        int tp = 0, fp = 0, tn = 0, fn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool p = pred[i][j], t = truth[i][j];
            (p ? (t ? tp : fp) : (t ? fn : tn))++;
        }
        ConceptQuality q{vocab[j].name, vocab[j].kind, static_cast<double>(tp + tn) / pred.size(), {}, {}};
        if (tp + fp > 0) q.precision = static_cast<double>(tp) / (tp + fp);
        if (tp + fn > 0) q.recall = static_cast<double>(tp) / (tp + fn);
        r.concepts.push_back(q);
    }
    const std::pair<std::string, std::optional<ConceptKind>> groups[] = {
        {"all", std::nullopt}, {"anomaly", ConceptKind::kAnomaly}, {"normal", ConceptKind::kNormal}};
    for (const auto& [name, kind] : groups) {
        std::vector<std::optional<double>> acc, prec, rec;
        for (const auto& q : r.concepts) {
            if (kind && q.kind != *kind) continue;
            acc.emplace_back(q.accuracy);
            prec.push_back(q.precision);
            rec.push_back(q.recall);
        }
        r.aggregates[name] = {mean_std(acc), mean_std(prec), mean_std(rec)};
    }
    return r;
}

nlohmann::json AnnotationReport::to_json() const {
    nlohmann::json j;
    auto per = nlohmann::json::array();
    for (const auto& q : concepts)
        per.push_back({{"name", q.name},
                       {"kind", convad::to_string(q.kind)},
                       {"accuracy", q.accuracy},
                       {"precision", optional_json(q.precision)},
                       {"recall", optional_json(q.recall)}});
    j["concepts"] = per;
    for (const auto& [name, a] : aggregates)
        j["aggregates"][name] = {{"accuracy", mean_std_json(a.accuracy)},
                                 {"precision", mean_std_json(a.precision)},
                                 {"recall", mean_std_json(a.recall)}};
    return j;
}

std::vector<ConceptVector> align_concepts(std::span<const Sample> samples, const ConceptVocabulary& truth_vocab,
                                          const ConceptVocabulary& target) {
    std::vector<std::size_t> src;
    for (const auto& c : target.concepts()) {
        auto i = truth_vocab.index_of(c.name);
        if (!i) throw std::invalid_argument("concept '" + c.name + "' has no ground truth");
        src.push_back(*i);
    }
    std::vector<ConceptVector> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.concepts.size() != truth_vocab.size())
            throw std::invalid_argument("sample " + s.id() + " is not aligned with the ground-truth vocabulary");
        ConceptVector v(src.size());
        for (std::size_t j = 0; j < src.size(); ++j) v[j] = s.concepts[src[j]];
        out.push_back(std::move(v));
    }
    return out;
}

nlohmann::json PipelineResult::to_json(std::span<const Sample> dataset) const {
    nlohmann::json j;
    j["subset"] = subset_ids;
    auto raw_j = nlohmann::json::array();
    for (const auto& c : raw) raw_j.push_back({{"term", c.term}, {"sample", c.sample_id}, {"label", c.label}});
    j["raw_concepts"] = raw_j;
    j["groups"] = grouping.members;
    auto removed = nlohmann::json::array();
    for (const auto& rm : filtering.removed) removed.push_back({{"term", rm.term}, {"reason", rm.reason}});
    j["removed"] = removed;
    auto vocab = nlohmann::json::array();
    for (const auto& c : vocabulary.concepts()) vocab.push_back({{"name", c.name}, {"kind", convad::to_string(c.kind)}});
    j["vocabulary"] = vocab;
    nlohmann::json ann = nlohmann::json::object();
    for (std::size_t i = 0; i < annotations.size() && i < dataset.size(); ++i) ann[dataset[i].id()] = annotations[i];
    j["annotations"] = ann;
    return j;
}

PipelineResult run_pipeline(std::span<const Sample> context_pool, std::span<const Sample> dataset, VLMClient& vlm,
                            TextEmbedder& embedder, const PromptSet& prompts, const PipelineConfig& cfg) {
    PipelineResult r;
    const auto subset = select_context_subset(context_pool, cfg);
    for (const auto& s : subset) r.subset_ids.push_back(s.id());
    r.raw = create_concept_list(subset, vlm, prompts, cfg);
    if (r.raw.empty()) throw std::runtime_error("the VLM extracted no concepts");
    std::vector<std::string> terms;
    std::set<std::string> from_normal;
    for (const auto& c : r.raw) {
        terms.push_back(c.term);
        if (c.label == 0) from_normal.insert(c.term);
    }
    r.grouping = group_concepts(terms, vlm, prompts, cfg);
    r.filtering = filter_concepts(r.grouping.terms, embedder, cfg);

    std::vector<Concept> concepts;
    for (const auto& t : r.filtering.kept) {
        bool normal = false;
        for (const auto& m : r.grouping.members.at(t)) normal |= from_normal.contains(m);
        concepts.push_back({t, normal ? ConceptKind::kNormal : ConceptKind::kAnomaly});
    }
    r.vocabulary = ConceptVocabulary(std::move(concepts));
    r.annotations = annotate_dataset(dataset, r.vocabulary, vlm, prompts, cfg);
    return r;
}

}  // namespace convad::concepts
