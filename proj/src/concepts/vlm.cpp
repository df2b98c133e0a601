#include "convad/concepts/vlm.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "convad/core/random.hpp"

namespace convad::concepts {
namespace {

std::map<std::string, std::string> invert(const SynonymTable& table) {
    std::map<std::string, std::string> out;
    for (const auto& [canon, syns] : table) {
        out[canon] = canon;
        for (const auto& s : syns) {
            auto [it, inserted] = out.emplace(s, canon);
            if (!inserted && it->second != canon)
                throw std::invalid_argument("synonym '" + s + "' listed under two canonical terms");
        }
    }
    return out;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read prompt " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> gaussian_unit(std::uint64_t seed, int dim) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0;
    for (auto& x : v) {
        x = n(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

}  // namespace

SynonymTable shapes_ad_synonyms() {
    return {
        {"uniform surface", {"even surface"}},
        {"intact contour", {"unbroken contour"}},
        {"consistent color", {"steady color"}},
        {"linear mark", {"line mark", "straight mark"}},
        {"bright streak", {"light streak"}},
        {"branching fracture", {"forked fracture"}},
        {"dark fissure", {"dark crevice"}},
        {"circular void", {"round void"}},
        {"exposed background", {"visible background"}},
        {"sharp rim", {"crisp rim"}},
        {"discoloration", {"color change"}},
        {"irregular blob", {"uneven blob"}},
    };
}

MockVLMOracle::MockVLMOracle(ConceptVocabulary truth_vocabulary, SynonymTable synonyms, double noise_rate,
                             std::uint64_t seed)
    : vocab_(std::move(truth_vocabulary)), synonyms_(std::move(synonyms)), noise_rate_(noise_rate), seed_(seed) {
    if (noise_rate < 0 || noise_rate >= 1) throw std::invalid_argument("noise_rate must be in [0,1)");
    to_canonical_ = invert(synonyms_);
}

void MockVLMOracle::record(std::string entry) {
    std::lock_guard lock(mu_);
    trace_.push_back(std::move(entry));
}

std::vector<std::string> MockVLMOracle::trace() const {
    std::lock_guard lock(mu_);
    return trace_;
}

std::string MockVLMOracle::canonical(const std::string& term) const {
    auto it = to_canonical_.find(term);
    return it == to_canonical_.end() ? term : it->second;
}

std::vector<std::string> MockVLMOracle::present_names(const Sample& sample) const {
    if (sample.concepts.size() != vocab_.size())
        throw std::invalid_argument("sample " + sample.id() + " is not aligned with the oracle vocabulary");
    std::vector<std::string> out;
    for (auto kind : {ConceptKind::kAnomaly, ConceptKind::kNormal})
        for (auto j : vocab_.indices_of(kind))
            if (sample.concepts[j]) out.push_back(vocab_[j].name);
    return out;
}

std::string MockVLMOracle::describe(const Sample& sample, const std::string&) {
    record("describe:" + sample.id());
    std::string text = "A " + (sample.category.empty() ? std::string("object") : sample.category) + " showing";
    const auto names = present_names(sample);
    for (std::size_t i = 0; i < names.size(); ++i) text += (i ? ", " : " ") + names[i];
    return text + ".";
}

std::vector<std::string> MockVLMOracle::extract_concepts(const Sample& sample, const std::string&) {
    record("extract:" + sample.id());
    auto names = present_names(sample);
    if (names.size() > kMaxConceptsPerImage) names.resize(kMaxConceptsPerImage);
    const std::uint64_t id_hash = fnv1a(sample.id());
    for (auto& name : names) {
        const std::uint64_t h = derive_seed(seed_, id_hash, fnv1a(name));
        if (noise_rate_ > 0 && hash_unit(derive_seed(h, 1)) < noise_rate_) {
            name = vocab_[static_cast<std::size_t>(hash_unit(derive_seed(h, 2)) * vocab_.size())].name;
            continue;
        }
        auto syn = synonyms_.find(name);
        if (syn == synonyms_.end() || syn->second.empty() || hash_unit(derive_seed(h, 3)) < 0.5) continue;
        const auto& options = syn->second;
        name = options[static_cast<std::size_t>(hash_unit(derive_seed(h, 4)) * options.size())];
    }
    return names;
}

std::vector<ConceptGroup> MockVLMOracle::group_concepts(const std::vector<std::string>& terms, const std::string&) {
    record("group");
    std::vector<ConceptGroup> groups;
    std::map<std::string, std::size_t> at;
    for (const auto& t : terms) {
        const auto c = canonical(t);
        auto [it, inserted] = at.emplace(c, groups.size());
        if (inserted) groups.push_back({c, {}});
        auto& members = groups[it->second].members;
        if (std::find(members.begin(), members.end(), t) == members.end()) members.push_back(t);
    }
    return groups;
}

std::map<std::string, bool> MockVLMOracle::annotate(const Sample& sample, const std::vector<std::string>& vocabulary,
                                                    const std::string&) {
    record("annotate:" + sample.id());
    const auto present = present_names(sample);
    std::map<std::string, bool> out;
    const std::uint64_t id_hash = fnv1a(sample.id());
    for (const auto& name : vocabulary) {
        const auto c = canonical(name);
        bool v = std::find(present.begin(), present.end(), c) != present.end();
        if (noise_rate_ > 0 && hash_unit(derive_seed(seed_, 0xa770, id_hash, fnv1a(name))) < noise_rate_) v = !v;
        out[name] = v;
    }
    return out;
}

MockEmbedder::MockEmbedder(SynonymTable synonyms, int dim, double epsilon, std::uint64_t seed)
    : to_canonical_(invert(synonyms)), dim_(dim), epsilon_(epsilon), seed_(seed) {
    if (dim < 2) throw std::invalid_argument("embedding dimension must be >= 2");
    if (epsilon < 0 || epsilon >= 1) throw std::invalid_argument("epsilon must be in [0,1)");
}

std::vector<double> MockEmbedder::embed(const std::string& term) {
    auto it = to_canonical_.find(term);
    const std::string& canon = it == to_canonical_.end() ? term : it->second;
    auto v = gaussian_unit(derive_seed(seed_, fnv1a(canon)), dim_);
    if (canon == term) return v;
    const auto noise = gaussian_unit(derive_seed(seed_, fnv1a(term), 1), dim_);
    double norm = 0;
    for (int i = 0; i < dim_; ++i) {
        v[i] += epsilon_ * noise[i];
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    return {read_text(dir / "describe.txt"), read_text(dir / "extract.txt"), read_text(dir / "group.txt"),
            read_text(dir / "annotate.txt")};
}

PromptSet PromptSet::load_default() {
#ifdef CONVAD_PROMPT_DIR
    return load(CONVAD_PROMPT_DIR);
#else
    return load("prompts");
#endif
}

std::string PromptSet::render(const std::string& tmpl, const std::map<std::string, std::string>& values) {
    static const std::regex placeholder(R"(\{([a-z_]+)\})");
    std::string out;
    auto last = tmpl.cbegin();
    for (std::sregex_iterator it(tmpl.begin(), tmpl.end(), placeholder), end; it != end; ++it) {
        const auto& m = *it;
        auto v = values.find(m[1].str());
        if (v == values.end()) throw std::invalid_argument("prompt placeholder {" + m[1].str() + "} has no value");
        out.append(last, m[0].first);
        out += v->second;
        last = m[0].second;
    }
    out.append(last, tmpl.cend());
    return out;
}

std::map<std::string, std::string> prompt_context(const Sample& sample) {
    return {{"object_category", sample.category.empty() ? "object" : sample.category},
            {"defect_type", sample.defect_type.value_or("none")},
            {"label", sample.label ? "anomalous" : "normal"}};
}

}  // namespace convad::concepts
