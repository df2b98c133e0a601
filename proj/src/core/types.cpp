#include "convad/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace convad {

Image::Image(std::string id_, int h, int w, std::array<float, 3> fill)
    : id(std::move(id_)), height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3) {
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        pixels[i * 3 + 0] = fill[0];
        pixels[i * 3 + 1] = fill[1];
        pixels[i * 3 + 2] = fill[2];
    }
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

std::string to_string(ConceptKind kind) { return kind == ConceptKind::kNormal ? "normal" : "anomaly"; }

ConceptKind concept_kind_from_string(const std::string& s) {
    if (s == "normal") return ConceptKind::kNormal;
    if (s == "anomaly") return ConceptKind::kAnomaly;
    throw std::invalid_argument("unknown concept kind: " + s);
}

ConceptVocabulary::ConceptVocabulary(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
    if (concepts_.size() < 2) throw std::invalid_argument("vocabulary needs at least 2 concepts");
    std::set<std::string> seen;
    bool has_normal = false;
    bool has_anomaly = false;
    for (const auto& c : concepts_) {
        if (c.name.empty()) throw std::invalid_argument("vocabulary contains an empty concept name");
        if (!seen.insert(c.name).second) throw std::invalid_argument("duplicate concept name: " + c.name);
        has_normal |= c.kind == ConceptKind::kNormal;
        has_anomaly |= c.kind == ConceptKind::kAnomaly;
    }
    if (!has_normal || !has_anomaly)
        throw std::invalid_argument("vocabulary needs at least one normal and one anomaly concept");
}

ConceptVocabulary ConceptVocabulary::unchecked(std::vector<Concept> concepts) {
    ConceptVocabulary v;
    v.concepts_ = std::move(concepts);
    return v;
}

std::optional<std::size_t> ConceptVocabulary::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < concepts_.size(); ++i)
        if (concepts_[i].name == name) return i;
    return std::nullopt;
}

std::vector<std::size_t> ConceptVocabulary::indices_of(ConceptKind kind) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < concepts_.size(); ++i)
        if (concepts_[i].kind == kind) out.push_back(i);
    return out;
}

std::vector<std::string> ConceptVocabulary::names() const {
    std::vector<std::string> out;
    out.reserve(concepts_.size());
    for (const auto& c : concepts_) out.push_back(c.name);
    return out;
}

std::string to_string(Origin origin) { return origin == Origin::kReal ? "real" : "synthetic"; }

Origin origin_from_string(const std::string& s) {
    if (s == "real") return Origin::kReal;
    if (s == "synthetic") return Origin::kSynthetic;
    throw std::invalid_argument("unknown origin: " + s);
}

std::string to_string(Subset subset) { return subset == Subset::kTrain ? "train" : "test"; }

Subset subset_from_string(const std::string& s) {
    if (s == "train") return Subset::kTrain;
    if (s == "test") return Subset::kTest;
    throw std::invalid_argument("unknown subset: " + s);
}

std::string to_string(const ScenarioKind& kind) {
    switch (kind.base) {
        case ScenarioKind::Base::kFully: return "fully";
        case ScenarioKind::Base::kWeakly: return "weakly" + std::to_string(kind.shots);
        case ScenarioKind::Base::kSag: return "sag";
        case ScenarioKind::Base::kWeaklySag: return "weakly" + std::to_string(kind.shots) + "+sag";
    }
    return "?";
}

ScenarioKind scenario_from_string(const std::string& raw) {
    std::string s;
    for (char ch : raw)
        if (ch != ' ' && ch != '(' && ch != ')') s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (s == "fully") return ScenarioKind::fully();
    if (s == "sag") return ScenarioKind::sag();
    const bool with_sag = s.size() > 4 && s.ends_with("+sag");
    if (with_sag) s = s.substr(0, s.size() - 4);
    if (s.starts_with("weakly")) {
        const std::string digits = s.substr(6);
        int n = 1;
        if (!digits.empty()) {
            if (!std::all_of(digits.begin(), digits.end(), ::isdigit))
                throw std::invalid_argument("bad scenario: " + raw);
            n = std::stoi(digits);
        }
        if (n < 1) throw std::invalid_argument("weakly scenarios need n >= 1: " + raw);
        return with_sag ? ScenarioKind::weakly_sag(n) : ScenarioKind::weakly(n);
    }
    throw std::invalid_argument("unknown scenario: " + raw);
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<std::string> validate_sample(const Sample& s, const ConceptVocabulary& vocab) {
    std::vector<std::string> v;
    const auto& img = s.image;
    if (img.height <= 0 || img.width <= 0) v.emplace_back("image dimensions not positive");
    if (img.pixels.size() != img.pixel_count() * 3) v.emplace_back("pixel buffer size mismatch");
    for (float p : img.pixels) {
        if (!(p >= 0.f && p <= 1.f)) {
            v.emplace_back("pixel value outside [0,1]");
            break;
        }
    }
    if (s.label != 0 && s.label != 1) v.emplace_back("label not binary");
    if (s.concepts.size() != vocab.size()) v.emplace_back("length mismatch");
    for (auto b : s.concepts) {
        if (b > 1) {
            v.emplace_back("concept entry not binary");
            break;
        }
    }
    if (s.label == 0) {
        if (s.mask && s.mask->count() > 0) v.emplace_back("normal sample has nonzero mask");
        if (s.defect_type) v.emplace_back("normal sample has defect_type");
    }
    if (s.label == 1 && !s.defect_type) v.emplace_back("defect_type absent");
    if (s.mask && (s.mask->height != img.height || s.mask->width != img.width))
        v.emplace_back("mask shape mismatch");
    return v;
}

}  // namespace convad
