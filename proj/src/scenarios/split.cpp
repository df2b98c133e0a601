#include "convad/scenarios/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "convad/core/random.hpp"

namespace convad::scenarios {
namespace {

std::string defect_of(const Sample& s) { return s.defect_type.value_or(""); }

// Stratified carve of floor(fraction * stratum) samples per (label, defect_type, origin).
void carve_validation(ScenarioSplit& split, double fraction, std::uint64_t seed) {
    std::map<std::tuple<int, std::string, int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const auto& s = split.train[i];
        strata[{s.label, defect_of(s), static_cast<int>(s.origin)}].push_back(i);
    }
    std::vector<bool> to_val(split.train.size(), false);
    for (auto& [key, idx] : strata) {
        Rng rng(derive_seed(seed, fnv1a("val"), static_cast<std::uint64_t>(std::get<0>(key)),
                            fnv1a(std::get<1>(key)), static_cast<std::uint64_t>(std::get<2>(key))));
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
        for (std::size_t i = 0; i < n; ++i) to_val[idx[i]] = true;
    }
    std::vector<Sample> train;
    for (std::size_t i = 0; i < split.train.size(); ++i)
        (to_val[i] ? split.val : train).push_back(std::move(split.train[i]));
    split.train = std::move(train);
}

}  // namespace

ScenarioSplit build_scenario_split(std::span<const Sample> pool, std::span<const Sample> synthetic,
                                   const ScenarioKind& kind, std::uint64_t seed, double val_fraction) {
    if (kind.is_weakly() && kind.shots < 1) throw std::invalid_argument("weakly scenarios need at least one shot");
    if (kind.uses_synthetic() && synthetic.empty())
        throw std::invalid_argument(to_string(kind) + " needs synthetic anomalies");

    ScenarioSplit split;
    split.scenario = kind;
    split.seed = seed;

    std::map<std::string, std::vector<const Sample*>> by_defect;
    for (const auto& s : pool) {
        if (s.origin != Origin::kReal) throw std::invalid_argument("pool sample " + s.id() + " is not real");
        if (s.label == 0)
            (s.subset == Subset::kTrain ? split.train : split.test).push_back(s);
        else
            by_defect[defect_of(s)].push_back(&s);
    }

    for (auto& [defect, members] : by_defect) {
        Rng rng(derive_seed(seed, fnv1a("anomalies"), fnv1a(defect)));
        std::shuffle(members.begin(), members.end(), rng);
        std::size_t n_train = 0;
        switch (kind.base) {
            case ScenarioKind::Base::kFully:
                n_train = static_cast<std::size_t>(std::llround(kFullyTrainFraction * static_cast<double>(members.size())));
                break;
            case ScenarioKind::Base::kWeakly:
            case ScenarioKind::Base::kWeaklySag:
                if (members.size() < static_cast<std::size_t>(kind.shots))
                    throw std::invalid_argument("defect type '" + defect + "' has " + std::to_string(members.size()) +
                                                " anomalies, fewer than " + std::to_string(kind.shots));
                n_train = static_cast<std::size_t>(kind.shots);
                break;
            case ScenarioKind::Base::kSag:
                n_train = 0;
                break;
        }
        for (std::size_t i = 0; i < members.size(); ++i) (i < n_train ? split.train : split.test).push_back(*members[i]);
    }
    if (kind.uses_synthetic())
        for (const auto& s : synthetic) {
            if (s.origin != Origin::kSynthetic) throw std::invalid_argument("sample " + s.id() + " is not synthetic");
            split.train.push_back(s);
        }

    carve_validation(split, val_fraction, seed);
    const auto problems = check_split(split);
    if (!problems.empty()) throw std::logic_error("inconsistent split: " + problems.front());
    return split;
}

std::vector<std::string> check_split(const ScenarioSplit& split) {
    std::vector<std::string> out;
    std::set<std::string> fit_ids;
    for (const auto* part : {&split.train, &split.val})
        for (const auto& s : *part) fit_ids.insert(s.id());
    for (const auto& s : split.test) {
        if (s.origin != Origin::kReal) out.push_back("synthetic sample " + s.id() + " in test");
        if (fit_ids.count(s.id())) out.push_back("sample " + s.id() + " in both train and test");
    }
    const auto& kind = split.scenario;
    std::map<std::string, int> real_train;
    for (const auto* part : {&split.train, &split.val})
        for (const auto& s : *part) {
            if (s.label == 1 && s.origin == Origin::kReal) ++real_train[defect_of(s)];
            if (s.origin == Origin::kSynthetic && !kind.uses_synthetic())
                out.push_back("synthetic sample " + s.id() + " in a scenario without SAG");
        }
    if (kind.base == ScenarioKind::Base::kSag && !real_train.empty())
        out.push_back("real anomalies in SAG training data");
    if (kind.is_weakly())
        for (const auto& [d, n] : real_train)
            if (n != kind.shots)
                out.push_back("defect type '" + d + "' has " + std::to_string(n) + " real training anomalies");
    return out;
}

}  // namespace convad::scenarios
