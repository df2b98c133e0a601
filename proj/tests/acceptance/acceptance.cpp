// Acceptance suite: one PASS/FAIL line per primary criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "contracts.hpp"
#include "convad/cbm/losses.hpp"
#include "convad/cbm/train.hpp"
#include "convad/concepts/pipeline.hpp"
#include "convad/intervene/intervene.hpp"
#include "convad/metrics/metrics.hpp"
#include "convad/metrics/report.hpp"
#include "convad/scenarios/split.hpp"
#include "convad/synth/generator.hpp"
#include "convad/vision/student_teacher.hpp"
#include "oracles.hpp"

using namespace convad;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void log(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

struct Outcome {
    bool pass = false;
    std::string detail;
    json values = json::object();
};

/// Datasets and trained models shared by the criteria; everything is built on first use.
class Workbench {
public:
    static constexpr std::uint64_t kDatasetSeed = 0;

    const synth::GeneratedDataset& data() {
        if (!data_) {
            auto cfg = synth::GeneratorConfig::shapes_ad(kDatasetSeed);
            cfg.n_synthetic_per_defect = 25;
            data_ = synth::build_dataset(cfg);
        }
        return *data_;
    }

    const ScenarioSplit& split(const ScenarioKind& kind, std::uint64_t seed) {
        const auto key = std::make_pair(to_string(kind), seed);
        auto it = splits_.find(key);
        if (it == splits_.end())
            it = splits_.emplace(key, scenarios::build_scenario_split(data().samples, data().synthetic, kind, seed))
                     .first;
        return it->second;
    }

    const cbm::TrainedCBM& model(const ScenarioKind& kind, cbm::Paradigm paradigm, std::uint64_t seed) {
        const auto key = std::make_tuple(to_string(kind), cbm::to_string(paradigm), seed);
        if (auto it = models_.find(key); it != models_.end()) return it->second;
        cbm::TrainingConfig cfg;
        cfg.paradigm = paradigm;
        cfg.seed = seed;
        const auto t0 = Clock::now();
        const auto& sp = split(kind, seed);
        // Sequential and independent share the concept extractor of a seed.
        const auto other = std::make_tuple(
            to_string(kind),
            cbm::to_string(paradigm == cbm::Paradigm::kSequential ? cbm::Paradigm::kIndependent
                                                                   : cbm::Paradigm::kSequential),
            seed);
        cbm::TrainResult r;
        if (paradigm != cbm::Paradigm::kJoint && models_.count(other)) {
            const cbm::ExtractorResult reuse{models_.at(other).g, {}};
            r = cbm::train(sp, data().vocabulary, cfg, nullptr, &reuse);
        } else {
            r = cbm::train(sp, data().vocabulary, cfg);
        }
        log("trained " + to_string(kind) + " " + cbm::to_string(paradigm) + " seed " + std::to_string(seed) + " in " +
            fmt(seconds_since(t0), 1) + "s");
        return models_.emplace(key, std::move(r.model)).first->second;
    }

    const vision::StudentTeacher& student(std::uint64_t seed) {
        if (auto it = students_.find(seed); it != students_.end()) return it->second;
        const auto& m = model(ScenarioKind::fully(), cbm::Paradigm::kJoint, seed);
        const auto& sp = split(ScenarioKind::fully(), seed);
        std::vector<Sample> tn, vn;
        for (const auto& s : sp.train)
            if (s.label == 0) tn.push_back(s);
        for (const auto& s : sp.val)
            if (s.label == 0) vn.push_back(s);
        vision::StudentConfig cfg;
        cfg.seed = seed;
        const auto t0 = Clock::now();
        auto r = vision::train_student(vision::StudentTeacher(m.g.backbone, seed), tn, vn, cfg);
        log("trained student seed " + std::to_string(seed) + " in " + fmt(seconds_since(t0), 1) + "s");
        return students_.emplace(seed, std::move(r.model)).first->second;
    }

    static std::string fmt(double v, int digits = 4) {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(digits);
        os << v;
        return os.str();
    }

private:
    std::optional<synth::GeneratedDataset> data_;
    std::map<std::pair<std::string, std::uint64_t>, ScenarioSplit> splits_;
    std::map<std::tuple<std::string, std::string, std::uint64_t>, cbm::TrainedCBM> models_;
    std::map<std::uint64_t, vision::StudentTeacher> students_;
};

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::string join_values(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : "/") + Workbench::fmt(x, 3);
    return s;
}

// ---------------------------------------------------------------------------------------------------------------

Outcome losses(Workbench&) {
    int bad = 0, checks = 0;
    auto expect = [&](double got, double want) {
        ++checks;
        if (std::abs(got - want) > 1e-9) ++bad;
    };
    expect(cbm::weighted_bce(0.0, 0.5, 1.0), std::log(2.0));
    expect(cbm::weighted_bce(1.0, 0.5, 2.0), 2 * std::log(2.0));
    expect(cbm::joint_loss(0.42, std::vector<double>{5, 9}, 0.0), 0.42);
    expect(cbm::joint_loss(1.0, std::vector<double>{1, 1}, 1.0), 1.0);
    expect(cbm::joint_loss(0.6, std::vector<double>{0.1, 0.2, 0.3}, 2.0), 0.257142857142857);
    expect(cbm::imbalance_alpha(std::vector<std::uint8_t>{1, 0, 0, 0}), 3.0);
    expect(cbm::imbalance_alpha(std::vector<std::uint8_t>{1, 1, 0, 0}), 1.0);

    Rng rng(2024);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const int k = uniform_int(rng, 1, 6);
        const double lambda = uniform(rng, 0, 3);
        std::vector<double> logits(k), z(k), alpha(k);
        for (int j = 0; j < k; ++j) {
            logits[j] = uniform(rng, -5, 5);
            z[j] = uniform(rng, 0, 1) < 0.4;
            alpha[j] = uniform(rng, 0.2, 10);
        }
        const double yl = uniform(rng, -5, 5), y = uniform(rng, 0, 1) < 0.5, ay = uniform(rng, 0.2, 10);
        auto total = [&](const std::vector<double>& l, double ylog) {
            std::vector<double> lc(k);
            for (int j = 0; j < k; ++j) lc[j] = cbm::weighted_bce(z[j], sigmoid(l[j]), alpha[j]);
            return cbm::joint_loss(cbm::weighted_bce(y, sigmoid(ylog), ay), lc, lambda);
        };
        const double norm = 1 + lambda * k, h = 1e-5;
        for (int j = 0; j <= k; ++j) {
            double fd, an;
            if (j < k) {
                auto up = logits, dn = logits;
                up[j] += h;
                dn[j] -= h;
                fd = (total(up, yl) - total(dn, yl)) / (2 * h);
                an = lambda * cbm::weighted_bce_grad_logit(z[j], logits[j], alpha[j]) / norm;
            } else {
                fd = (total(logits, yl + h) - total(logits, yl - h)) / (2 * h);
                an = cbm::weighted_bce_grad_logit(y, yl, ay) / norm;
            }
            worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    Outcome o;
    o.pass = bad == 0 && worst <= 1e-4;
    o.detail = std::to_string(checks - bad) + "/" + std::to_string(checks) + " closed forms, max FD rel err " +
               Workbench::fmt(worst * 1e6, 3) + "e-6";
    o.values = {{"closed_form_failures", bad}, {"max_fd_rel_error", worst}};
    return o;
}

Outcome metric_oracles(Workbench&) {
    Rng rng(99);
    int auc_bad = 0, f1_bad = 0;
    for (int t = 0; t < 100; ++t) {
        const int n = uniform_int(rng, 2, 200);
        std::vector<double> s(n);
        std::vector<std::uint8_t> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = std::round(uniform(rng, 0, 1) * 25) / 25;
            y[i] = uniform(rng, 0, 1) < 0.4;
        }
        y[0] = 0;
        y[1] = 1;
        if (metrics::roc_auc(s, y) != oracles::auc(s, y)) ++auc_bad;
        const auto got = metrics::best_f1(s, y), want = oracles::best_f1(s, y);
        if (got.f1 != want.f1 || got.threshold != want.threshold) ++f1_bad;
    }
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
        std::vector<oracles::OwnedMap> maps{oracles::random_map(rng)};
        std::vector<metrics::MapView> views{maps[0].view()};
        worst = std::max(worst, std::abs(metrics::pro(views) - oracles::pro(maps, metrics::kDefaultFprLimit)));
    }
    Outcome o;
    o.pass = auc_bad == 0 && f1_bad == 0 && worst <= 1e-9;
    o.detail = "roc_auc " + std::to_string(100 - auc_bad) + "/100, best_f1 " + std::to_string(100 - f1_bad) +
               "/100 exact, PRO max |diff| " + Workbench::fmt(worst, 12) + " on 50 maps";
    o.values = {{"auc_mismatches", auc_bad}, {"f1_mismatches", f1_bad}, {"pro_max_abs_diff", worst}};
    return o;
}

Outcome detection(Workbench& wb) {
    std::vector<double> iauc, cauc, pauc;
    for (auto seed : kSeeds) {
        const auto& m = wb.model(ScenarioKind::fully(), cbm::Paradigm::kJoint, seed);
        const auto& st = wb.student(seed);
        const auto rep = metrics::evaluate_model(m, &st, wb.split(ScenarioKind::fully(), seed).test);
        iauc.push_back(rep.get("I-AUC"));
        cauc.push_back(rep.get("C-AUC"));
        pauc.push_back(rep.get("P-AUC"));
    }
    Outcome o;
    o.pass = mean(iauc) >= 0.95 && mean(cauc) >= 0.90 && mean(pauc) >= 0.90;
    o.detail = "I-AUC " + Workbench::fmt(mean(iauc), 3) + " (" + join_values(iauc) + ") >= 0.95, C-AUC " +
               Workbench::fmt(mean(cauc), 3) + " (" + join_values(cauc) + ") >= 0.90, P-AUC " +
               Workbench::fmt(mean(pauc), 3) + " (" + join_values(pauc) + ") >= 0.90";
    o.values = {{"I-AUC", iauc}, {"C-AUC", cauc}, {"P-AUC", pauc}};
    return o;
}

double mean_iauc(Workbench& wb, const ScenarioKind& kind, cbm::Paradigm paradigm, std::vector<double>* per_seed) {
    std::vector<double> v;
    for (auto seed : kSeeds) {
        const auto& m = wb.model(kind, paradigm, seed);
        v.push_back(metrics::evaluate_model(m, nullptr, wb.split(kind, seed).test).get("I-AUC"));
    }
    if (per_seed) *per_seed = v;
    return mean(v);
}

Outcome paradigms(Workbench& wb) {
    std::vector<double> j, s, i;
    const double mj = mean_iauc(wb, ScenarioKind::fully(), cbm::Paradigm::kJoint, &j);
    const double ms = mean_iauc(wb, ScenarioKind::fully(), cbm::Paradigm::kSequential, &s);
    const double mi = mean_iauc(wb, ScenarioKind::fully(), cbm::Paradigm::kIndependent, &i);
    Outcome o;
    o.pass = mj >= ms - 0.01 && mj >= mi - 0.01;
    o.detail = "I-AUC joint " + Workbench::fmt(mj, 3) + " (" + join_values(j) + "), sequential " +
               Workbench::fmt(ms, 3) + " (" + join_values(s) + "), independent " + Workbench::fmt(mi, 3) + " (" +
               join_values(i) + "); margin -0.01";
    o.values = {{"joint", j}, {"sequential", s}, {"independent", i}};
    return o;
}

Outcome scenario_ordering(Workbench& wb) {
    std::vector<double> f, w3, w1, ws1;
    const double mf = mean_iauc(wb, ScenarioKind::fully(), cbm::Paradigm::kJoint, &f);
    const double m3 = mean_iauc(wb, ScenarioKind::weakly(3), cbm::Paradigm::kJoint, &w3);
    const double m1 = mean_iauc(wb, ScenarioKind::weakly(1), cbm::Paradigm::kJoint, &w1);
    const double ms = mean_iauc(wb, ScenarioKind::weakly_sag(1), cbm::Paradigm::kJoint, &ws1);
    Outcome o;
    o.pass = mf >= m3 && m3 >= m1 && ms >= m1;
    o.detail = "I-AUC Fully " + Workbench::fmt(mf, 3) + " >= Weakly(3) " + Workbench::fmt(m3, 3) + " >= Weakly(1) " +
               Workbench::fmt(m1, 3) + "; Weakly(1)+SAG " + Workbench::fmt(ms, 3) + " >= Weakly(1)";
    o.values = {{"fully", f}, {"weakly3", w3}, {"weakly1", w1}, {"weakly1+sag", ws1}};
    return o;
}

Outcome intervention(Workbench& wb) {
    // (a) full correction of the independent model equals f on the true bits.
    int exact = 0;
    for (auto seed : kSeeds) {
        const auto& m = wb.model(ScenarioKind::fully(), cbm::Paradigm::kIndependent, seed);
        const auto& test = wb.split(ScenarioKind::fully(), seed).test;
        std::vector<double> truth;
        std::vector<std::uint8_t> labels;
        for (const auto& s : test) {
            truth.push_back(m.label_prob(std::vector<double>(s.concepts.begin(), s.concepts.end())));
            labels.push_back(static_cast<std::uint8_t>(s.label));
        }
        const auto curve = intervene::intervention_curve(m, test, intervene::Ordering::kUcp);
        exact += curve.back().metric == metrics::roc_auc(truth, labels);
    }

    // (b) UCP vs random order on Weakly(1) joint models, pair i = (training seed i, order seed i).
    std::vector<double> ucp, rnd;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto& m = wb.model(ScenarioKind::weakly(1), cbm::Paradigm::kJoint, seed);
        const auto& test = wb.split(ScenarioKind::weakly(1), seed).test;
        std::vector<Prediction> preds;
        for (const auto& s : test) preds.push_back(m.predict(s.image));
        const int k = m.k();
        ucp.push_back(intervene::curve_mean(
            intervene::intervention_curve(m, test, preds, intervene::Ordering::kUcp), 1, k));
        rnd.push_back(intervene::curve_mean(
            intervene::intervention_curve(m, test, preds, intervene::Ordering::kRandom, intervene::CurveMetric::kIAuc,
                                          seed),
            1, k));
    }
    int wins = 0;
    for (std::size_t i = 0; i < ucp.size(); ++i) wins += ucp[i] > rnd[i];
    Outcome o;
    o.pass = exact == static_cast<int>(kSeeds.size()) && mean(ucp) > mean(rnd);
    o.detail = "(a) exact on " + std::to_string(exact) + "/3 independent models; (b) mean I-AUC over budgets 1..k: UCP " +
               Workbench::fmt(mean(ucp), 3) + " vs random " + Workbench::fmt(mean(rnd), 3) + " (UCP ahead on " +
               std::to_string(wins) + "/10 pairs)";
    o.values = {{"exact_models", exact}, {"ucp", ucp}, {"random", rnd}};
    return o;
}

Outcome pipeline(Workbench& wb) {
    const auto& ds = wb.data();
    const auto synonyms = concepts::shapes_ad_synonyms();
    concepts::MockVLMOracle vlm(ds.vocabulary, synonyms);
    concepts::MockEmbedder emb(synonyms);
    concepts::PipelineConfig cfg;
    const auto res = concepts::run_pipeline(ds.samples, ds.samples, vlm, emb, concepts::PromptSet::load_default(), cfg);
    const auto truth = concepts::align_concepts(ds.samples, ds.vocabulary, res.vocabulary);
    const auto report = concepts::evaluate_annotations(res.annotations, truth, res.vocabulary);
    int perfect = 0;
    for (const auto& q : report.concepts)
        perfect += q.accuracy == 1.0 && q.precision.value_or(1.0) == 1.0 && q.recall.value_or(1.0) == 1.0;

    // Random vocabularies: canonical terms, injected synonyms and unrelated terms.
    Rng rng(7);
    std::vector<std::string> canon;
    for (const auto& [c, _] : synonyms) canon.push_back(c);
    int violations = 0;
    for (int t = 0; t < 100; ++t) {
        std::set<std::string> terms;
        for (const auto& [c, syns] : synonyms) {
            if (uniform(rng, 0, 1) < 0.7) terms.insert(c);
            for (const auto& s : syns)
                if (uniform(rng, 0, 1) < 0.5) terms.insert(s);
        }
        for (int e = uniform_int(rng, 0, 10); e > 0; --e) terms.insert("extra term " + std::to_string(uniform_int(rng, 0, 40)));
        if (terms.size() < 2) continue;
        const std::vector<std::string> list(terms.begin(), terms.end());
        concepts::PipelineConfig fc;
        fc.seed = static_cast<std::uint64_t>(t);
        const auto kept = concepts::filter_concepts(list, emb, fc).kept;
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j)
                violations += concepts::cosine_similarity(emb.embed(kept[i]), emb.embed(kept[j])) >
                              fc.similarity_threshold;
    }
    Outcome o;
    o.pass = perfect == static_cast<int>(report.concepts.size()) && !report.concepts.empty() && violations == 0;
    o.detail = std::to_string(perfect) + "/" + std::to_string(report.concepts.size()) +
               " concepts with accuracy/precision/recall 1.0; " + std::to_string(violations) +
               " surviving pairs > 0.9 over 100 random vocabularies";
    o.values = {{"perfect_concepts", perfect}, {"concepts", report.concepts.size()}, {"filter_violations", violations}};
    return o;
}

Outcome generator(Workbench& wb) {
    auto cfg = synth::GeneratorConfig::shapes_ad(Workbench::kDatasetSeed);
    cfg.n_synthetic_per_defect = 25;
    const auto& ds = wb.data();
    const auto preservation = testing::preservation_violations(cfg, ds);
    const bool deterministic = testing::bitwise_equal(ds, synth::build_dataset(cfg));
    int leaks = 0, broken = 0;
    for (const auto& kind : testing::all_scenarios())
        for (auto seed : kSeeds) {
            const auto sp = scenarios::build_scenario_split(ds.samples, ds.synthetic, kind, seed);
            leaks += static_cast<int>(testing::leaked_ids(sp).size());
            broken += static_cast<int>(scenarios::check_split(sp).size());
        }
    Outcome o;
    o.pass = preservation.empty() && deterministic && leaks == 0 && broken == 0;
    o.detail = std::to_string(ds.samples.size() + ds.synthetic.size()) + " samples, " +
               std::to_string(preservation.size()) + " preservation violations, deterministic " +
               (deterministic ? "yes" : "no") + ", " + std::to_string(leaks) + " leaked ids and " +
               std::to_string(broken) + " constraint violations over 6 scenarios x 3 seeds";
    o.values = {{"preservation_violations", preservation.size()}, {"deterministic", deterministic}, {"leaks", leaks}};
    return o;
}

struct Criterion {
    std::string key;
    std::string title;
    double limit_s;
    std::function<Outcome(Workbench&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<std::string> only;
    std::string out = "acceptance.json";
    bool strict = false;
    app.add_option("--only", only, "Run only these criteria (keys)");
    app.add_option("--out", out, "JSON results file");
    app.add_flag("--strict", strict, "Exit nonzero when a criterion fails");
    CLI11_PARSE(app, argc, argv);

    // Cheap criteria first; model-training criteria share the workbench cache.
    const std::vector<Criterion> criteria{
        {"losses", "Loss/alpha correctness", 10, losses},
        {"metrics", "Metric oracles", 60, metric_oracles},
        {"pipeline", "Pipeline fidelity", 60, pipeline},
        {"generator", "Generator contracts", 60, generator},
        {"detection", "Desk-scale detection (Fully, joint, 3 seeds)", 15 * 60, detection},
        {"paradigms", "Paradigm comparison (Fully, 3 seeds)", 30 * 60, paradigms},
        {"scenarios", "Scenario ordering (3 seeds)", 45 * 60, scenario_ordering},
        {"intervention", "Intervention exactness and UCP gain", 10 * 60, intervention},
    };

    Workbench wb;
    json results = json::array();
    int failed = 0, ran = 0;
    std::vector<std::string> lines;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.key) == only.end()) continue;
        log("running " + c.key);
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run(wb);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("error: ") + e.what();
        }
        const double secs = seconds_since(t0);
        const bool in_time = secs < c.limit_s;
        const bool pass = o.pass && in_time;
        ++ran;
        failed += !pass;
        std::string line = std::string(pass ? "PASS" : "FAIL") + "  " + c.title + ": " + o.detail + "; runtime " +
                           Workbench::fmt(secs, 1) + "s (limit " + Workbench::fmt(c.limit_s, 0) + "s" +
                           (in_time ? "" : ", exceeded") + ")";
        std::cout << line << std::endl;
        lines.push_back(line);
        results.push_back({{"criterion", c.key},
                           {"title", c.title},
                           {"pass", pass},
                           {"values_pass", o.pass},
                           {"seconds", secs},
                           {"limit_seconds", c.limit_s},
                           {"detail", o.detail},
                           {"values", o.values}});
    }
    std::cout << "\nSummary: " << ran - failed << "/" << ran << " criteria passed\n";
    for (const auto& l : lines) std::cout << "  " << l.substr(0, 4) << "  " << l.substr(6, l.find(':') - 6) << "\n";
    std::ofstream(out) << results.dump(2) << "\n";
    return strict && failed ? 1 : 0;
}
