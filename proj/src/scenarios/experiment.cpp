#include "convad/scenarios/experiment.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "convad/cbm/train.hpp"
#include "convad/core/dataset_io.hpp"
#include "convad/scenarios/split.hpp"
#include "convad/synth/generator.hpp"

namespace convad::scenarios {
namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

const std::vector<std::string> kCsvColumns = {"C-AUC", "I-AUC", "I-F1", "P-AUC", "P-F1", "PRO", "C-F1"};

}  // namespace

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.dataset = j.value("dataset", c.dataset);
    c.dataset_seed = j.value("dataset_seed", c.dataset_seed);
    c.n_synthetic_per_defect = j.value("n_synthetic_per_defect", c.n_synthetic_per_defect);
    if (j.contains("scenarios")) {
        c.scenarios.clear();
        for (const auto& s : j.at("scenarios")) c.scenarios.push_back(scenario_from_string(s.get<std::string>()));
    }
    if (j.contains("seeds")) {
        c.seeds = j.at("seeds").is_number() ? std::vector<std::uint64_t>{}
                                             : j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.at("seeds").is_number())
            for (int s = 0; s < j.at("seeds").get<int>(); ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (j.contains("training")) c.training = j.at("training").get<cbm::TrainingConfig>();
    if (j.contains("paradigm")) c.training.paradigm = cbm::paradigm_from_string(j.at("paradigm").get<std::string>());
    if (j.contains("lambda")) c.training.lambda_tradeoff = j.at("lambda").get<double>();
    if (j.contains("augmentation")) c.training.augmentation = j.at("augmentation").get<AugmentationPolicy>();
    c.visual = j.value("visual", c.visual);
    if (j.contains("student")) c.student = j.at("student").get<vision::StudentConfig>();
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        c.evaluation.flattened_concepts = e.value("flattened_concepts", c.evaluation.flattened_concepts);
        c.evaluation.fpr_limit = e.value("fpr_limit", c.evaluation.fpr_limit);
        c.evaluation.per_category = e.value("per_category", c.evaluation.per_category);
    }
    if (c.scenarios.empty()) throw std::invalid_argument("experiment needs at least one scenario");
    if (c.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    std::vector<std::string> scen;
    for (const auto& s : c.scenarios) scen.push_back(to_string(s));
    j = {{"dataset", c.dataset},
         {"dataset_seed", c.dataset_seed},
         {"n_synthetic_per_defect", c.n_synthetic_per_defect},
         {"scenarios", scen},
         {"seeds", c.seeds},
         {"training", c.training},
         {"visual", c.visual},
         {"student", c.student},
         {"evaluation",
          {{"flattened_concepts", c.evaluation.flattened_concepts},
           {"fpr_limit", c.evaluation.fpr_limit},
           {"per_category", c.evaluation.per_category}}}};
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData d;
    if (cfg.dataset == "shapes_ad") {
        auto g = synth::GeneratorConfig::shapes_ad(cfg.dataset_seed);
        g.n_synthetic_per_defect = cfg.n_synthetic_per_defect;
        auto ds = synth::build_dataset(g);
        d.vocabulary = std::move(ds.vocabulary);
        d.pool = std::move(ds.samples);
        d.synthetic = std::move(ds.synthetic);
        return d;
    }
    auto ds = load_dataset(cfg.dataset);
    if (ds.vocabulary.empty()) throw std::invalid_argument(cfg.dataset + " carries no concept annotations");
    d.vocabulary = std::move(ds.vocabulary);
    for (auto& s : ds.samples) (s.origin == Origin::kSynthetic ? d.synthetic : d.pool).push_back(std::move(s));
    return d;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir,
                                const ProgressFn& progress) {
    const ExperimentData data = load_experiment_data(cfg);
    ExperimentReport report;
    for (const auto& kind : cfg.scenarios) {
        std::vector<metrics::EvaluationReport> ok;
        for (auto seed : cfg.seeds) {
            CellResult cell{kind, seed, std::nullopt, {}, 0};
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const auto split = build_scenario_split(data.pool, data.synthetic, kind, seed);
                auto tc = cfg.training;
                tc.seed = seed;
                auto trained = cbm::train(split, data.vocabulary, tc);
                std::optional<vision::StudentTeacher> st;
                if (cfg.visual) {
                    std::vector<Sample> tn, vn;
                    for (const auto& s : split.train)
                        if (!s.label) tn.push_back(s);
                    for (const auto& s : split.val)
                        if (!s.label) vn.push_back(s);
                    auto sc = cfg.student;
                    sc.seed = seed;
                    st = vision::train_student(vision::StudentTeacher(trained.model.g.backbone, seed), tn, vn, sc)
                             .model;
                }
                cell.report = metrics::evaluate_model(trained.model, st ? &*st : nullptr, split.test, cfg.evaluation);
                ok.push_back(*cell.report);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (out_dir) {
                nlohmann::json j = {{"scenario", to_string(kind)}, {"seed", seed}, {"seconds", cell.seconds}};
                if (cell.report)
                    j["report"] = cell.report->to_json();
                else
                    j["error"] = cell.error;
                write_text(*out_dir / to_string(kind) / ("seed" + std::to_string(seed)) / "report.json", j.dump(2));
            }
            if (progress) progress(cell);
            report.cells.push_back(std::move(cell));
        }
        report.rows.emplace_back(to_string(kind), metrics::mean_over_seeds(ok));
    }
    if (out_dir) {
        nlohmann::json j = report.to_json();
        j["config"] = cfg;
        write_text(*out_dir / "results.json", j.dump(2));
        write_text(*out_dir / "results.csv", report.to_csv());
    }
    return report;
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json j;
    auto cells_j = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json e = {{"scenario", to_string(c.scenario)}, {"seed", c.seed}, {"seconds", c.seconds}};
        if (c.report)
            e["metrics"] = metrics::to_json(c.report->overall);
        else
            e["error"] = c.error;
        cells_j.push_back(std::move(e));
    }
    j["cells"] = cells_j;
    nlohmann::json table = nlohmann::json::object();
    for (const auto& [name, t] : rows) table[name] = metrics::to_json(t);
    j["table"] = table;
    return j;
}

std::string ExperimentReport::to_csv() const {
    std::ostringstream out;
    out.precision(6);
    out << "scenario";
    for (const auto& c : kCsvColumns) out << ',' << c;
    out << ",failed_cells\n";
    for (const auto& [name, t] : rows) {
        out << name;
        for (const auto& c : kCsvColumns) {
            out << ',';
            if (auto it = t.find(c); it != t.end() && it->second.value) out << *it->second.value;
        }
        int failed = 0;
        for (const auto& cell : cells)
            if (to_string(cell.scenario) == name && !cell.report) ++failed;
        out << ',' << failed << '\n';
    }
    return out.str();
}

}  // namespace convad::scenarios
