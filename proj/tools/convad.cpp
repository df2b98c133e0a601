#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "convad/cbm/export.hpp"
#include "convad/cbm/train.hpp"
#include "convad/concepts/http_clients.hpp"
#include "convad/concepts/pipeline.hpp"
#include "convad/core/dataset_io.hpp"
#include "convad/core/png_io.hpp"
#include "convad/intervene/intervene.hpp"
#include "convad/metrics/report.hpp"
#include "convad/scenarios/experiment.hpp"
#include "convad/scenarios/split.hpp"
#include "convad/server/http_server.hpp"
#include "convad/synth/generator.hpp"
#include "convad/vision/student_teacher.hpp"

using namespace convad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

void log(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

struct DataArgs {
    std::string dataset = "shapes_ad";
    std::uint64_t dataset_seed = 0;
    int n_synthetic = 25;
    std::string scenario = "fully";
    std::uint64_t seed = 0;

    void add(CLI::App* cmd, bool with_split) {
        cmd->add_option("--dataset", dataset, "Dataset directory, concept file, or shapes_ad")->capture_default_str();
        cmd->add_option("--dataset-seed", dataset_seed, "Generator seed for shapes_ad")->capture_default_str();
        cmd->add_option("--synthetic", n_synthetic, "Synthetic anomalies per defect type for shapes_ad")
            ->capture_default_str();
        if (with_split) {
            cmd->add_option("--scenario", scenario, "fully|weakly1|weakly3|sag|weakly1+sag|weakly3+sag")
                ->capture_default_str();
            cmd->add_option("--seed", seed, "Split and training seed")->capture_default_str();
        }
    }

    /// Fills fields the user left at their defaults from a checkpoint's metadata.
    void inherit(const json& meta, const CLI::App* cmd) {
        auto take = [&](const char* flag, const char* key, auto& field) {
            if (cmd->count(flag) == 0 && meta.contains(key)) meta.at(key).get_to(field);
        };
        take("--dataset", "dataset", dataset);
        take("--dataset-seed", "dataset_seed", dataset_seed);
        take("--synthetic", "n_synthetic_per_defect", n_synthetic);
        take("--scenario", "scenario", scenario);
        take("--seed", "seed", seed);
    }

    [[nodiscard]] scenarios::ExperimentData load() const {
        scenarios::ExperimentConfig c;
        c.dataset = dataset;
        c.dataset_seed = dataset_seed;
        c.n_synthetic_per_defect = n_synthetic;
        return scenarios::load_experiment_data(c);
    }

    [[nodiscard]] ScenarioSplit split(const scenarios::ExperimentData& d) const {
        return scenarios::build_scenario_split(d.pool, d.synthetic, scenario_from_string(scenario), seed);
    }

    [[nodiscard]] json metadata() const {
        return {{"dataset", dataset},
                {"dataset_seed", dataset_seed},
                {"n_synthetic_per_defect", n_synthetic},
                {"scenario", scenario},
                {"seed", seed}};
    }
};

std::vector<Sample> normals_of(std::span<const Sample> samples) {
    std::vector<Sample> out;
    for (const auto& s : samples)
        if (!s.label) out.push_back(s);
    return out;
}

int cmd_generate(const std::string& config, const fs::path& out, std::uint64_t seed, int n_synthetic) {
    auto cfg = synth::GeneratorConfig::shapes_ad(seed);
    if (!config.empty()) cfg = read_json(config).get<synth::GeneratorConfig>();
    if (n_synthetic >= 0) cfg.n_synthetic_per_defect = n_synthetic;
    auto ds = synth::build_dataset(cfg);
    Dataset out_ds{ds.vocabulary, ds.samples};
    out_ds.samples.insert(out_ds.samples.end(), ds.synthetic.begin(), ds.synthetic.end());
    save_dataset(out, out_ds);
    write_text(out / "generator.json", json(cfg).dump(2));
    log("wrote " + std::to_string(out_ds.samples.size()) + " samples to " + out.string());
    return 0;
}

int cmd_annotate(const fs::path& dataset_path, const std::string& vlm_kind, const fs::path& out, double noise,
                 const std::string& prompts_dir, const std::string& config, const std::string& report_path) {
    Dataset ds = load_dataset(dataset_path);
    concepts::PipelineConfig cfg;
    if (!config.empty()) cfg = read_json(config).get<concepts::PipelineConfig>();
    const auto prompts = prompts_dir.empty() ? concepts::PromptSet::load_default() : concepts::PromptSet::load(prompts_dir);

    std::unique_ptr<concepts::VLMClient> vlm;
    std::unique_ptr<concepts::TextEmbedder> embedder;
    if (vlm_kind == "mock") {
        if (ds.vocabulary.empty()) throw std::runtime_error("the mock VLM needs a dataset with ground-truth concepts");
        const auto syn = concepts::shapes_ad_synonyms();
        vlm = std::make_unique<concepts::MockVLMOracle>(ds.vocabulary, syn, noise, cfg.seed);
        embedder = std::make_unique<concepts::MockEmbedder>(syn, 64, 0.15, cfg.seed);
    } else if (vlm_kind == "http") {
        vlm = concepts::HttpVLMClient::from_env();
        embedder = concepts::HttpTextEmbedder::from_env();
    } else {
        throw std::invalid_argument("--vlm must be mock or http");
    }

    std::vector<Sample> pool;
    for (const auto& s : ds.samples)
        if (s.origin == Origin::kReal) pool.push_back(s);
    const auto result = concepts::run_pipeline(pool, ds.samples, *vlm, *embedder, prompts, cfg);

    json report = result.to_json(ds.samples);
    if (!ds.vocabulary.empty()) {
        try {
            const auto truth = concepts::align_concepts(ds.samples, ds.vocabulary, result.vocabulary);
            report["quality"] = concepts::evaluate_annotations(result.annotations, truth, result.vocabulary).to_json();
        } catch (const std::invalid_argument& e) {
            report["quality"] = {{"skipped", e.what()}};
        }
    }
    Dataset annotated{result.vocabulary, ds.samples};
    for (std::size_t i = 0; i < annotated.samples.size(); ++i) annotated.samples[i].concepts = result.annotations[i];
    const fs::path root = fs::is_regular_file(dataset_path) ? dataset_path.parent_path() : dataset_path;
    write_concept_file(out, root, annotated);
    write_text(report_path.empty() ? fs::path(out).replace_extension(".pipeline.json") : fs::path(report_path),
               report.dump(2));
    log("vocabulary of " + std::to_string(result.vocabulary.size()) + " concepts written to " + out.string());
    return 0;
}

int cmd_train(DataArgs data, const std::string& config, const std::string& paradigm, double lambda,
              const fs::path& out, const std::string& history, const std::string& logits_csv) {
    cbm::TrainingConfig cfg;
    if (!config.empty()) cfg = read_json(config).get<cbm::TrainingConfig>();
    if (!paradigm.empty()) cfg.paradigm = cbm::paradigm_from_string(paradigm);
    if (lambda >= 0) cfg.lambda_tradeoff = lambda;
    cfg.seed = data.seed;
    const auto d = data.load();
    const auto split = data.split(d);
    log("training " + cbm::to_string(cfg.paradigm) + " on " + data.scenario + ": " + std::to_string(split.train.size()) +
        " train / " + std::to_string(split.val.size()) + " val / " + std::to_string(split.test.size()) + " test");
    auto r = cbm::train(split, d.vocabulary, cfg);
    r.model.metadata = data.metadata();
    r.model.save(out);
    if (!history.empty()) {
        auto h = [](const nn::FitHistory& fh) {
            return json{{"train_loss", fh.train_loss},
                        {"val_loss", fh.val_loss},
                        {"best_epoch", fh.best_epoch},
                        {"early_stopped", fh.early_stopped}};
        };
        write_text(history, json{{"concepts", h(r.concept_history)}, {"label", h(r.label_history)}}.dump(2));
    }
    if (!logits_csv.empty()) {
        std::vector<Sample> rows(split.train.begin(), split.train.end());
        rows.insert(rows.end(), split.test.begin(), split.test.end());
        write_text(logits_csv, cbm::export_concept_logits(r.model, rows).to_csv(d.vocabulary));
    }
    log("saved " + out.string());
    return 0;
}

int cmd_train_visual(DataArgs data, const CLI::App* cmd, const fs::path& model_path, const std::string& teacher,
                     const std::string& config, const fs::path& out) {
    const auto model = cbm::TrainedCBM::load(model_path);
    data.inherit(model.metadata, cmd);
    vision::StudentConfig sc;
    if (!config.empty()) sc = read_json(config).get<vision::StudentConfig>();
    sc.seed = data.seed;
    const auto d = data.load();
    const auto split = data.split(d);
    const auto train_normals = normals_of(split.train);
    nn::ConvBackbone t;
    if (teacher == "concept")
        t = model.g.backbone;
    else if (teacher == "pretrain")
        t = cbm::pretrain_backbone(train_normals, model.config);
    else
        throw std::invalid_argument("--teacher must be concept or pretrain");
    auto r = vision::train_student(vision::StudentTeacher(std::move(t), data.seed), train_normals,
                                   normals_of(split.val), sc);
    r.model.save(out);
    log("student trained for " + std::to_string(r.history.val_loss.size()) + " epochs, saved " + out.string());
    return 0;
}

int cmd_intervene(DataArgs data, const CLI::App* cmd, const fs::path& model_path, const std::string& policy,
                  const std::string& metric, std::uint64_t order_seed, const fs::path& out) {
    const auto model = cbm::TrainedCBM::load(model_path);
    data.inherit(model.metadata, cmd);
    const auto d = data.load();
    const auto split = data.split(d);
    const auto m = intervene::curve_metric_from_string(metric);
    const auto curve =
        intervene::intervention_curve(model, split.test, intervene::ordering_from_string(policy), m, order_seed);
    json j = json::array();
    for (const auto& p : curve)
        j.push_back({{"budget", p.budget},
                     {"metric", p.metric},
                     {"metric_name", intervene::to_string(m)},
                     {"n_samples", split.test.size()}});
    write_text(out, j.dump(2));
    for (const auto& p : curve) std::printf("%2d  %.4f\n", p.budget, p.metric);
    return 0;
}

void write_maps(const fs::path& dir, std::span<const Sample> samples, const vision::StudentTeacher& st) {
    fs::create_directories(dir);
    json index = json::object();
    for (const auto& s : samples) {
        const auto m = st.anomaly_map(s.image);
        const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
        std::vector<std::uint8_t> gray(m.values.size());
        for (std::size_t i = 0; i < gray.size(); ++i)
            gray[i] = *hi > *lo ? png::to_byte(static_cast<float>((m.values[i] - *lo) / (*hi - *lo))) : 0;
        png::write_gray(dir / (s.id() + ".png"), m.height, m.width, gray);
        std::ofstream raw(dir / (s.id() + ".f32"), std::ios::binary);
        raw.write(reinterpret_cast<const char*>(m.values.data()),
                  static_cast<std::streamsize>(m.values.size() * sizeof(float)));
        index[s.id()] = {{"height", m.height}, {"width", m.width}, {"image_score", m.image_score},
                         {"png", s.id() + ".png"}, {"raw_float32", s.id() + ".f32"}};
    }
    write_text(dir / "index.json", index.dump(2));
}

int cmd_eval(DataArgs data, const CLI::App* cmd, const fs::path& model_path, const std::string& visual_path,
             bool flattened, const fs::path& out, const std::string& maps_dir) {
    const auto model = cbm::TrainedCBM::load(model_path);
    data.inherit(model.metadata, cmd);
    std::optional<vision::StudentTeacher> st;
    if (!visual_path.empty()) st = vision::StudentTeacher::load(visual_path);
    const auto d = data.load();
    const auto split = data.split(d);
    metrics::EvaluationOptions opts;
    opts.flattened_concepts = flattened;
    const auto report = metrics::evaluate_model(model, st ? &*st : nullptr, split.test, opts);
    json j = report.to_json();
    j["model"] = model.metadata;
    write_text(out, j.dump(2));
    if (st) write_maps(maps_dir.empty() ? out.parent_path() / "maps" : fs::path(maps_dir), split.test, *st);
    for (const auto& name : metrics::kMetricNames) {
        const auto& v = report.overall.at(name);
        std::printf("%-6s %s\n", name.c_str(), v.value ? std::to_string(*v.value).c_str() : ("skipped: " + v.skipped).c_str());
    }
    return 0;
}

int cmd_run(const fs::path& config, const fs::path& out) {
    const auto cfg = read_json(config).get<scenarios::ExperimentConfig>();
    const auto report = scenarios::run_experiment(cfg, out, [](const scenarios::CellResult& c) {
        std::string line = to_string(c.scenario) + " seed " + std::to_string(c.seed) + ": ";
        if (c.report)
            line += "I-AUC " + std::to_string(c.report->overall.at("I-AUC").value.value_or(-1)) + " C-AUC " +
                    std::to_string(c.report->overall.at("C-AUC").value.value_or(-1));
        else
            line += "failed: " + c.error;
        log(line + " (" + std::to_string(static_cast<int>(c.seconds)) + " s)");
    });
    std::cout << report.to_csv();
    return 0;
}

int cmd_serve(DataArgs data, const fs::path& model_path, const std::string& visual_path, server::SessionConfig cfg) {
    auto model = cbm::TrainedCBM::load(model_path);
    std::optional<vision::StudentTeacher> st;
    if (!visual_path.empty()) st = vision::StudentTeacher::load(visual_path);
    Dataset ds;
    if (data.dataset == "shapes_ad") {
        const auto d = data.load();
        ds = {d.vocabulary, d.pool};
    } else {
        ds = load_dataset(data.dataset);
    }
    server::InferenceService service(std::move(model), std::move(st), std::move(ds), cfg.reveal, cfg.cache_capacity);
    server::ApiServer api(service, cfg);
    log("serving on http://" + cfg.host + ":" + std::to_string(cfg.port));
    return api.listen() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept bottleneck anomaly detection workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "Write a ShapesAD dataset in MVTec layout");
    std::string gen_config;
    fs::path gen_out;
    std::uint64_t gen_seed = 0;
    int gen_synth = -1;
    gen->add_option("--config", gen_config, "Generator config JSON");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Generator seed (ignored with --config)");
    gen->add_option("--synthetic", gen_synth, "Synthetic anomalies per defect type");

    auto* ann = app.add_subcommand("annotate", "Build a concept vocabulary and annotate a dataset");
    fs::path ann_dataset, ann_out;
    std::string ann_vlm = "mock", ann_prompts, ann_config, ann_report;
    double ann_noise = 0;
    ann->add_option("--dataset", ann_dataset, "Dataset directory or concept file")->required();
    ann->add_option("--vlm", ann_vlm, "mock or http")->capture_default_str();
    ann->add_option("--out", ann_out, "Concept-dataset JSON to write")->required();
    ann->add_option("--noise", ann_noise, "Mock VLM noise rate")->capture_default_str();
    ann->add_option("--prompts", ann_prompts, "Prompt template directory");
    ann->add_option("--config", ann_config, "Pipeline config JSON");
    ann->add_option("--report", ann_report, "Pipeline audit JSON (default: <out>.pipeline.json)");

    auto* tr = app.add_subcommand("train", "Train a concept bottleneck model");
    DataArgs tr_data;
    tr_data.add(tr, true);
    std::string tr_config, tr_paradigm, tr_history, tr_logits;
    double tr_lambda = -1;
    fs::path tr_out;
    tr->add_option("--config", tr_config, "TrainingConfig JSON");
    tr->add_option("--paradigm", tr_paradigm, "independent|sequential|joint");
    tr->add_option("--lambda", tr_lambda, "Concept/label trade-off (joint)");
    tr->add_option("--out", tr_out, "Checkpoint path")->required();
    tr->add_option("--history", tr_history, "Write loss curves to this JSON file");
    tr->add_option("--export-logits", tr_logits, "Write train/test concept logits and PCA to this CSV");

    auto* tv = app.add_subcommand("train-visual", "Distill a student from a trained model's backbone");
    DataArgs tv_data;
    tv_data.add(tv, true);
    fs::path tv_model, tv_out;
    std::string tv_teacher = "concept", tv_config;
    tv->add_option("--model", tv_model, "CBM checkpoint")->required();
    tv->add_option("--teacher", tv_teacher, "concept (fine-tuned backbone) or pretrain")->capture_default_str();
    tv->add_option("--config", tv_config, "StudentConfig JSON");
    tv->add_option("--out", tv_out, "Student-teacher checkpoint path")->required();

    auto* iv = app.add_subcommand("intervene", "Intervention budget sweep on the test split");
    DataArgs iv_data;
    iv_data.add(iv, true);
    fs::path iv_model, iv_out;
    std::string iv_policy = "ucp", iv_metric = "I-AUC";
    std::uint64_t iv_order_seed = 0;
    iv->add_option("--model", iv_model, "CBM checkpoint")->required();
    iv->add_option("--policy", iv_policy, "ucp|random|index")->capture_default_str();
    iv->add_option("--metric", iv_metric, "I-AUC or I-F1")->capture_default_str();
    iv->add_option("--order-seed", iv_order_seed, "Seed of the random ordering")->capture_default_str();
    iv->add_option("--out", iv_out, "Curve JSON")->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a model on the test split");
    DataArgs ev_data;
    ev_data.add(ev, true);
    fs::path ev_model, ev_out;
    std::string ev_visual, ev_maps;
    bool ev_flat = false;
    ev->add_option("--model", ev_model, "CBM checkpoint")->required();
    ev->add_option("--visual", ev_visual, "Student-teacher checkpoint");
    ev->add_flag("--flattened", ev_flat, "C-AUC over the flattened concept matrix");
    ev->add_option("--out", ev_out, "Report JSON")->required();
    ev->add_option("--maps", ev_maps, "Anomaly map directory (default: <out dir>/maps)");

    auto* run = app.add_subcommand("run", "Scenario x seed experiment grid");
    fs::path run_config, run_out;
    run->add_option("--config", run_config, "Experiment JSON")->required();
    run->add_option("--out", run_out, "Results directory")->required();

    auto* srv = app.add_subcommand("serve", "REST inference and intervention service");
    DataArgs srv_data;
    srv_data.add(srv, false);
    fs::path srv_model;
    std::string srv_visual;
    server::SessionConfig srv_cfg;
    if (const char* p = std::getenv("CONVAD_PORT")) srv_cfg.port = std::atoi(p);
    srv->add_option("--model", srv_model, "CBM checkpoint")->required();
    srv->add_option("--visual", srv_visual, "Student-teacher checkpoint");
    srv->add_option("--host", srv_cfg.host, "Listen address")->capture_default_str();
    srv->add_option("--port", srv_cfg.port, "Listen port (env CONVAD_PORT)")->capture_default_str();
    srv->add_flag("--reveal", srv_cfg.reveal, "Expose ground truth (evaluation mode)");
    srv->add_option("--cors-origin", srv_cfg.cors_origin, "Allowed UI origin")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_generate(gen_config, gen_out, gen_seed, gen_synth);
        if (*ann) return cmd_annotate(ann_dataset, ann_vlm, ann_out, ann_noise, ann_prompts, ann_config, ann_report);
        if (*tr) return cmd_train(tr_data, tr_config, tr_paradigm, tr_lambda, tr_out, tr_history, tr_logits);
        if (*tv) return cmd_train_visual(tv_data, tv, tv_model, tv_teacher, tv_config, tv_out);
        if (*iv) return cmd_intervene(iv_data, iv, iv_model, iv_policy, iv_metric, iv_order_seed, iv_out);
        if (*ev) return cmd_eval(ev_data, ev, ev_model, ev_visual, ev_flat, ev_out, ev_maps);
        if (*run) return cmd_run(run_config, run_out);
        if (*srv) {
            srv_cfg.model_path = srv_model;
            srv_cfg.dataset_path = srv_data.dataset;
            if (!srv_visual.empty()) srv_cfg.visual_path = srv_visual;
            return cmd_serve(srv_data, srv_model, srv_visual, srv_cfg);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
