#include "convad/core/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "convad/core/image_ops.hpp"
#include "convad/core/png_io.hpp"

namespace convad {
namespace fs = std::filesystem;
using nlohmann::json;

const Sample* Dataset::find(const std::string& id) const {
    for (const auto& s : samples)
        if (s.id() == id) return &s;
    return nullptr;
}

json to_json(const ConceptVocabulary& vocab) {
    json arr = json::array();
    for (const auto& c : vocab.concepts()) arr.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
    return arr;
}

ConceptVocabulary vocabulary_from_json(const json& j) {
    std::vector<Concept> concepts;
    for (const auto& e : j) concepts.push_back({e.at("name").get<std::string>(), concept_kind_from_string(e.at("kind"))});
    if (concepts.empty()) return {};
    return ConceptVocabulary(std::move(concepts));
}

std::string image_relpath(const Sample& s) {
    if (!s.image_path.empty()) return s.image_path;
    const std::string cat = s.category.empty() ? "default" : s.category;
    if (s.label == 0) return cat + "/" + to_string(s.subset) + "/good/" + s.id() + ".png";
    const std::string defect = s.defect_type.value_or("defect");
    if (s.origin == Origin::kSynthetic) return cat + "/synthetic/" + defect + "/" + s.id() + ".png";
    return cat + "/" + to_string(s.subset) + "/" + defect + "/" + s.id() + ".png";
}

std::string mask_relpath(const Sample& s) {
    if (s.label == 0 || !s.mask) return {};
    if (!s.mask_path.empty()) return s.mask_path;
    const std::string cat = s.category.empty() ? "default" : s.category;
    const std::string defect = s.defect_type.value_or("defect");
    const std::string dir = s.origin == Origin::kSynthetic ? "/synthetic_ground_truth/" : "/ground_truth/";
    return cat + dir + defect + "/" + s.id() + "_mask.png";
}

json sample_record(const Sample& s, const std::string& image_path, const std::string& mask_path) {
    json j{{"id", s.id()},
           {"label", s.label},
           {"concepts", s.concepts},
           {"origin", to_string(s.origin)},
           {"image_path", image_path},
           {"category", s.category},
           {"subset", to_string(s.subset)}};
    if (s.defect_type) j["defect_type"] = *s.defect_type;
    if (!mask_path.empty()) j["mask_path"] = mask_path;
    return j;
}

namespace {

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

Dataset load_concept_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    const json doc = json::parse(in);
    const fs::path base = fs::absolute(file).parent_path();
    Dataset ds;
    if (doc.contains("vocabulary") && !doc["vocabulary"].empty()) ds.vocabulary = vocabulary_from_json(doc["vocabulary"]);
    for (const auto& r : doc.at("samples")) {
        Sample s;
        const auto id = r.at("id").get<std::string>();
        const auto img_path = base / r.at("image_path").get<std::string>();
        s.image = png::read_rgb(img_path, id);
        s.image_path = r.at("image_path").get<std::string>();
        s.label = r.at("label").get<int>();
        s.concepts = r.value("concepts", std::vector<std::uint8_t>{});
        if (r.contains("defect_type") && !r["defect_type"].is_null()) s.defect_type = r["defect_type"].get<std::string>();
        s.origin = origin_from_string(r.value("origin", std::string("real")));
        s.category = r.value("category", std::string{});
        s.subset = subset_from_string(r.value("subset", std::string(s.label == 0 ? "train" : "test")));
        if (r.contains("mask_path") && !r["mask_path"].is_null()) {
            s.mask_path = r["mask_path"].get<std::string>();
            s.mask = png::read_mask(base / s.mask_path);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Dataset scan_mvtec(const fs::path& root) {
    Dataset ds;
    auto categories = sorted_subdirs(root);
    // A single-category root (root/train, root/test) is accepted too.
    if (fs::is_directory(root / "train")) categories = {root};
    for (const auto& cat_dir : categories) {
        const std::string cat = cat_dir.filename().string();
        for (const auto& p : sorted_pngs(cat_dir / "train" / "good")) {
            Sample s;
            s.image = resize_bilinear(png::read_rgb(p, cat + "_train_" + p.stem().string()), kDefaultImageSize,
                                      kDefaultImageSize);
            s.category = cat;
            s.subset = Subset::kTrain;
            s.image_path = fs::relative(p, root).string();
            ds.samples.push_back(std::move(s));
        }
        for (const auto& defect_dir : sorted_subdirs(cat_dir / "test")) {
            const std::string defect = defect_dir.filename().string();
            for (const auto& p : sorted_pngs(defect_dir)) {
                Sample s;
                s.image = resize_bilinear(png::read_rgb(p, cat + "_test_" + defect + "_" + p.stem().string()),
                                          kDefaultImageSize, kDefaultImageSize);
                s.category = cat;
                s.subset = Subset::kTest;
                s.image_path = fs::relative(p, root).string();
                if (defect != "good") {
                    s.label = 1;
                    s.defect_type = defect;
                    const auto mask_path = cat_dir / "ground_truth" / defect / (p.stem().string() + "_mask.png");
                    if (fs::exists(mask_path)) {
                        s.mask_path = fs::relative(mask_path, root).string();
                        s.mask = resize_nearest(png::read_mask(mask_path), kDefaultImageSize, kDefaultImageSize);
                    }
                }
                ds.samples.push_back(std::move(s));
            }
        }
    }
    if (ds.samples.empty()) throw std::runtime_error("no images found under " + root.string());
    return ds;
}

}  // namespace

void save_dataset(const fs::path& root, const Dataset& ds) {
    json samples = json::array();
    for (const auto& s : ds.samples) {
        const auto img = image_relpath(s);
        const auto msk = mask_relpath(s);
        png::write_rgb(root / img, s.image);
        if (!msk.empty()) png::write_mask(root / msk, *s.mask);
        samples.push_back(sample_record(s, img, msk));
    }
    write_json(root / "dataset.json", json{{"vocabulary", to_json(ds.vocabulary)}, {"samples", samples}});
}

void write_concept_file(const fs::path& json_path, const fs::path& images_root, const Dataset& ds) {
    const fs::path base = fs::absolute(json_path).parent_path();
    const fs::path root = fs::absolute(images_root);
    json samples = json::array();
    for (const auto& s : ds.samples) {
        const auto img = fs::relative(root / image_relpath(s), base).string();
        const auto rel_mask = mask_relpath(s);
        const auto msk = rel_mask.empty() ? std::string{} : fs::relative(root / rel_mask, base).string();
        samples.push_back(sample_record(s, img, msk));
    }
    write_json(json_path, json{{"vocabulary", to_json(ds.vocabulary)}, {"samples", samples}});
}

Dataset load_dataset(const fs::path& root_or_file) {
    if (fs::is_regular_file(root_or_file)) return load_concept_file(root_or_file);
    if (fs::exists(root_or_file / "dataset.json")) return load_concept_file(root_or_file / "dataset.json");
    return scan_mvtec(root_or_file);
}

}  // namespace convad
