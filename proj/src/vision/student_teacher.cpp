#include "convad/vision/student_teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "convad/core/image_ops.hpp"
#include "convad/core/random.hpp"
#include "convad/nn/archive.hpp"
#include "convad/nn/kernels.hpp"

namespace convad::vision {

nn::FitSchedule StudentConfig::schedule() const {
    nn::FitSchedule s;
    s.max_epochs = max_epochs;
    s.early_stop_patience = early_stop_patience;
    s.lr_plateau_patience = lr_plateau_patience;
    s.lr_decay_factor = lr_decay_factor;
    return s;
}

void to_json(nlohmann::json& j, const StudentConfig& c) {
    j = {{"max_epochs", c.max_epochs},
         {"early_stop_patience", c.early_stop_patience},
         {"lr_plateau_patience", c.lr_plateau_patience},
         {"lr_decay_factor", c.lr_decay_factor},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"seed", c.seed},
         {"augmentation", c.augmentation}};
}

void from_json(const nlohmann::json& j, StudentConfig& c) {
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.lr_plateau_patience = j.value("lr_plateau_patience", c.lr_plateau_patience);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("augmentation")) c.augmentation = j.at("augmentation").get<scenarios::AugmentationPolicy>();
}

StudentTeacher::StudentTeacher(nn::ConvBackbone teacher, std::uint64_t seed, std::vector<int> levels)
    : teacher_(std::move(teacher)),
      student_(teacher_.config(), derive_seed(seed, fnv1a("student"))),
      levels_(levels.empty() ? teacher_.config().pyramid_blocks : std::move(levels)) {
    for (int l : levels_)
        if (l < 0 || l >= teacher_.num_blocks()) throw std::invalid_argument("matched level out of range");
}

AnomalyMap StudentTeacher::anomaly_map(const Image& image) const {
    nn::BackboneActivations ta, sa;
    teacher_.forward(image, ta);
    student_.forward(image, sa);
    AnomalyMap m;
    m.height = image.height;
    m.width = image.width;
    m.values.assign(static_cast<std::size_t>(m.height) * m.width, 1.f);
    for (int l : levels_) {
        const nn::Shape3 s = teacher_.block_shape(l);
        std::vector<float> d(s.plane());
        nn::kernels::normalized_sq_distance(ta.outputs[l].data(), sa.outputs[l].data(), s, d.data());
        const auto up = upsample_bilinear(d, s.h, s.w, m.height, m.width);
        for (std::size_t i = 0; i < up.size(); ++i) m.values[i] *= up[i];
    }
    m.image_score = *std::max_element(m.values.begin(), m.values.end());
    return m;
}

double StudentTeacher::loss(const Image& image) const {
    nn::BackboneActivations ta, sa;
    teacher_.forward(image, ta);
    student_.forward(image, sa);
    double total = 0;
    for (int l : levels_) {
        const nn::Shape3 s = teacher_.block_shape(l);
        std::vector<float> d(s.plane());
        nn::kernels::normalized_sq_distance(ta.outputs[l].data(), sa.outputs[l].data(), s, d.data());
        total += std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(s.plane());
    }
    return total;
}

double feature_matching_backward(std::span<const float> a, std::span<const float> b, nn::Shape3 shape, double scale,
                                 std::span<float> grad_b) {
    const std::size_t plane = shape.plane();
    double loss = 0;
    std::vector<double> ah(shape.c), bh(shape.c);
    for (std::size_t p = 0; p < plane; ++p) {
        double na = 0, nb = 0;
        for (int c = 0; c < shape.c; ++c) {
            na += static_cast<double>(a[c * plane + p]) * a[c * plane + p];
            nb += static_cast<double>(b[c * plane + p]) * b[c * plane + p];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        const double da = na + nn::kNormEps, db = nb + nn::kNormEps;
        double d = 0, sg = 0;
        for (int c = 0; c < shape.c; ++c) {
            ah[c] = a[c * plane + p] / da;
            bh[c] = b[c * plane + p] / db;
            const double diff = ah[c] - bh[c];
            d += diff * diff;
        }
        loss += 0.5 * d;
        // g = d/d(b_hat) = b_hat - a_hat;  d(b_hat)/db = I/db - b b^T / (nb db^2).
        for (int c = 0; c < shape.c; ++c) sg += static_cast<double>(b[c * plane + p]) * (bh[c] - ah[c]);
        for (int c = 0; c < shape.c; ++c) {
            double g = 0;
            if (nb > 0) g = (bh[c] - ah[c]) / db - b[c * plane + p] * sg / (nb * db * db);
            grad_b[c * plane + p] = static_cast<float>(g * scale);
        }
    }
    return loss;
}

namespace {

struct LevelCache {
    std::vector<std::vector<float>> outputs;  // indexed by block; only matched levels filled
};

LevelCache teacher_levels(const StudentTeacher& st, const Image& image) {
    nn::BackboneActivations ta;
    st.teacher().forward(image, ta);
    LevelCache c;
    c.outputs.resize(ta.outputs.size());
    for (int l : st.levels()) c.outputs[l] = std::move(ta.outputs[l]);
    return c;
}

double student_step(StudentTeacher& st, const Image& image, const LevelCache& teacher, double scale) {
    nn::BackboneActivations sa;
    st.student().forward(image, sa);
    std::vector<std::vector<float>> grads(sa.outputs.size());
    double loss = 0;
    for (int l : st.levels()) {
        const nn::Shape3 s = st.student().block_shape(l);
        grads[l].resize(s.size());
        const double per_pos = scale / static_cast<double>(s.plane());
        loss += feature_matching_backward(teacher.outputs[l], sa.outputs[l], s, per_pos, grads[l]) /
                static_cast<double>(s.plane());
    }
    st.student().backward(sa, {}, grads, 0);
    return loss;
}

void require_normals(std::span<const Sample> samples) {
    for (const auto& s : samples)
        if (s.label != 0) throw std::invalid_argument("student training got anomalous sample " + s.id());
}

}  // namespace

StudentResult train_student(StudentTeacher st, std::span<const Sample> train_normals,
                            std::span<const Sample> val_normals, const StudentConfig& cfg) {
    require_normals(train_normals);
    require_normals(val_normals);
    if (train_normals.empty()) throw std::invalid_argument("student training needs normal images");

    const bool cached = cfg.augmentation.is_identity();
    std::vector<LevelCache> cache;
    if (cached)
        for (const auto& s : train_normals) cache.push_back(teacher_levels(st, s.image));

    auto params = st.student().params(0);
    nn::Adam opt(params, cfg.learning_rate);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    auto train_epoch = [&](int epoch) {
        std::vector<std::size_t> order(train_normals.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, fnv1a("student-order"), epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            nn::zero_grad(params);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = train_normals[order[i]];
                if (cached) {
                    total += student_step(st, s.image, cache[order[i]], scale);
                } else {
                    Rng arng(derive_seed(cfg.seed, fnv1a("student-aug"), epoch, order[i]));
                    const Image view = scenarios::augment_image(s.image, cfg.augmentation, arng);
                    total += student_step(st, view, teacher_levels(st, view), scale);
                }
            }
            opt.step();
        }
        return total / static_cast<double>(train_normals.size());
    };
    auto val_loss = [&]() {
        const auto set = val_normals.empty() ? train_normals : val_normals;
        double acc = 0;
        for (const auto& s : set) acc += st.loss(s.image);
        return acc / static_cast<double>(set.size());
    };
    auto history = nn::fit(opt, cfg.schedule(), train_epoch, val_loss);
    return {std::move(st), std::move(history)};
}

namespace {

std::vector<nn::ParamRef> prefixed(nn::ConvBackbone& net, const std::string& prefix) {
    auto p = net.params(0);
    for (auto& r : p) r.name = prefix + r.name;
    return p;
}

}  // namespace

void StudentTeacher::save(const std::filesystem::path& path) const {
    auto& self = const_cast<StudentTeacher&>(*this);  // parameters are only read
    auto params = prefixed(self.teacher_, "teacher.");
    auto sp = prefixed(self.student_, "student.");
    params.insert(params.end(), sp.begin(), sp.end());
    const auto& b = teacher_.config();
    nlohmann::json m = {{"kind", "student_teacher"},
                        {"levels", levels_},
                        {"backbone",
                         {{"channels", b.channels},
                          {"height", b.height},
                          {"width", b.width},
                          {"pyramid_blocks", b.pyramid_blocks}}}};
    nn::write_archive(path, m, params);
}

StudentTeacher StudentTeacher::load(const std::filesystem::path& path) {
    const auto a = nn::read_archive(path);
    if (a.manifest.value("kind", "") != "student_teacher")
        throw std::runtime_error(path.string() + " is not a student-teacher checkpoint");
    nn::BackboneConfig b;
    const auto& jb = a.manifest.at("backbone");
    b.channels = jb.at("channels").get<std::vector<int>>();
    b.height = jb.at("height").get<int>();
    b.width = jb.at("width").get<int>();
    b.pyramid_blocks = jb.at("pyramid_blocks").get<std::vector<int>>();
    StudentTeacher st(nn::ConvBackbone(b, 0), 0, a.manifest.at("levels").get<std::vector<int>>());
    nn::load_params(a, prefixed(st.teacher_, "teacher."));
    nn::load_params(a, prefixed(st.student_, "student."));
    return st;
}

}  // namespace convad::vision
