#include "convad/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "convad/core/random.hpp"

namespace convad::synth {
namespace {

constexpr std::int64_t kParentOffset = 1'000'000;
constexpr int kSuper = 4;  // supersamples per axis

double canvas_unit(int height, int width) { return std::min(height, width) / 128.0; }

float quantize(float v) { return std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f; }

double object_extent(const std::string& type) {
    if (type == "disc") return 44.0;
    if (type == "ring") return 46.0;
    if (type == "plate") return 30.0 * std::numbers::sqrt2 + 8.0;
    throw std::invalid_argument("unknown object type: " + type);
}

struct LocalFrame {
    double cx, cy, cos_t, sin_t, inv_scale;

    explicit LocalFrame(const ObjectSpec& s) {
        const double t = s.pose.rotation_deg * std::numbers::pi / 180.0;
        cx = s.pose.center.x;
        cy = s.pose.center.y;
        cos_t = std::cos(t);
        sin_t = std::sin(t);
        inv_scale = 1.0 / (s.pose.scale * canvas_unit(s.height, s.width));
    }
    [[nodiscard]] Point to_local(double px, double py) const {
        const double dx = px - cx;
        const double dy = py - cy;
        return {(cos_t * dx + sin_t * dy) * inv_scale, (-sin_t * dx + cos_t * dy) * inv_scale};
    }
};

bool inside_object(const std::string& type, Point l) {
    const double r2 = l.x * l.x + l.y * l.y;
    if (type == "disc") return r2 <= 44.0 * 44.0;
    if (type == "ring") return r2 >= 22.0 * 22.0 && r2 <= 46.0 * 46.0;
    const double qx = std::abs(l.x) - 30.0;
    const double qy = std::abs(l.y) - 30.0;
    const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0)) + std::min(std::max(qx, qy), 0.0);
    return outside <= 8.0;
}

/// Coverage of the object (fraction of supersamples inside) for every pixel.
std::vector<float> object_coverage(const ObjectSpec& spec) {
    const LocalFrame frame(spec);
    std::vector<float> cov(static_cast<std::size_t>(spec.height) * spec.width, 0.f);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = x + (sx + 0.5) / kSuper;
                    const double py = y + (sy + 0.5) / kSuper;
                    hits += inside_object(spec.object_type, frame.to_local(px, py)) ? 1 : 0;
                }
            cov[static_cast<std::size_t>(y) * spec.width + x] = static_cast<float>(hits) / (kSuper * kSuper);
        }
    }
    return cov;
}

/// Smooth lattice noise in [-1,1], 16-pixel cells.
double value_noise(std::uint64_t seed, double x, double y) {
    const double cell = 16.0;
    const double gx = x / cell;
    const double gy = y / cell;
    const auto ix = static_cast<std::int64_t>(std::floor(gx));
    const auto iy = static_cast<std::int64_t>(std::floor(gy));
    const double fx = gx - ix;
    const double fy = gy - iy;
    auto lattice = [&](std::int64_t a, std::int64_t b) {
        return 2.0 * hash_unit(derive_seed(seed, static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b))) - 1.0;
    };
    const double sx = fx * fx * (3 - 2 * fx);
    const double sy = fy * fy * (3 - 2 * fy);
    const double top = lattice(ix, iy) * (1 - sx) + lattice(ix + 1, iy) * sx;
    const double bot = lattice(ix, iy + 1) * (1 - sx) + lattice(ix + 1, iy + 1) * sx;
    return top * (1 - sy) + bot * sy;
}

double pixel_noise(std::uint64_t seed, int x, int y, int c) {
    return 2.0 * hash_unit(derive_seed(seed, 0x5eedULL, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y),
                                       static_cast<std::uint64_t>(c))) -
           1.0;
}

double segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

double polyline_distance(Point p, const std::vector<Point>& pts) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < pts.size(); ++i) d = std::min(d, segment_distance(p, pts[i - 1], pts[i]));
    if (pts.size() == 1) d = std::hypot(p.x - pts[0].x, p.y - pts[0].y);
    return d;
}

/// Normalized ellipse radius (1 on the boundary).
double ellipse_radius(const EllipseGeometry& e, Point p) {
    const double t = e.angle_deg * std::numbers::pi / 180.0;
    const double dx = p.x - e.center.x;
    const double dy = p.y - e.center.y;
    const double lx = std::cos(t) * dx + std::sin(t) * dy;
    const double ly = -std::sin(t) * dx + std::cos(t) * dy;
    return std::sqrt((lx * lx) / (e.rx * e.rx) + (ly * ly) / (e.ry * e.ry));
}

struct Box {
    double x0, y0, x1, y1;
};

Box bounding_box(const DefectGeometry& g) {
    Box b{1e18, 1e18, -1e18, -1e18};
    auto grow = [&](Point p, double r) {
        b.x0 = std::min(b.x0, p.x - r);
        b.y0 = std::min(b.y0, p.y - r);
        b.x1 = std::max(b.x1, p.x + r);
        b.y1 = std::max(b.y1, p.y + r);
    };
    std::visit(
        [&](const auto& geo) {
            using T = std::decay_t<decltype(geo)>;
            if constexpr (std::is_same_v<T, LineGeometry>) {
                grow(geo.a, geo.width);
                grow(geo.b, geo.width);
            } else if constexpr (std::is_same_v<T, PolylineGeometry>) {
                for (auto p : geo.vertices) grow(p, geo.width);
                for (auto p : geo.branch) grow(p, geo.width);
            } else if constexpr (std::is_same_v<T, EllipseGeometry>) {
                grow(geo.center, std::max(geo.rx, geo.ry) + 1);
            } else {
                for (const auto& l : geo.lobes) grow(l.center, l.radius + 1);
            }
        },
        g);
    return b;
}

bool inside_defect(const DefectGeometry& g, Point p) {
    return std::visit(
        [&](const auto& geo) -> bool {
            using T = std::decay_t<decltype(geo)>;
            if constexpr (std::is_same_v<T, LineGeometry>) {
                return segment_distance(p, geo.a, geo.b) <= geo.width / 2;
            } else if constexpr (std::is_same_v<T, PolylineGeometry>) {
                return polyline_distance(p, geo.vertices) <= geo.width / 2 ||
                       (geo.branch.size() > 1 && polyline_distance(p, geo.branch) <= geo.width * 0.4);
            } else if constexpr (std::is_same_v<T, EllipseGeometry>) {
                return ellipse_radius(geo, p) <= 1.0;
            } else {
                for (const auto& l : geo.lobes)
                    if (std::hypot(p.x - l.center.x, p.y - l.center.y) <= l.radius) return true;
                return false;
            }
        },
        g);
}

std::string expected_geometry(const std::string& defect_type) {
    if (defect_type == "scratch") return "line";
    if (defect_type == "crack") return "polyline";
    if (defect_type == "hole") return "ellipse";
    if (defect_type == "stain") return "blob";
    throw std::invalid_argument("unknown defect type: " + defect_type);
}

std::string geometry_name(const DefectGeometry& g) {
    static const char* names[] = {"line", "polyline", "ellipse", "blob"};
    return names[g.index()];
}

/// Interior check: every pixel the defect touches must be fully inside the object and the canvas.
bool geometry_contained(const std::vector<float>& coverage, const Mask& interior, const Box& box, int h, int w) {
    if (box.x0 < 0 || box.y0 < 0 || box.x1 >= w || box.y1 >= h) return false;
    for (std::size_t i = 0; i < coverage.size(); ++i)
        if (coverage[i] > 0.f && interior.data[i] == 0) return false;
    return true;
}

Rgb defect_target(const DefectSpec& d, const ObjectSpec& obj, Point p) {
    if (d.defect_type == "scratch") return {0.96f, 0.96f, 0.94f};
    if (d.defect_type == "crack") return {0.06f, 0.05f, 0.05f};
    if (d.defect_type == "hole") {
        const auto& e = std::get<EllipseGeometry>(d.geometry);
        if (ellipse_radius(e, p) >= 0.7) return {0.82f, 0.80f, 0.74f};
        return obj.background;
    }
    return {0.92f, 0.58f, 0.06f};  // stain
}

}  // namespace

GeneratorConfig GeneratorConfig::shapes_ad(std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.defect_types = {"scratch", "hole", "stain", "crack"};
    cfg.vocabulary = ConceptVocabulary({
        {"uniform surface", ConceptKind::kNormal},
        {"intact contour", ConceptKind::kNormal},
        {"consistent color", ConceptKind::kNormal},
        {"linear mark", ConceptKind::kAnomaly},
        {"bright streak", ConceptKind::kAnomaly},
        {"branching fracture", ConceptKind::kAnomaly},
        {"dark fissure", ConceptKind::kAnomaly},
        {"circular void", ConceptKind::kAnomaly},
        {"exposed background", ConceptKind::kAnomaly},
        {"sharp rim", ConceptKind::kAnomaly},
        {"discoloration", ConceptKind::kAnomaly},
        {"irregular blob", ConceptKind::kAnomaly},
    });
    cfg.normal_concepts = {0, 1, 2};
    cfg.concept_map = {
        {"scratch", {{3, 4}, {}}},
        {"crack", {{3, 5, 6}, {}}},
        {"hole", {{7, 8, 9}, {}}},
        {"stain", {{10, 11}, {}}},
    };
    return cfg;
}

int GeneratorConfig::n_normal_test() const {
    return static_cast<int>(std::lround(normal_test_fraction * n_normal));
}

void GeneratorConfig::validate() const {
    if (height < 32 || width < 32) throw std::invalid_argument("canvas must be at least 32x32");
    if (n_normal < 1 || n_anomalous_per_defect < 0 || n_synthetic_per_defect < 0)
        throw std::invalid_argument("sample counts must be nonnegative (n_normal >= 1)");
    if (normal_test_fraction < 0 || normal_test_fraction >= 1)
        throw std::invalid_argument("normal_test_fraction must be in [0,1)");
    if (object_types.empty()) throw std::invalid_argument("need at least one object type");
    for (const auto& t : object_types) (void)object_extent(t);
    if (vocabulary.size() < 2) throw std::invalid_argument("vocabulary missing");
    const std::set<std::size_t> normal(normal_concepts.begin(), normal_concepts.end());
    for (auto i : normal_concepts)
        if (i >= vocabulary.size() || vocabulary[i].kind != ConceptKind::kNormal)
            throw std::invalid_argument("normal_concepts must index normal-indicative concepts");
    for (const auto& d : defect_types) {
        (void)expected_geometry(d);
        const auto it = concept_map.find(d);
        if (it == concept_map.end()) throw std::invalid_argument("concept_map misses defect type " + d);
        if (it->second.implied.empty()) throw std::invalid_argument("defect type " + d + " implies no concept");
        for (auto i : it->second.implied) {
            if (i >= vocabulary.size() || vocabulary[i].kind != ConceptKind::kAnomaly)
                throw std::invalid_argument("implied concepts of " + d + " must be anomaly-indicative");
            if (normal.contains(i)) throw std::invalid_argument("implied concepts overlap normal_concepts");
        }
        for (auto i : it->second.suppresses)
            if (!normal.contains(i)) throw std::invalid_argument("suppressed concepts must be normal_concepts");
    }
}

void to_json(nlohmann::json& j, const GeneratorConfig& cfg) {
    nlohmann::json cmap = nlohmann::json::object();
    for (const auto& [k, v] : cfg.concept_map) cmap[k] = {{"implied", v.implied}, {"suppresses", v.suppresses}};
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& c : cfg.vocabulary.concepts()) vocab.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
    j = {{"height", cfg.height},
         {"width", cfg.width},
         {"n_normal", cfg.n_normal},
         {"normal_test_fraction", cfg.normal_test_fraction},
         {"n_anomalous_per_defect", cfg.n_anomalous_per_defect},
         {"n_synthetic_per_defect", cfg.n_synthetic_per_defect},
         {"object_types", cfg.object_types},
         {"defect_types", cfg.defect_types},
         {"vocabulary", vocab},
         {"concept_map", cmap},
         {"normal_concepts", cfg.normal_concepts},
         {"background", cfg.background},
         {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& cfg) {
    cfg = GeneratorConfig::shapes_ad(j.value("seed", std::uint64_t{0}));
    cfg.height = j.value("height", cfg.height);
    cfg.width = j.value("width", cfg.width);
    cfg.n_normal = j.value("n_normal", cfg.n_normal);
    cfg.normal_test_fraction = j.value("normal_test_fraction", cfg.normal_test_fraction);
    cfg.n_anomalous_per_defect = j.value("n_anomalous_per_defect", cfg.n_anomalous_per_defect);
    cfg.n_synthetic_per_defect = j.value("n_synthetic_per_defect", cfg.n_synthetic_per_defect);
    cfg.object_types = j.value("object_types", cfg.object_types);
    cfg.defect_types = j.value("defect_types", cfg.defect_types);
    if (j.contains("vocabulary")) {
        std::vector<Concept> cs;
        for (const auto& e : j["vocabulary"]) cs.push_back({e.at("name"), concept_kind_from_string(e.at("kind"))});
        cfg.vocabulary = ConceptVocabulary(std::move(cs));
    }
    if (j.contains("concept_map")) {
        cfg.concept_map.clear();
        for (const auto& [k, v] : j["concept_map"].items())
            cfg.concept_map[k] = {v.at("implied").get<std::vector<std::size_t>>(),
                                  v.value("suppresses", std::vector<std::size_t>{})};
    }
    cfg.normal_concepts = j.value("normal_concepts", cfg.normal_concepts);
    cfg.background = j.value("background", cfg.background);
}

ObjectSpec object_spec(const GeneratorConfig& cfg, std::int64_t index) {
    Rng rng(derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(index)));
    ObjectSpec s;
    s.height = cfg.height;
    s.width = cfg.width;
    s.background = cfg.background;
    s.object_type = cfg.object_types[static_cast<std::size_t>(index) % cfg.object_types.size()];
    for (auto& c : s.base_color) c = static_cast<float>(uniform(rng, 0.35, 0.65));
    s.texture_seed = rng();
    s.brightness = static_cast<float>(uniform(rng, 0.9, 1.1));
    s.pose.scale = uniform(rng, 0.6, 1.0);
    s.pose.rotation_deg = uniform(rng, 0.0, 360.0);
    const double u = canvas_unit(cfg.height, cfg.width);
    // Keep the whole object inside a centered disc so augmenting rotations never clip it.
    const double max_offset = std::clamp(58.0 - object_extent(s.object_type) * s.pose.scale, 0.0, 6.0) * u;
    const double r = max_offset * std::sqrt(uniform(rng, 0.0, 1.0));
    const double a = uniform(rng, 0.0, 2 * std::numbers::pi);
    s.pose.center = {cfg.width / 2.0 + r * std::cos(a), cfg.height / 2.0 + r * std::sin(a)};
    return s;
}

Image render_object(const ObjectSpec& spec, std::string id) {
    const auto cov = object_coverage(spec);
    const LocalFrame frame(spec);
    const double extent = object_extent(spec.object_type);
    Image img(std::move(id), spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const float a = cov[static_cast<std::size_t>(y) * spec.width + x];
            const Point l = frame.to_local(x + 0.5, y + 0.5);
            const double rr = std::min(1.0, std::hypot(l.x, l.y) / extent);
            const double shade = 1.0 - 0.1 * rr * rr;
            const double tex = 0.035 * value_noise(spec.texture_seed, x, y);
            for (int c = 0; c < 3; ++c) {
                const double bg = spec.background[c] + 0.01 * pixel_noise(spec.texture_seed, x, y, c);
                const double fg = spec.base_color[c] * spec.brightness * shade + tex +
                                  0.012 * pixel_noise(spec.texture_seed ^ 0xabcdULL, x, y, c);
                img.at(y, x, c) = quantize(static_cast<float>(bg * (1 - a) + fg * a));
            }
        }
    }
    return img;
}

Mask object_interior(const ObjectSpec& spec) {
    const auto cov = object_coverage(spec);
    Mask m(spec.height, spec.width);
    for (std::size_t i = 0; i < cov.size(); ++i) m.data[i] = cov[i] >= 1.f ? 1 : 0;
    return m;
}

Sample generate_normal(const GeneratorConfig& cfg, std::int64_t index) {
    if (index < 0) throw std::invalid_argument("generate_normal: index must be >= 0");
    const ObjectSpec spec = object_spec(cfg, index);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_good_%04lld", spec.object_type.c_str(), static_cast<long long>(index));
    Sample s;
    s.image = render_object(spec, buf);
    s.label = 0;
    s.concepts.assign(cfg.vocabulary.size(), 0);
    for (auto i : cfg.normal_concepts) s.concepts[i] = 1;
    s.origin = Origin::kReal;
    s.category = spec.object_type;
    s.subset = Subset::kTrain;
    return s;
}

std::vector<float> defect_coverage(const DefectGeometry& geometry, int height, int width) {
    std::vector<float> cov(static_cast<std::size_t>(height) * width, 0.f);
    const Box b = bounding_box(geometry);
    const int x0 = std::max(0, static_cast<int>(std::floor(b.x0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y0)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(b.x1)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(b.y1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx)
                    hits += inside_defect(geometry, {x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper}) ? 1 : 0;
            cov[static_cast<std::size_t>(y) * width + x] = static_cast<float>(hits) / (kSuper * kSuper);
        }
    return cov;
}

DefectSpec sample_defect(const GeneratorConfig& cfg, const ObjectSpec& object, const std::string& defect_type,
                         std::uint64_t seed) {
    const auto rule = cfg.concept_map.find(defect_type);
    if (rule == cfg.concept_map.end()) throw std::invalid_argument("no concept rule for " + defect_type);
    const Mask interior = object_interior(object);
    std::vector<Point> anchors;
    for (int y = 0; y < interior.height; ++y)
        for (int x = 0; x < interior.width; ++x)
            if (interior.at(y, x)) anchors.push_back({x + 0.5, y + 0.5});
    if (anchors.empty()) throw DefectRejected("object has an empty interior");

    Rng rng(seed);
    const double u = canvas_unit(object.height, object.width);
    DefectSpec d;
    d.defect_type = defect_type;
    d.implied_concepts = rule->second.implied;
    d.suppressed_concepts = rule->second.suppresses;
    d.intensity = uniform(rng, kMinIntensity, 1.0);

    for (int attempt = 0; attempt < 400; ++attempt) {
        const double shrink = std::pow(0.85, attempt / 40);
        const Point p = anchors[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(anchors.size()) - 1))];
        const double theta = uniform(rng, 0, 2 * std::numbers::pi);
        if (defect_type == "scratch") {
            const double len = uniform(rng, 20, 40) * u * shrink;
            const Point dir{std::cos(theta) * len / 2, std::sin(theta) * len / 2};
            d.geometry = LineGeometry{{p.x - dir.x, p.y - dir.y}, {p.x + dir.x, p.y + dir.y}, uniform(rng, 1.8, 2.8) * u};
        } else if (defect_type == "crack") {
            PolylineGeometry g;
            g.width = uniform(rng, 1.8, 2.6) * u;
            g.vertices.push_back(p);
            double heading = theta;
            const int segs = uniform_int(rng, 4, 6);
            for (int s = 0; s < segs; ++s) {
                heading += uniform(rng, -0.6, 0.6);
                const double step = uniform(rng, 5, 8) * u * shrink;
                const Point last = g.vertices.back();
                g.vertices.push_back({last.x + std::cos(heading) * step, last.y + std::sin(heading) * step});
            }
            const Point fork = g.vertices[static_cast<std::size_t>(segs / 2)];
            double bh = heading + (uniform(rng, 0, 1) < 0.5 ? -1 : 1) * uniform(rng, 0.7, 1.2);
            g.branch.push_back(fork);
            for (int s = 0; s < 2; ++s) {
                const double step = uniform(rng, 4, 7) * u * shrink;
                const Point last = g.branch.back();
                g.branch.push_back({last.x + std::cos(bh) * step, last.y + std::sin(bh) * step});
                bh += uniform(rng, -0.4, 0.4);
            }
            d.geometry = std::move(g);
        } else if (defect_type == "hole") {
            const double rx = uniform(rng, 6.0, 9.5) * u * shrink;
            d.geometry = EllipseGeometry{p, rx, rx * uniform(rng, 0.7, 1.0), uniform(rng, 0, 180)};
        } else if (defect_type == "stain") {
            BlobGeometry g;
            const int lobes = uniform_int(rng, 3, 5);
            for (int l = 0; l < lobes; ++l) {
                const double off = uniform(rng, 0, 6) * u * shrink;
                const double a = uniform(rng, 0, 2 * std::numbers::pi);
                g.lobes.push_back({{p.x + std::cos(a) * off, p.y + std::sin(a) * off}, uniform(rng, 3.5, 7) * u * shrink});
            }
            d.geometry = std::move(g);
        } else {
            throw std::invalid_argument("unknown defect type: " + defect_type);
        }
        const auto cov = defect_coverage(d.geometry, object.height, object.width);
        const bool any = std::any_of(cov.begin(), cov.end(), [](float c) { return c >= 0.5f; });
        if (any && geometry_contained(cov, interior, bounding_box(d.geometry), object.height, object.width)) return d;
    }
    throw DefectRejected("could not place a " + defect_type + " inside the object");
}

Sample inject_defect(const Sample& normal, const EditPrompt& prompt, std::uint64_t seed) {
    const DefectSpec& d = prompt.defect;
    const ObjectSpec& obj = prompt.object;
    if (normal.label != 0) throw std::invalid_argument("inject_defect: parent must be a normal sample");
    if (!prompt.pose_lock) throw std::invalid_argument("inject_defect: edits are pose-locked");
    if (!(d.intensity > 0.0 && d.intensity <= 1.0))
        throw std::invalid_argument("DefectSpec: intensity must lie in (0,1]");
    if (d.implied_concepts.empty()) throw std::invalid_argument("DefectSpec: implied_concepts must be nonempty");
    if (geometry_name(d.geometry) != expected_geometry(d.defect_type))
        throw std::invalid_argument("DefectSpec: geometry does not match defect type " + d.defect_type);
    if (normal.image.height != obj.height || normal.image.width != obj.width)
        throw std::invalid_argument("inject_defect: object spec and image sizes differ");
    for (auto i : d.implied_concepts)
        if (i >= normal.concepts.size()) throw std::invalid_argument("DefectSpec: implied concept out of range");

    const int h = obj.height;
    const int w = obj.width;
    const auto cov = defect_coverage(d.geometry, h, w);
    const Mask interior = object_interior(obj);
    if (!geometry_contained(cov, interior, bounding_box(d.geometry), h, w))
        throw DefectRejected("defect geometry escapes the object region");

    Sample out = normal;
    Mask mask(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (cov[i] < 0.5f) continue;
            mask.data[i] = 1;
            const Rgb target = defect_target(d, obj, {x + 0.5, y + 0.5});
            for (int c = 0; c < 3; ++c) {
                const double jitter = 0.02 * (2 * hash_unit(derive_seed(seed, static_cast<std::uint64_t>(i), c)) - 1);
                const double old = normal.image.at(y, x, c);
                out.image.at(y, x, c) =
                    quantize(static_cast<float>(old + (target[c] + jitter - old) * d.intensity));
            }
        }
    if (mask.count() == 0) throw DefectRejected("defect rasterizes to an empty mask");

    for (auto i : d.implied_concepts) out.concepts[i] = 1;
    for (auto i : d.suppressed_concepts)
        if (i < out.concepts.size()) out.concepts[i] = 0;
    out.label = 1;
    out.mask = std::move(mask);
    out.defect_type = d.defect_type;
    out.origin = Origin::kSynthetic;
    out.subset = Subset::kTrain;
    out.image.id = normal.id() + "_" + d.defect_type;
    return out;
}

std::int64_t real_anomaly_parent(std::size_t defect, int i) {
    return kParentOffset + static_cast<std::int64_t>(defect) * 100000 + i;
}

std::int64_t synthetic_parent(const GeneratorConfig& cfg, std::size_t defect, int i) {
    const auto n_train = static_cast<std::size_t>(cfg.n_normal - cfg.n_normal_test());
    if (n_train == 0) throw std::invalid_argument("synthetic anomalies need training normals as parents");
    return static_cast<std::int64_t>((static_cast<std::size_t>(i) * 7 + defect * 3) % n_train);
}

GeneratedDataset build_dataset(const GeneratorConfig& cfg) {
    cfg.validate();
    GeneratedDataset ds;
    ds.vocabulary = cfg.vocabulary;
    const int n_test = cfg.n_normal_test();
    const int n_train = cfg.n_normal - n_test;
    std::vector<std::int64_t> train_indices;
    for (int i = 0; i < cfg.n_normal; ++i) {
        Sample s = generate_normal(cfg, i);
        s.subset = i < n_train ? Subset::kTrain : Subset::kTest;
        if (i < n_train) train_indices.push_back(i);
        ds.samples.push_back(std::move(s));
    }

    auto make_anomaly = [&](std::int64_t parent_index, const Sample& parent, const std::string& type,
                            std::uint64_t seed, const std::string& id) {
        const ObjectSpec spec = object_spec(cfg, parent_index);
        EditPrompt prompt{sample_defect(cfg, spec, type, seed), spec, true};
        Sample a = inject_defect(parent, prompt, derive_seed(seed, 7));
        a.image.id = id;
        return a;
    };

    char buf[96];
    for (std::size_t d = 0; d < cfg.defect_types.size(); ++d) {
        const auto& type = cfg.defect_types[d];
        for (int i = 0; i < cfg.n_anomalous_per_defect; ++i) {
            const std::int64_t parent_index = real_anomaly_parent(d, i);
            const Sample parent = generate_normal(cfg, parent_index);
            std::snprintf(buf, sizeof buf, "%s_%s_%03d", parent.category.c_str(), type.c_str(), i);
            Sample a = make_anomaly(parent_index, parent, type, derive_seed(cfg.seed, 2, d, i), buf);
            a.origin = Origin::kReal;
            a.subset = Subset::kTest;
            ds.samples.push_back(std::move(a));
        }
    }
    if (cfg.n_synthetic_per_defect > 0 && train_indices.empty())
        throw std::invalid_argument("synthetic anomalies need training normals as parents");
    for (std::size_t d = 0; d < cfg.defect_types.size(); ++d) {
        const auto& type = cfg.defect_types[d];
        for (int i = 0; i < cfg.n_synthetic_per_defect; ++i) {
            const std::int64_t parent_index = synthetic_parent(cfg, d, i);
            const Sample& parent = ds.samples[static_cast<std::size_t>(parent_index)];
            std::snprintf(buf, sizeof buf, "%s_syn_%s_%03d", parent.category.c_str(), type.c_str(), i);
            Sample a = make_anomaly(parent_index, parent, type, derive_seed(cfg.seed, 3, d, i), buf);
            ds.synthetic.push_back(std::move(a));
        }
    }
    return ds;
}

}  // namespace convad::synth
