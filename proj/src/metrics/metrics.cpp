#include "convad/metrics/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace convad::metrics {
namespace {

template <typename T>
double auc_impl(std::span<const T> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the midrank sum of positives keeps everything integral.
    std::uint64_t twice_rank_sum = 0;
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        std::uint64_t pos_in_group = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) pos_in_group += labels[idx[j++]] != 0;
        // Ranks i+1..j; midrank*2 = i+1+j.
        twice_rank_sum += pos_in_group * (i + 1 + j);
        pos += pos_in_group;
        i = j;
    }
    const std::uint64_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc needs both classes");
    const std::uint64_t num = twice_rank_sum - pos * (pos + 1);
    return static_cast<double>(num) / static_cast<double>(2 * pos * neg);
}

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return auc_impl(scores, labels);
}
double roc_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) { return auc_impl(scores, labels); }

F1Result best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("best_f1: length mismatch");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::uint64_t pos = 0;
    for (auto l : labels) pos += l != 0;
    if (pos == 0 || pos == labels.size()) throw std::invalid_argument("best_f1 needs both classes");
    F1Result best{-1, 0};
    std::uint64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        const double t = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == t) (labels[idx[i++]] ? tp : fp)++;
        const std::uint64_t fn = pos - tp;
        const double f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
        if (f1 >= best.f1) best = {f1, t};
    }
    return best;
}

int label_components(int height, int width, std::span<const std::uint8_t> mask, std::vector<int>& labels) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    Dsu dsu(n);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const int i = y * width + x;
            if (!mask[i]) continue;
            // Already-visited neighbours: W, NW, N, NE.
            const int dy[4] = {0, -1, -1, -1};
            const int dx[4] = {-1, -1, 0, 1};
            for (int d = 0; d < 4; ++d) {
                const int yy = y + dy[d], xx = x + dx[d];
                if (yy < 0 || xx < 0 || xx >= width) continue;
                if (mask[yy * width + xx]) dsu.unite(i, yy * width + xx);
            }
        }
    labels.assign(n, 0);
    std::vector<int> root_label(n, 0);
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const int r = dsu.find(static_cast<int>(i));
        if (!root_label[r]) root_label[r] = ++count;
        labels[i] = root_label[r];
    }
    return count;
}

double pro(std::span<const MapView> maps, double fpr_limit) {
    if (!(fpr_limit > 0 && fpr_limit <= 1)) throw std::invalid_argument("pro: fpr_limit must be in (0,1]");
    struct Px {
        float score;
        int region;  // global region id, -1 for normal pixels
    };
    std::vector<Px> px;
    std::vector<double> region_size;
    std::vector<int> labels;
    for (const auto& m : maps) {
        const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
        if (m.values.size() != n || m.mask.size() != n) throw std::invalid_argument("pro: map and mask shapes differ");
        const int base = static_cast<int>(region_size.size());
        const int count = label_components(m.height, m.width, m.mask, labels);
        region_size.resize(base + count, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const int r = labels[i] ? base + labels[i] - 1 : -1;
            if (r >= 0) region_size[r] += 1;
            px.push_back({m.values[i], r});
        }
    }
    if (region_size.empty()) throw std::invalid_argument("pro: no anomalous region in any mask");
    std::size_t negatives = 0;
    for (const auto& p : px) negatives += p.region < 0;
    if (negatives == 0) throw std::invalid_argument("pro: no normal pixels");

    std::sort(px.begin(), px.end(), [](const Px& a, const Px& b) { return a.score > b.score; });
    const double n_regions = static_cast<double>(region_size.size());
    std::vector<double> hits(region_size.size(), 0.0);
    double overlap_sum = 0;
    std::size_t fp = 0;
    double prev_fpr = 0, prev_pro = 0, area = 0;
    for (std::size_t i = 0; i < px.size();) {
        const float t = px[i].score;
        for (; i < px.size() && px[i].score == t; ++i) {
            if (px[i].region < 0)
                ++fp;
            else
                hits[px[i].region] += 1;
        }
        overlap_sum = 0;
        for (std::size_t r = 0; r < hits.size(); ++r) overlap_sum += hits[r] / region_size[r];
        const double fpr = static_cast<double>(fp) / static_cast<double>(negatives);
        const double pr = overlap_sum / n_regions;
        if (fpr >= fpr_limit) {
            const double w = fpr > prev_fpr ? (fpr_limit - prev_fpr) / (fpr - prev_fpr) : 0.0;
            const double at_limit = prev_pro + w * (pr - prev_pro);
            area += (fpr_limit - prev_fpr) * (prev_pro + at_limit) / 2;
            return area / fpr_limit;
        }
        area += (fpr - prev_fpr) * (prev_pro + pr) / 2;
        prev_fpr = fpr;
        prev_pro = pr;
    }
    return area / fpr_limit;
}

}  // namespace convad::metrics
