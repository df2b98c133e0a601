#include "convad/cbm/export.hpp"

#include <Eigen/Dense>
#include <sstream>

namespace convad::cbm {

Projection pca2(const std::vector<std::vector<double>>& x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    if (n < 3) throw std::invalid_argument("PCA needs at least 3 rows");
    const auto d = static_cast<Eigen::Index>(x[0].size());
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(x[i].size()) != d) throw std::invalid_argument("ragged PCA input");
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = x[i][j];
    }
    m.rowwise() -= m.colwise().mean();
    const Eigen::MatrixXd cov = (m.transpose() * m) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Projection p;
    p.points.assign(static_cast<std::size_t>(n), {0.0, 0.0});
    for (int c = 0; c < 2; ++c) {
        const Eigen::Index col = d - 1 - c;  // eigenvalues ascend
        Eigen::VectorXd v = col >= 0 ? Eigen::VectorXd(eig.eigenvectors().col(col)) : Eigen::VectorXd::Zero(d);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        p.explained_variance[c] = col >= 0 ? std::max(0.0, eig.eigenvalues()(col)) : 0.0;
        p.components[c].assign(v.data(), v.data() + d);
        const Eigen::VectorXd proj = m * v;
        for (Eigen::Index i = 0; i < n; ++i) p.points[i][c] = proj(i);
    }
    return p;
}

LogitTable export_concept_logits(const TrainedCBM& model, std::span<const Sample> samples) {
    LogitTable t;
    std::vector<std::vector<double>> x;
    for (const auto& s : samples) {
        LogitRow r{s.id(), to_string(s.subset), s.defect_type.value_or(""), model.g.logits(s.image)};
        x.push_back(r.logits);
        t.rows.push_back(std::move(r));
    }
    if (x.size() >= 3) t.projection = pca2(x);
    return t;
}

nlohmann::json LogitTable::to_json() const {
    nlohmann::json j;
    auto rows_j = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::json r = {{"id", rows[i].id}, {"split", rows[i].split}, {"logits", rows[i].logits}};
        r["defect_type"] = rows[i].defect_type.empty() ? nlohmann::json(nullptr) : nlohmann::json(rows[i].defect_type);
        if (projection) r["pca"] = projection->points[i];
        rows_j.push_back(std::move(r));
    }
    j["rows"] = rows_j;
    if (projection)
        j["pca"] = {{"components", projection->components}, {"explained_variance", projection->explained_variance}};
    else
        j["pca"] = {{"skipped", "fewer than 3 samples"}};
    return j;
}

std::string LogitTable::to_csv(const ConceptVocabulary& vocab) const {
    std::ostringstream out;
    out.precision(9);
    out << "id,split,defect_type";
    for (const auto& c : vocab.concepts()) out << ",\"" << c.name << "\"";
    out << ",pc1,pc2\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << rows[i].id << ',' << rows[i].split << ',' << rows[i].defect_type;
        for (double v : rows[i].logits) out << ',' << v;
        if (projection)
            out << ',' << projection->points[i][0] << ',' << projection->points[i][1];
        else
            out << ",,";
        out << '\n';
    }
    return out.str();
}

}  // namespace convad::cbm
