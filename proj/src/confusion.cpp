#include "cga/confusion.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cga {

std::vector<ConfusionPair> ConfusionGraph::off_diagonal_pairs() const {
    std::vector<ConfusionPair> out;
    for (const auto& p : pairs)
        if (!p.diagonal()) out.push_back(p);
    return out;
}

bool ConfusionGraph::contains(const ConfusionPair& p) const {
    return std::find(pairs.begin(), pairs.end(), p) != pairs.end();
}

Matrix compute_contribution_weights(const ProbabilityMatrix& probs, int n_top) {
    const auto c = probs.num_classes();
    if (n_top < 1 || n_top > c)
        throw std::invalid_argument("n_top must lie in [1, C], got " + std::to_string(n_top));

    Matrix w = Matrix::Zero(probs.num_samples(), c);
    std::vector<int> order(static_cast<std::size_t>(c));
    for (Eigen::Index t = 0; t < probs.num_samples(); ++t) {
        if (!probs.is_valid(t)) continue;
        std::iota(order.begin(), order.end(), 0);
        const auto row = probs.rows.row(t);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row(a) > row(b); });
        for (int k = 0; k < n_top; ++k) w(t, order[k]) = row(order[k]);
    }
    return w;
}

Matrix estimate_confusion_matrix(const ProbabilityMatrix& probs, int n_top,
                                 ConfusionDiagnostics* diagnostics) {
    const Matrix w = compute_contribution_weights(probs, n_top);
    const auto c = probs.num_classes();

    // Masked rows carry zero weight, but may hold NaNs; zero them out of P too.
    Matrix p = probs.rows;
    for (Eigen::Index t = 0; t < p.rows(); ++t)
        if (!probs.is_valid(t)) p.row(t).setZero();

    Matrix cm = w.transpose() * p;
    const Vector totals = w.colwise().sum().transpose();
    for (Eigen::Index k = 0; k < c; ++k) {
        if (totals(k) > 0.0) {
            cm.row(k) /= totals(k);
        } else {
            cm.row(k).setZero();
            cm(k, k) = 1.0;
            if (diagnostics) diagnostics->unsupported_classes.push_back(static_cast<int>(k));
        }
    }
    return cm;
}

PairExtraction extract_confusion_pairs(const Matrix& cm) {
    const auto c = cm.rows();
    if (cm.cols() != c || c < 2) throw std::invalid_argument("confusion matrix must be square with C >= 2");

    struct Entry {
        double value;
        ConfusionPair pair;
    };
    std::vector<Entry> entries;
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j)
            if (i != j) entries.push_back({cm(i, j), {i, j}});
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.value > b.value; });

    PairExtraction out;
    const double kc = entries[static_cast<std::size_t>(c) - 1].value;
    out.threshold = std::max(1.0 / static_cast<double>(c), kc);
    for (const auto& e : entries) {
        if (e.value < out.threshold) break;
        out.pairs.push_back(e.pair);
    }
    out.ties_exceed_cap = out.pairs.size() > static_cast<std::size_t>(c);
    return out;
}

Vector pair_centroid(int num_classes, const ConfusionPair& pair, double ratio) {
    Vector v = Vector::Zero(num_classes);
    if (pair.diagonal()) {
        v(pair.primary) = 1.0;
        return v;
    }
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw std::invalid_argument("pair ratio must be positive and finite");
    v(pair.primary) = ratio / (1.0 + ratio);
    v(pair.secondary) = 1.0 / (1.0 + ratio);
    return v;
}

ConfusionGraph graph_from_confusion_matrix(const Matrix& cm, ConfusionDiagnostics diagnostics) {
    ConfusionGraph g;
    g.cm = cm;
    const int c = static_cast<int>(cm.rows());
    const PairExtraction extracted = extract_confusion_pairs(cm);
    g.threshold = extracted.threshold;
    diagnostics.threshold_ties_exceed_cap = extracted.ties_exceed_cap;
    g.diagnostics = std::move(diagnostics);

    for (int i = 0; i < c; ++i) {
        const ConfusionPair p{i, i};
        g.pairs.push_back(p);
        g.ratios[p] = 1.0;
        g.centroids[p] = pair_centroid(c, p, 1.0);
    }
    for (const auto& p : extracted.pairs) {
        const double off = cm(p.primary, p.secondary);
        assert(off > 0.0);
        const double ratio = cm(p.primary, p.primary) / off;
        g.pairs.push_back(p);
        g.ratios[p] = ratio;
        g.centroids[p] = pair_centroid(c, p, ratio);
    }
    return g;
}

ConfusionGraph build_confusion_graph(const ProbabilityMatrix& probs, int n_top) {
    ConfusionDiagnostics diag;
    Matrix cm = estimate_confusion_matrix(probs, n_top, &diag);
    return graph_from_confusion_matrix(cm, std::move(diag));
}

void write_confusion_csv(std::ostream& out, const Matrix& cm, const std::vector<std::string>& class_names) {
    if (class_names.size() != static_cast<std::size_t>(cm.cols()))
        throw std::invalid_argument("write_confusion_csv: class name count differs from matrix size");
    for (std::size_t k = 0; k < class_names.size(); ++k) out << (k ? "," : "") << class_names[k];
    out << '\n' << std::fixed << std::setprecision(6);
    for (Eigen::Index i = 0; i < cm.rows(); ++i) {
        for (Eigen::Index j = 0; j < cm.cols(); ++j) out << (j ? "," : "") << cm(i, j);
        out << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

Matrix read_confusion_csv(std::istream& in, std::vector<std::string>* class_names) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("confusion csv: missing header");
    std::vector<std::string> names;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) names.push_back(cell);
    }
    const auto c = static_cast<Eigen::Index>(names.size());
    Matrix cm(c, c);
    for (Eigen::Index i = 0; i < c; ++i) {
        if (!std::getline(in, line)) throw InvalidInput("confusion csv: expected " + std::to_string(c) + " rows");
        std::stringstream ss(line);
        std::string cell;
        for (Eigen::Index j = 0; j < c; ++j) {
            if (!std::getline(ss, cell, ',')) throw InvalidInput("confusion csv: short row " + std::to_string(i));
            cm(i, j) = std::stod(cell);
        }
    }
    if (class_names) *class_names = std::move(names);
    return cm;
}

void write_pairs_jsonl(std::ostream& out, const ConfusionGraph& graph,
                       const std::vector<std::string>& class_names) {
    for (const auto& p : graph.off_diagonal_pairs()) {
        nlohmann::json j{
            {"primary", class_names.at(static_cast<std::size_t>(p.primary))},
            {"secondary", class_names.at(static_cast<std::size_t>(p.secondary))},
            {"cm_value", graph.cm(p.primary, p.secondary)},
            {"ratio", graph.ratios.at(p)},
        };
        out << j.dump() << '\n';
    }
}

}  // namespace cga
