#include "cga/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace cga {

Matrix Evaluation::confusion_rates() const {
    Matrix rates = confusion.cast<double>();
    for (Eigen::Index i = 0; i < rates.rows(); ++i)
        if (class_counts[static_cast<std::size_t>(i)] > 0) rates.row(i) /= class_counts[static_cast<std::size_t>(i)];
    return rates;
}

Evaluation evaluate_predictions(const std::vector<int>& labels, const std::vector<int>& predictions,
                                int num_classes, const std::vector<bool>& valid) {
    if (labels.size() != predictions.size()) throw InvalidInput("labels and predictions differ in length");
    if (!valid.empty() && valid.size() != labels.size()) throw InvalidInput("mask length differs from labels");
    Evaluation e;
    e.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
    e.class_counts.assign(static_cast<std::size_t>(num_classes), 0);
    std::size_t total = 0;
    std::size_t correct = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (!valid.empty() && !valid[t]) continue;
        const int y = labels[t];
        const int p = predictions[t];
        if (y < 0 || y >= num_classes || p < 0 || p >= num_classes)
            throw InvalidInput("label " + std::to_string(y) + " does not match " + std::to_string(num_classes) +
                               " classes");
        ++e.confusion(y, p);
        ++e.class_counts[static_cast<std::size_t>(y)];
        ++total;
        if (y == p) ++correct;
    }
    e.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    double sum = 0.0;
    int populated = 0;
    for (int k = 0; k < num_classes; ++k) {
        const int n = e.class_counts[static_cast<std::size_t>(k)];
        const double acc = n ? static_cast<double>(e.confusion(k, k)) / n : 0.0;
        e.per_class_accuracy.push_back(acc);
        if (n) {
            sum += acc;
            ++populated;
        }
    }
    e.mean_class_accuracy = populated ? sum / populated : 0.0;
    return e;
}

Evaluation evaluate(const SourceModel& model, const Dataset& data) {
    if (!data.has_labels()) throw InvalidInput("evaluation needs a labeled dataset");
    if (data.num_classes() != 0 && data.num_classes() != model.architecture().num_classes)
        throw InvalidInput("dataset has " + std::to_string(data.num_classes()) + " classes but the model predicts " +
                           std::to_string(model.architecture().num_classes));
    const ProbabilityMatrix p = classify_dataset(model, data);
    std::vector<int> pred;
    pred.reserve(static_cast<std::size_t>(p.num_samples()));
    for (Eigen::Index t = 0; t < p.num_samples(); ++t) pred.push_back(argmax(p.rows.row(t)));
    return evaluate_predictions(data.labels, pred, model.architecture().num_classes, p.valid);
}

void write_evaluation_csv(std::ostream& out, const Evaluation& eval, const std::vector<std::string>& class_names) {
    out << "class,count,correct,accuracy\n";
    for (std::size_t k = 0; k < eval.per_class_accuracy.size(); ++k) {
        out << class_names.at(k) << ',' << eval.class_counts[k] << ','
            << eval.confusion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) << ','
            << eval.per_class_accuracy[k] << '\n';
    }
}

void write_true_confusion_csv(std::ostream& out, const Evaluation& eval, const std::vector<std::string>& class_names) {
    for (std::size_t k = 0; k < class_names.size(); ++k) out << (k ? "," : "") << class_names[k];
    out << '\n';
    for (Eigen::Index i = 0; i < eval.confusion.rows(); ++i) {
        for (Eigen::Index j = 0; j < eval.confusion.cols(); ++j) out << (j ? "," : "") << eval.confusion(i, j);
        out << '\n';
    }
}

std::vector<double> off_diagonal_entries(const Matrix& m) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (i != j) out.push_back(m(i, j));
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace cga
