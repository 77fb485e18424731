#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cga/models.hpp"

namespace cga {

struct Evaluation {
    std::vector<double> per_class_accuracy;
    std::vector<int> class_counts;
    double accuracy = 0.0;             // over all valid samples
    double mean_class_accuracy = 0.0;  // unweighted mean over classes with samples
    Eigen::MatrixXi confusion;         // rows: true class, cols: predicted class

    // Confusion counts divided by per-class counts (rows of empty classes stay 0).
    Matrix confusion_rates() const;
};

Evaluation evaluate_predictions(const std::vector<int>& labels, const std::vector<int>& predictions,
                                int num_classes, const std::vector<bool>& valid = {});

/// Per-class accuracy of the source model's argmax on a labeled dataset.
Evaluation evaluate(const SourceModel& model, const Dataset& data);

// CSV: class,count,correct,accuracy  (accuracy as a fraction in [0,1]).
void write_evaluation_csv(std::ostream& out, const Evaluation& eval, const std::vector<std::string>& class_names);
// CSV with class-name header, one row per true class, raw counts.
void write_true_confusion_csv(std::ostream& out, const Evaluation& eval, const std::vector<std::string>& class_names);

std::vector<double> off_diagonal_entries(const Matrix& m);

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either input is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cga
