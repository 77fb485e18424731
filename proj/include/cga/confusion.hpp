#pragma once

// Directional class-confusion estimation from soft predictions.
//
// A confusion pair (i, j) means "samples of primary class i tend to be
// predicted as secondary class j". Pairs are ordered: (i, j) being present
// says nothing about (j, i).

#include <compare>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cga/probability.hpp"

namespace cga {

struct ConfusionPair {
    int primary = 0;
    int secondary = 0;

    bool diagonal() const { return primary == secondary; }
    auto operator<=>(const ConfusionPair&) const = default;
};

struct ConfusionDiagnostics {
    // Classes that received zero total contribution weight; their cm row
    // falls back to one-hot.
    std::vector<int> unsupported_classes;
    // Set when ties at the threshold admit more than C off-diagonal pairs.
    bool threshold_ties_exceed_cap = false;
};

struct PairExtraction {
    std::vector<ConfusionPair> pairs;  // off-diagonal only, by descending cm value
    double threshold = 0.0;
    bool ties_exceed_cap = false;
};

struct ConfusionGraph {
    Matrix cm;
    double threshold = 0.0;
    // All C diagonal pairs first (in class order), then off-diagonal pairs by
    // descending cm value.
    std::vector<ConfusionPair> pairs;
    std::map<ConfusionPair, double> ratios;
    std::map<ConfusionPair, Vector> centroids;
    ConfusionDiagnostics diagnostics;

    int num_classes() const { return static_cast<int>(cm.rows()); }
    std::vector<ConfusionPair> off_diagonal_pairs() const;
    bool contains(const ConfusionPair& p) const;
};

/// Keeps the `n_top` largest probabilities of every row (ties broken by lowest
/// class index) and zeroes the rest. Invalid rows come back all-zero.
Matrix compute_contribution_weights(const ProbabilityMatrix& probs, int n_top);

/// Weighted probability centre per class: row k is the average of all
/// probability rows weighted by their contribution weight to class k.
Matrix estimate_confusion_matrix(const ProbabilityMatrix& probs, int n_top,
                                 ConfusionDiagnostics* diagnostics = nullptr);

/// Off-diagonal entries at or above max(1/C, K_C), where K_C is the C-th
/// largest off-diagonal value.
PairExtraction extract_confusion_pairs(const Matrix& cm);

/// Two-support distribution on {i, j} whose i/j ratio equals `ratio`.
Vector pair_centroid(int num_classes, const ConfusionPair& pair, double ratio);

ConfusionGraph build_confusion_graph(const ProbabilityMatrix& probs, int n_top);
// Builds the graph from an already estimated cm.
ConfusionGraph graph_from_confusion_matrix(const Matrix& cm, ConfusionDiagnostics diagnostics = {});

// CSV: header of class names, one row per primary class, 6 decimals.
void write_confusion_csv(std::ostream& out, const Matrix& cm, const std::vector<std::string>& class_names);
Matrix read_confusion_csv(std::istream& in, std::vector<std::string>* class_names = nullptr);

// One JSON object per line: {primary, secondary, cm_value, ratio}.
void write_pairs_jsonl(std::ostream& out, const ConfusionGraph& graph,
                       const std::vector<std::string>& class_names);

}  // namespace cga
