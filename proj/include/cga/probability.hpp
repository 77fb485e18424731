#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "cga/autodiff.hpp"

namespace cga {

// Thrown for malformed user input (configs, dataset files, mismatched shapes
// coming from files). The CLI maps it to exit code 2.
class InvalidInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-sample class-probability rows over a target dataset.
///
/// Rows flagged invalid (e.g. samples that failed to decode) are kept in place
/// so that row indices stay aligned with sample ids; every consumer skips them.
struct ProbabilityMatrix {
    Matrix rows;
    std::vector<bool> valid;

    ProbabilityMatrix() = default;
    explicit ProbabilityMatrix(Matrix r);
    ProbabilityMatrix(Matrix r, std::vector<bool> mask);

    Eigen::Index num_samples() const { return rows.rows(); }
    Eigen::Index num_classes() const { return rows.cols(); }
    bool is_valid(Eigen::Index i) const { return valid[static_cast<std::size_t>(i)]; }
    std::size_t valid_count() const;

    // Throws std::invalid_argument unless every valid row is a distribution
    // within `tolerance` and C >= 2.
    void validate(double tolerance = 1e-6) const;
};

Matrix softmax_rows(const Matrix& logits);

int argmax(const Eigen::Ref<const RowVector>& row);

}  // namespace cga
