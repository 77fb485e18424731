#include "cga/probability.hpp"

#include <algorithm>
#include <cmath>

namespace cga {

ProbabilityMatrix::ProbabilityMatrix(Matrix r)
    : rows(std::move(r)), valid(static_cast<std::size_t>(rows.rows()), true) {}

ProbabilityMatrix::ProbabilityMatrix(Matrix r, std::vector<bool> mask)
    : rows(std::move(r)), valid(std::move(mask)) {
    if (valid.size() != static_cast<std::size_t>(rows.rows()))
        throw std::invalid_argument("ProbabilityMatrix: mask length differs from row count");
}

std::size_t ProbabilityMatrix::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

void ProbabilityMatrix::validate(double tolerance) const {
    if (rows.cols() < 2) throw std::invalid_argument("ProbabilityMatrix: need at least 2 classes");
    if (valid.size() != static_cast<std::size_t>(rows.rows()))
        throw std::invalid_argument("ProbabilityMatrix: mask length differs from row count");
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        if (!is_valid(i)) continue;
        const auto row = rows.row(i);
        if (!row.allFinite() || row.minCoeff() < 0.0 || row.maxCoeff() > 1.0 ||
            std::abs(row.sum() - 1.0) > tolerance)
            throw std::invalid_argument("ProbabilityMatrix: row " + std::to_string(i) +
                                        " is not a probability distribution");
    }
}

Matrix softmax_rows(const Matrix& logits) {
    return ad::softmax_rows(ad::constant(logits)).value();
}

int argmax(const Eigen::Ref<const RowVector>& row) {
    Eigen::Index idx = 0;
    row.maxCoeff(&idx);
    return static_cast<int>(idx);
}

}  // namespace cga
