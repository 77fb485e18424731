#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every Var owns a node in a dynamically built graph. Parameters are leaf
// nodes created with `parameter()`; calling `backward()` on a 1x1 result
// overwrites the `grad()` of every node reachable from it with the gradient
// of that result. Nodes that do not depend on any parameter are treated as
// constants and never receive a backward pass.

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace cga {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace ad {

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const;

    // Direct access for optimizers and initializers. Only valid on leaves.
    Matrix& mutable_value();

    void backward() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    bool defined() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) scaled per row by col (n x 1).
Var mul_col(const Var& a, const Var& col);
// scale * a + shift, elementwise.
Var affine(const Var& a, double scale, double shift = 0.0);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var normalize_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_rows(const Var& a);
Var concat_rows(const Var& top, const Var& bottom);
// Picks rows of `a` by index (repeats allowed).
Var gather_rows(const Var& a, const std::vector<int>& rows);
// For each group g, out(:, g) = max over columns c in groups[g] of a(:, c).
// The gradient routes to the first maximizing column.
Var group_max(const Var& a, const std::vector<std::vector<int>>& groups);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return affine(a, s); }

}  // namespace ad
}  // namespace cga
