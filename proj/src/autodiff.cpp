#include "cga/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace cga::ad {

namespace {

Var make(Matrix value, std::vector<std::shared_ptr<Node>> parents,
         std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Matrix softmax_value(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double m = a.row(r).maxCoeff();
        RowVector e = (a.row(r).array() - m).exp().matrix();
        out.row(r) = e / e.sum();
    }
    return out;
}

}  // namespace

double Var::scalar() const {
    if (rows() != 1 || cols() != 1) throw std::logic_error("Var::scalar on non-scalar");
    return node_->value(0, 0);
}

Matrix& Var::mutable_value() {
    if (!node_->parents.empty()) throw std::logic_error("mutable_value on a non-leaf Var");
    return node_->value;
}

void Var::backward() const {
    if (rows() != 1 || cols() != 1) throw std::logic_error("backward requires a scalar");

    // Iterative post-order DFS to get a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    node_->grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

Var constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->grad = Matrix::Zero(value.rows(), value.cols());
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

#define CGA_ACC(k, expr)                                   \
    do {                                                   \
        if (self.parents[k]->requires_grad) self.parents[k]->grad += (expr); \
    } while (0)

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    return make(a.value() * b.value(), {a.node(), b.node()}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& bv = self.parents[1]->value;
        CGA_ACC(0, self.grad * bv.transpose());
        CGA_ACC(1, av.transpose() * self.grad);
    });
}

Var transpose(const Var& a) {
    return make(a.value().transpose(), {a.node()},
                [](Node& self) { CGA_ACC(0, self.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
        CGA_ACC(0, self.grad);
        CGA_ACC(1, self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
        CGA_ACC(0, self.grad);
        CGA_ACC(1, -self.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
        CGA_ACC(0, self.grad.cwiseProduct(self.parents[1]->value));
        CGA_ACC(1, self.grad.cwiseProduct(self.parents[0]->value));
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw std::invalid_argument("add_row: expected a 1 x cols row");
    Matrix v = a.value();
    v.rowwise() += row.value().row(0);
    return make(std::move(v), {a.node(), row.node()}, [](Node& self) {
        CGA_ACC(0, self.grad);
        CGA_ACC(1, self.grad.colwise().sum());
    });
}

Var mul_col(const Var& a, const Var& col) {
    if (col.cols() != 1 || col.rows() != a.rows())
        throw std::invalid_argument("mul_col: expected a rows x 1 column");
    Matrix v = a.value().array().colwise() * col.value().col(0).array();
    return make(std::move(v), {a.node(), col.node()}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& cv = self.parents[1]->value;
        CGA_ACC(0, Matrix(self.grad.array().colwise() * cv.col(0).array()));
        CGA_ACC(1, Matrix(self.grad.cwiseProduct(av).rowwise().sum()));
    });
}

Var affine(const Var& a, double scale, double shift) {
    Matrix v = (a.value().array() * scale + shift).matrix();
    return make(std::move(v), {a.node()}, [scale](Node& self) { CGA_ACC(0, scale * self.grad); });
}

Var tanh(const Var& a) {
    return make(a.value().array().tanh().matrix(), {a.node()}, [](Node& self) {
        CGA_ACC(0, Matrix(self.grad.array() * (1.0 - self.value.array().square())));
    });
}

Var sigmoid(const Var& a) {
    Matrix v = a.value().unaryExpr([](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    return make(std::move(v), {a.node()}, [](Node& self) {
        CGA_ACC(0, Matrix(self.grad.array() * self.value.array() * (1.0 - self.value.array())));
    });
}

Var exp(const Var& a) {
    return make(a.value().array().exp().matrix(), {a.node()}, [](Node& self) {
        CGA_ACC(0, self.grad.cwiseProduct(self.value));
    });
}

Var softmax_rows(const Var& a) {
    return make(softmax_value(a.value()), {a.node()}, [](Node& self) {
        const Matrix& s = self.value;
        Matrix gs = self.grad.cwiseProduct(s);
        Matrix g = gs - Matrix(s.array().colwise() * gs.rowwise().sum().array());
        CGA_ACC(0, g);
    });
}

Var log_softmax_rows(const Var& a) {
    Matrix v(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double m = a.value().row(r).maxCoeff();
        const double lse = m + std::log((a.value().row(r).array() - m).exp().sum());
        v.row(r) = a.value().row(r).array() - lse;
    }
    return make(std::move(v), {a.node()}, [](Node& self) {
        Matrix s = self.value.array().exp().matrix();
        Matrix g = self.grad - Matrix(s.array().colwise() * self.grad.rowwise().sum().array());
        CGA_ACC(0, g);
    });
}

Var normalize_rows(const Var& a) {
    Vector norms = a.value().rowwise().norm();
    if ((norms.array() <= 0.0).any()) throw std::invalid_argument("normalize_rows: zero-norm row");
    Matrix v = a.value().array().colwise() / norms.array();
    return make(std::move(v), {a.node()}, [norms](Node& self) {
        const Matrix& y = self.value;
        Vector dots = self.grad.cwiseProduct(y).rowwise().sum();
        Matrix g = self.grad - Matrix(y.array().colwise() * dots.array());
        CGA_ACC(0, Matrix(g.array().colwise() / norms.array()));
    });
}

Var sum(const Var& a) {
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return make(std::move(v), {a.node()}, [](Node& self) {
        const auto& p = self.parents[0]->value;
        CGA_ACC(0, Matrix::Constant(p.rows(), p.cols(), self.grad(0, 0)));
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw std::invalid_argument("mean of empty matrix");
    return affine(sum(a), 1.0 / n);
}

Var sum_rows(const Var& a) {
    return make(Matrix(a.value().rowwise().sum()), {a.node()}, [](Node& self) {
        const auto cols = self.parents[0]->value.cols();
        CGA_ACC(0, Matrix(self.grad.replicate(1, cols)));
    });
}

Var concat_rows(const Var& top, const Var& bottom) {
    if (top.cols() != bottom.cols()) throw std::invalid_argument("concat_rows: column mismatch");
    Matrix v(top.rows() + bottom.rows(), top.cols());
    v << top.value(), bottom.value();
    const auto split = top.rows();
    return make(std::move(v), {top.node(), bottom.node()}, [split](Node& self) {
        CGA_ACC(0, self.grad.topRows(split));
        CGA_ACC(1, self.grad.bottomRows(self.grad.rows() - split));
    });
}

Var gather_rows(const Var& a, const std::vector<int>& rows) {
    Matrix v(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= a.rows()) throw std::out_of_range("gather_rows: index");
        v.row(static_cast<Eigen::Index>(r)) = a.value().row(rows[r]);
    }
    return make(std::move(v), {a.node()}, [rows](Node& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        for (std::size_t r = 0; r < rows.size(); ++r)
            parent.grad.row(rows[r]) += self.grad.row(static_cast<Eigen::Index>(r));
    });
}

Var group_max(const Var& a, const std::vector<std::vector<int>>& groups) {
    const auto n = a.rows();
    const auto g = static_cast<Eigen::Index>(groups.size());
    Matrix v(n, g);
    Eigen::MatrixXi arg(n, g);
    for (Eigen::Index j = 0; j < g; ++j) {
        const auto& members = groups[static_cast<std::size_t>(j)];
        if (members.empty()) throw std::invalid_argument("group_max: empty group");
        for (int c : members)
            if (c < 0 || c >= a.cols()) throw std::out_of_range("group_max: column index");
        for (Eigen::Index r = 0; r < n; ++r) {
            int best = members.front();
            for (int c : members)
                if (a.value()(r, c) > a.value()(r, best)) best = c;
            v(r, j) = a.value()(r, best);
            arg(r, j) = best;
        }
    }
    return make(std::move(v), {a.node()}, [arg](Node& self) {
        auto& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        for (Eigen::Index r = 0; r < arg.rows(); ++r)
            for (Eigen::Index j = 0; j < arg.cols(); ++j) parent.grad(r, arg(r, j)) += self.grad(r, j);
    });
}

#undef CGA_ACC

}  // namespace cga::ad
