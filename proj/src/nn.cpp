#include "cga/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cga {

ParameterSet::ParameterSet(const ParameterSet& other) {
    for (const auto& [name, var] : other.items_) add(name, var.value());
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
    if (this != &other) {
        ParameterSet copy(other);
        *this = std::move(copy);
    }
    return *this;
}

ad::Var& ParameterSet::add(const std::string& name, Matrix init) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    items_.emplace_back(name, ad::parameter(std::move(init)));
    return items_.back().second;
}

const ad::Var& ParameterSet::at(const std::string& name) const {
    for (const auto& [n, v] : items_)
        if (n == name) return v;
    throw std::out_of_range("no parameter named " + name);
}

ad::Var& ParameterSet::at(const std::string& name) {
    return const_cast<ad::Var&>(std::as_const(*this).at(name));
}

bool ParameterSet::contains(const std::string& name) const {
    for (const auto& item : items_)
        if (item.first == name) return true;
    return false;
}

std::vector<ad::Var> ParameterSet::vars() const {
    std::vector<ad::Var> out;
    out.reserve(items_.size());
    for (const auto& item : items_) out.push_back(item.second);
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& item : items_) n += static_cast<std::size_t>(item.second.value().size());
    return n;
}

bool ParameterSet::identical_to(const ParameterSet& other) const {
    if (items_.size() != other.items_.size()) return false;
    for (std::size_t k = 0; k < items_.size(); ++k) {
        const auto& a = items_[k];
        const auto& b = other.items_[k];
        if (a.first != b.first) return false;
        const Matrix& va = a.second.value();
        const Matrix& vb = b.second.value();
        if (va.rows() != vb.rows() || va.cols() != vb.cols()) return false;
        if (std::memcmp(va.data(), vb.data(), sizeof(double) * static_cast<std::size_t>(va.size())) != 0)
            return false;
    }
    return true;
}

SgdMomentum::SgdMomentum(std::vector<ad::Var> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    if (lr < 0.0) throw std::invalid_argument("learning rate must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
    for (const auto& p : params_) velocity_.push_back(Matrix::Zero(p.rows(), p.cols()));
}

void SgdMomentum::zero_grad() {
    for (auto& p : params_) p.node()->grad.setZero(p.rows(), p.cols());
}

void SgdMomentum::step() {
    if (lr_ == 0.0) return;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        velocity_[k] = momentum_ * velocity_[k] + params_[k].grad();
        params_[k].mutable_value() -= lr_ * velocity_[k];
    }
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return random_uniform(fan_in, fan_out, -limit, limit, rng);
}

std::uint64_t fnv1a(const Matrix& m, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

}  // namespace cga
