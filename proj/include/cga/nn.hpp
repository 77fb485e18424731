#pragma once

// Parameter containers and the optimizer shared by every trainable part.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cga/autodiff.hpp"

namespace cga {

/// Ordered, named collection of leaf parameters. Copies are deep: a copied
/// set never shares storage with its source.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet& other);
    ParameterSet& operator=(const ParameterSet& other);
    ParameterSet(ParameterSet&&) noexcept = default;
    ParameterSet& operator=(ParameterSet&&) noexcept = default;

    ad::Var& add(const std::string& name, Matrix init);
    const ad::Var& at(const std::string& name) const;
    ad::Var& at(const std::string& name);
    bool contains(const std::string& name) const;

    const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
    std::vector<ad::Var> vars() const;
    std::size_t scalar_count() const;

    // Bitwise equality of names, shapes and values.
    bool identical_to(const ParameterSet& other) const;

private:
    std::vector<std::pair<std::string, ad::Var>> items_;
};

/// Stochastic gradient descent with heavy-ball momentum:
/// v <- momentum * v + grad, theta <- theta - lr * v.
class SgdMomentum {
public:
    SgdMomentum(std::vector<ad::Var> params, double lr, double momentum);

    void zero_grad();
    void step();

    double learning_rate() const { return lr_; }

private:
    std::vector<ad::Var> params_;
    std::vector<Matrix> velocity_;
    double lr_;
    double momentum_;
};

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);
Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::mt19937_64& rng);

// Glorot-uniform initialization for a fan_in x fan_out weight.
Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

// 64-bit FNV-1a over the raw bytes of a matrix, row-major.
std::uint64_t fnv1a(const Matrix& m, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace cga
