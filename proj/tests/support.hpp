#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cga/autodiff.hpp"

namespace cga::test {

// Dirichlet(alpha) rows via normalized gamma draws.
inline Matrix random_distributions(Eigen::Index n, Eigen::Index c, std::mt19937_64& rng, double alpha = 1.0) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    Matrix p(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) p(i, j) = gamma(rng) + 1e-300;
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double stddev = 1.0) {
    std::normal_distribution<double> n(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

struct GradientReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
};

// Compares backward() against central differences for every scalar of every
// parameter. Relative error is |a - n| / max(|a|, |n|), or the absolute gap
// when both are below `floor`.
inline GradientReport check_gradients(const std::function<ad::Var()>& loss, const std::vector<ad::Var>& params,
                                      double h = 1e-5, double floor = 1e-7) {
    ad::Var out = loss();
    out.backward();
    std::vector<Matrix> analytic;
    for (const auto& p : params)
        analytic.push_back(p.grad().size() ? p.grad() : Matrix::Zero(p.rows(), p.cols()));

    GradientReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Var p = params[k];
        for (Eigen::Index i = 0; i < p.value().size(); ++i) {
            double& x = p.mutable_value().data()[i];
            const double orig = x;
            x = orig + h;
            const double up = loss().scalar();
            x = orig - h;
            const double down = loss().scalar();
            x = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k].data()[i];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double err = scale < floor ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
            report.max_relative_error = std::max(report.max_relative_error, err);
            ++report.checked;
        }
    }
    return report;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("cga_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace cga::test
