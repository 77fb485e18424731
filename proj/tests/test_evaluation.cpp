#include <doctest.h>

#include <sstream>

#include "cga/evaluation.hpp"
#include "support.hpp"

using namespace cga;

TEST_CASE("a perfect predictor") {
    const std::vector<int> y{0, 1, 2, 2, 1};
    const Evaluation e = evaluate_predictions(y, y, 3);
    CHECK(e.accuracy == 1.0);
    CHECK(e.mean_class_accuracy == 1.0);
    CHECK(e.confusion_rates() == Matrix::Identity(3, 3));
}

TEST_CASE("counts match a naive loop") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 3);
    std::vector<int> y, p;
    std::vector<bool> valid;
    for (int i = 0; i < 50; ++i) {
        y.push_back(u(rng) % 3);  // class 3 never appears as a label
        p.push_back(u(rng));
        valid.push_back(i % 7 != 0);
    }
    const Evaluation e = evaluate_predictions(y, p, 4, valid);
    int correct = 0, total = 0;
    std::vector<int> per(4, 0), hit(4, 0);
    for (int i = 0; i < 50; ++i) {
        if (!valid[static_cast<std::size_t>(i)]) continue;
        ++total;
        ++per[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
        if (y[static_cast<std::size_t>(i)] == p[static_cast<std::size_t>(i)]) {
            ++correct;
            ++hit[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
        }
    }
    CHECK(e.accuracy == doctest::Approx(static_cast<double>(correct) / total));
    double mean = 0.0;
    for (int k = 0; k < 3; ++k) {
        CHECK(e.class_counts[static_cast<std::size_t>(k)] == per[static_cast<std::size_t>(k)]);
        mean += static_cast<double>(hit[static_cast<std::size_t>(k)]) / per[static_cast<std::size_t>(k)];
    }
    CHECK(e.class_counts[3] == 0);
    CHECK(e.mean_class_accuracy == doctest::Approx(mean / 3.0));
    CHECK(e.confusion.sum() == total);
    CHECK(e.confusion_rates().row(3).isZero());
}

TEST_CASE("a uniform random predictor sits near chance") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> u(0, 4);
    const int n = 5000;
    std::vector<int> y, p;
    for (int i = 0; i < n; ++i) {
        y.push_back(u(rng));
        p.push_back(u(rng));
    }
    const double acc = evaluate_predictions(y, p, 5).accuracy;
    const double sigma = std::sqrt(0.2 * 0.8 / n);
    CHECK(std::abs(acc - 0.2) < 3.0 * sigma);
}

TEST_CASE("evaluation csv") {
    const Evaluation e = evaluate_predictions({0, 0, 1}, {0, 1, 1}, 2);
    std::ostringstream out;
    write_evaluation_csv(out, e, {"car", "bus"});
    CHECK(out.str().rfind("class,count,correct,accuracy\ncar,2,1,0.5", 0) == 0);
}

TEST_CASE("spearman") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
    // Textbook example with ties: ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4).
    CHECK(spearman({1, 2, 2, 3}, {1, 2, 3, 4}) == doctest::Approx(0.9486833).epsilon(1e-6));
    CHECK(spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}) == doctest::Approx(0.8));
}

TEST_CASE("off-diagonal entries in row-major order") {
    Matrix m(3, 3);
    m << 0, 1, 2, 3, 0, 4, 5, 6, 0;
    CHECK(off_diagonal_entries(m) == std::vector<double>{1, 2, 3, 4, 5, 6});
}
