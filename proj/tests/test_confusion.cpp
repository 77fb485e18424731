#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cga/confusion.hpp"
#include "support.hpp"

using namespace cga;

namespace {

// Per-sample loop: keep the n largest entries (lowest index wins ties),
// accumulate weighted rows, divide by the weight total.
Matrix naive_confusion(const Matrix& p, int n_top) {
    const auto c = p.cols();
    Matrix num = Matrix::Zero(c, c);
    std::vector<double> den(static_cast<std::size_t>(c), 0.0);
    for (Eigen::Index t = 0; t < p.rows(); ++t) {
        std::vector<int> idx(static_cast<std::size_t>(c));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p(t, a) > p(t, b); });
        for (int r = 0; r < n_top; ++r) {
            const int k = idx[static_cast<std::size_t>(r)];
            for (Eigen::Index j = 0; j < c; ++j) num(k, j) += p(t, k) * p(t, j);
            den[static_cast<std::size_t>(k)] += p(t, k);
        }
    }
    for (Eigen::Index k = 0; k < c; ++k) num.row(k) /= den[static_cast<std::size_t>(k)];
    return num;
}

bool has_pair(const std::vector<ConfusionPair>& pairs, int i, int j) {
    return std::find(pairs.begin(), pairs.end(), ConfusionPair{i, j}) != pairs.end();
}

}  // namespace

TEST_CASE("contribution weights keep the top entries") {
    Matrix p(2, 3);
    p << 0.5, 0.3, 0.2, 0.4, 0.4, 0.2;
    const Matrix w = compute_contribution_weights(ProbabilityMatrix(p), 2);
    CHECK(w(0, 0) == 0.5);
    CHECK(w(0, 1) == 0.3);
    CHECK(w(0, 2) == 0.0);
    CHECK(w(1, 0) == 0.4);
    CHECK(w(1, 1) == 0.4);
    CHECK(w(1, 2) == 0.0);
}

TEST_CASE("contribution weights break ties by lowest class index") {
    Matrix p(1, 4);
    p << 0.2, 0.3, 0.3, 0.2;
    const Matrix w = compute_contribution_weights(ProbabilityMatrix(p), 3);
    CHECK(w(0, 0) == 0.2);
    CHECK(w(0, 3) == 0.0);
}

TEST_CASE("contribution weights of a one-hot row") {
    Matrix p = Matrix::Zero(1, 4);
    p(0, 2) = 1.0;
    for (int n = 1; n <= 4; ++n) {
        const Matrix w = compute_contribution_weights(ProbabilityMatrix(p), n);
        CHECK(w.sum() == 1.0);
        CHECK(w(0, 2) == 1.0);
    }
}

TEST_CASE("n_top outside [1, C] is rejected") {
    const ProbabilityMatrix p(Matrix::Constant(2, 3, 1.0 / 3));
    CHECK_THROWS_AS(compute_contribution_weights(p, 0), std::invalid_argument);
    CHECK_THROWS_AS(compute_contribution_weights(p, 4), std::invalid_argument);
}

TEST_CASE("confusion matrix on a two-sample example") {
    Matrix p(2, 3);
    p << 0.6, 0.4, 0.0, 0.8, 0.2, 0.0;
    const Matrix cm = estimate_confusion_matrix(ProbabilityMatrix(p), 2);
    CHECK(cm(0, 0) == doctest::Approx(0.714).epsilon(1e-3));
    CHECK(cm(0, 1) == doctest::Approx(0.286).epsilon(1e-3));
    CHECK(cm(0, 2) == 0.0);
}

TEST_CASE("confusion matrix matches the per-sample loop") {
    std::mt19937_64 rng(3);
    const Matrix p = test::random_distributions(200, 10, rng, 0.5);
    const Matrix cm = estimate_confusion_matrix(ProbabilityMatrix(p), 2);
    CHECK((cm - naive_confusion(p, 2)).cwiseAbs().maxCoeff() <= 1e-6);
    for (Eigen::Index k = 0; k < cm.rows(); ++k) CHECK(cm.row(k).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("one-hot predictions give the identity and no confusion pairs") {
    Matrix p = Matrix::Zero(6, 3);
    for (int t = 0; t < 6; ++t) p(t, t % 3) = 1.0;
    const ConfusionGraph g = build_confusion_graph(ProbabilityMatrix(p), 2);
    CHECK(g.cm.isApprox(Matrix::Identity(3, 3)));
    CHECK(g.off_diagonal_pairs().empty());
    CHECK(g.pairs.size() == 3);
    CHECK(g.threshold == doctest::Approx(1.0 / 3));
}

TEST_CASE("a class that never reaches the top falls back to one-hot") {
    Matrix p(3, 3);
    p << 0.7, 0.3, 0.0, 0.2, 0.8, 0.0, 0.6, 0.4, 0.0;
    ConfusionDiagnostics diag;
    const Matrix cm = estimate_confusion_matrix(ProbabilityMatrix(p), 1, &diag);
    CHECK(diag.unsupported_classes == std::vector<int>{2});
    CHECK(cm(2, 2) == 1.0);
    CHECK(cm.row(2).sum() == 1.0);
}

TEST_CASE("masked rows are ignored") {
    Matrix p(3, 2);
    p << 0.9, 0.1, 0.0, 1.0, 0.3, 0.7;
    const Matrix all = estimate_confusion_matrix(ProbabilityMatrix(p), 1);
    const Matrix masked = estimate_confusion_matrix(ProbabilityMatrix(p, {true, true, false}), 1);
    CHECK(masked(1, 1) == 1.0);
    CHECK(all(1, 1) < 1.0);
}

TEST_CASE("pair extraction on a 3x3 example") {
    Matrix cm(3, 3);
    cm << 0.70, 0.25, 0.05, 0.10, 0.85, 0.05, 0.40, 0.05, 0.55;
    const PairExtraction e = extract_confusion_pairs(cm);
    CHECK(e.threshold == doctest::Approx(1.0 / 3));
    REQUIRE(e.pairs.size() == 1);
    CHECK(e.pairs[0] == ConfusionPair{2, 0});
}

TEST_CASE("the C-th largest entry caps the pair count") {
    Matrix cm(3, 3);
    cm << 0.05, 0.50, 0.45, 0.40, 0.05, 0.55, 0.52, 0.43, 0.05;
    const PairExtraction e = extract_confusion_pairs(cm);
    CHECK(e.threshold == doctest::Approx(0.50));
    REQUIRE(e.pairs.size() == 3);
    CHECK(e.pairs[0] == ConfusionPair{1, 2});
    CHECK(e.pairs[1] == ConfusionPair{2, 0});
    CHECK(e.pairs[2] == ConfusionPair{0, 1});
    CHECK_FALSE(e.ties_exceed_cap);
}

TEST_CASE("ties at the threshold are all kept and flagged") {
    Matrix cm(3, 3);
    cm << 0.1, 0.45, 0.45, 0.45, 0.1, 0.45, 0.45, 0.45, 0.1;
    const PairExtraction e = extract_confusion_pairs(cm);
    CHECK(e.pairs.size() == 6);
    CHECK(e.ties_exceed_cap);
    const ConfusionGraph g = graph_from_confusion_matrix(cm);
    CHECK(g.diagnostics.threshold_ties_exceed_cap);
}

TEST_CASE("pair count never exceeds C on random inputs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int c = 2 + trial % 9;
        const Matrix cm = test::random_distributions(c, c, rng, 0.3 + 0.1 * (trial % 5));
        const PairExtraction e = extract_confusion_pairs(cm);
        CHECK(e.pairs.size() <= static_cast<std::size_t>(c));
        int above = 0;
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j)
                if (i != j && cm(i, j) >= 1.0 / c) ++above;
        if (above > c) CHECK(e.pairs.size() == static_cast<std::size_t>(c));
        for (std::size_t k = 1; k < e.pairs.size(); ++k)
            CHECK(cm(e.pairs[k - 1].primary, e.pairs[k - 1].secondary) >=
                  cm(e.pairs[k].primary, e.pairs[k].secondary));
    }
}

TEST_CASE("ratio and centroid of a pair") {
    Matrix cm(3, 3);
    cm << 0.70, 0.25, 0.05, 0.10, 0.85, 0.05, 0.40, 0.05, 0.55;
    const ConfusionGraph g = graph_from_confusion_matrix(cm);
    const ConfusionPair p{2, 0};
    CHECK(g.ratios.at(p) == doctest::Approx(1.375));
    const Vector& bar = g.centroids.at(p);
    CHECK(bar(0) == doctest::Approx(0.4211).epsilon(1e-3));
    CHECK(bar(1) == 0.0);
    CHECK(bar(2) == doctest::Approx(0.5789).epsilon(1e-3));
    CHECK(bar(2) / bar(0) == doctest::Approx(1.375).epsilon(1e-6));

    const ConfusionPair d{1, 1};
    CHECK(g.ratios.at(d) == 1.0);
    CHECK(g.centroids.at(d).isApprox(Vector::Unit(3, 1)));
    CHECK(g.pairs.front() == ConfusionPair{0, 0});
}

TEST_CASE("planted one-directional confusion is asymmetric") {
    // Class 0 samples leak into class 1; class 1 samples are confident.
    Matrix p(40, 3);
    for (int t = 0; t < 40; ++t) {
        if (t < 10) p.row(t) << 0.45, 0.55, 0.0;
        else if (t < 20) p.row(t) << 0.7, 0.3, 0.0;
        else if (t < 30) p.row(t) << 0.02, 0.96, 0.02;
        else p.row(t) << 0.0, 0.05, 0.95;
    }
    const ConfusionGraph g = build_confusion_graph(ProbabilityMatrix(p), 2);
    const auto off = g.off_diagonal_pairs();
    CHECK(has_pair(off, 0, 1));
    CHECK_FALSE(has_pair(off, 1, 0));
}

TEST_CASE("duplicating every sample leaves the matrix unchanged") {
    std::mt19937_64 rng(7);
    const Matrix p = test::random_distributions(50, 5, rng);
    Matrix twice(100, 5);
    twice << p, p;
    const Matrix a = estimate_confusion_matrix(ProbabilityMatrix(p), 2);
    const Matrix b = estimate_confusion_matrix(ProbabilityMatrix(twice), 2);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("permuting classes permutes the matrix and the pairs") {
    std::mt19937_64 rng(8);
    const int c = 5;
    const Matrix p = test::random_distributions(80, c, rng, 0.4);
    const std::vector<int> perm{3, 0, 4, 1, 2};  // new column k holds old class perm[k]
    Matrix q(p.rows(), c);
    for (int k = 0; k < c; ++k) q.col(k) = p.col(perm[static_cast<std::size_t>(k)]);

    const ConfusionGraph a = build_confusion_graph(ProbabilityMatrix(p), 2);
    const ConfusionGraph b = build_confusion_graph(ProbabilityMatrix(q), 2);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j)
            CHECK(b.cm(i, j) == doctest::Approx(a.cm(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])));
    std::vector<ConfusionPair> relabeled;
    for (const auto& pr : b.off_diagonal_pairs())
        relabeled.push_back({perm[static_cast<std::size_t>(pr.primary)], perm[static_cast<std::size_t>(pr.secondary)]});
    auto original = a.off_diagonal_pairs();
    std::sort(relabeled.begin(), relabeled.end());
    std::sort(original.begin(), original.end());
    CHECK(relabeled == original);
}

TEST_CASE("confusion CSV is lossless at 6 decimals") {
    std::mt19937_64 rng(9);
    const Matrix cm = test::random_distributions(4, 4, rng);
    const std::vector<std::string> names{"car", "bus", "truck", "bike"};
    std::stringstream first;
    write_confusion_csv(first, cm, names);
    std::vector<std::string> read_names;
    std::istringstream in(first.str());
    const Matrix back = read_confusion_csv(in, &read_names);
    CHECK(read_names == names);
    CHECK((back - cm).cwiseAbs().maxCoeff() <= 5e-7);
    std::stringstream second;
    write_confusion_csv(second, back, names);
    CHECK(second.str() == first.str());
    CHECK(first.str().find("0.") != std::string::npos);
}

TEST_CASE("pairs export names both classes") {
    Matrix cm(3, 3);
    cm << 0.70, 0.25, 0.05, 0.10, 0.85, 0.05, 0.40, 0.05, 0.55;
    std::stringstream out;
    write_pairs_jsonl(out, graph_from_confusion_matrix(cm), {"a", "b", "c"});
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(out, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["primary"] == "c");
    CHECK(rows[0]["secondary"] == "a");
    CHECK(rows[0]["cm_value"].get<double>() == doctest::Approx(0.40));
    CHECK(rows[0]["ratio"].get<double>() == doctest::Approx(1.375));
}
