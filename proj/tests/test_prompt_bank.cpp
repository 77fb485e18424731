#include <doctest.h>

#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cga/prompt_bank.hpp"
#include "support.hpp"

using namespace cga;

namespace {

ToyVisionLanguageModel make_model(const std::vector<std::string>& names, int embed_dim = 32, std::uint64_t seed = 7) {
    ToyVisionLanguageSpec spec;
    spec.embed_dim = embed_dim;
    spec.seed = seed;
    Matrix anchors(static_cast<Eigen::Index>(names.size()), 2);
    for (Eigen::Index k = 0; k < anchors.rows(); ++k) {
        anchors(k, 0) = 3.0 * std::cos(2.0 * k);
        anchors(k, 1) = 3.0 * std::sin(2.0 * k);
    }
    return ToyVisionLanguageModel(spec, names, anchors);
}

double kl_oracle(const RowVector& q, const Vector& target) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < q.size(); ++k)
        if (q(k) > 0.0) s += q(k) * (std::log(q(k)) - std::log(std::max(target(k), 1e-8)));
    return s;
}

}  // namespace

TEST_CASE("rendered prompt texts") {
    const std::vector<std::string> names{"car", "bus"};
    CHECK(render_pair_text({0, 0}, names) == "A picture of a car");
    CHECK(render_pair_text({0, 1}, names) == "A picture of a car looks like a bus");
    CHECK(render_pair_text({1, 0}, names, "a photo of a") == "a photo of a bus looks like a car");
}

TEST_CASE("rendering is injective over pairs") {
    const std::vector<std::string> names{"car", "bus", "truck", "bike"};
    std::set<std::string> seen;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) seen.insert(render_pair_text({i, j}, names));
    CHECK(seen.size() == 16);
}

TEST_CASE("groups are keyed by primary class and start with the diagonal") {
    const auto bank = PromptBank::from_pairs({{2, 0}}, {"a", "b", "c"});
    REQUIRE(bank.groups.size() == 3);
    CHECK(bank.groups[0].size() == 1);
    CHECK(bank.groups[1].size() == 1);
    CHECK(bank.groups[2].size() == 2);
    for (std::size_t i = 0; i < 3; ++i) CHECK(bank.pairs[static_cast<std::size_t>(bank.groups[i][0])].diagonal());
    CHECK(bank.prompt_count() == 4);
    CHECK(bank.confusion_prompt_count() == 1);
}

TEST_CASE("prompt accounting") {
    for (int c : {2, 5, 126}) {
        std::vector<std::string> names;
        for (int k = 0; k < c; ++k) names.push_back("c" + std::to_string(k));
        std::vector<ConfusionPair> full;
        for (int k = 0; k < c; ++k) full.push_back({k, (k + 1) % c});
        const auto bank = PromptBank::from_pairs(full, names);
        CHECK(bank.prompt_count() == static_cast<std::size_t>(2 * c));
        if (c == 126) CHECK(bank.prompt_count() == 252);
        const auto plain = PromptBank::from_pairs({}, names);
        CHECK(plain.prompt_count() == static_cast<std::size_t>(c));
    }
}

TEST_CASE("a pair outside the class range is rejected") {
    CHECK_THROWS(PromptBank::from_pairs({{0, 5}}, {"a", "b"}));
}

TEST_CASE("encoded prompts are unit norm and grouped") {
    const std::vector<std::string> names{"car", "bus", "truck"};
    const auto model = make_model(names);
    const auto bank = PromptBank::from_pairs({{2, 0}, {0, 1}}, names);
    const EncodedPrompts enc = encode_prompt_groups(bank, model);
    CHECK(enc.features.rows() == 5);
    for (Eigen::Index r = 0; r < enc.features.rows(); ++r)
        CHECK(enc.features.value().row(r).norm() == doctest::Approx(1.0).epsilon(1e-5));
    const auto groups = enc.group_features();
    CHECK(groups.at(0).rows() == 2);
    CHECK(groups.at(1).rows() == 1);
    CHECK(groups.at(2).rows() == 2);
    CHECK(enc.base_rows == std::vector<int>{0, 1, 2});
}

TEST_CASE("multi-centre prediction with orthonormal groups") {
    const Matrix e1 = Matrix::Identity(2, 2).row(0);
    const Matrix e2 = Matrix::Identity(2, 2).row(1);
    const ProbabilityMatrix p = multi_center_predict(e1, {e1, e2}, 1.0);
    CHECK(p.rows(0, 0) == doctest::Approx(0.731).epsilon(1e-3));
    CHECK(p.rows(0, 1) == doctest::Approx(0.269).epsilon(1e-3));
}

TEST_CASE("an image equidistant from every group gets a uniform prediction") {
    Matrix img(1, 3);
    img << 0.0, 0.0, 1.0;
    const Matrix g0 = Matrix::Identity(3, 3).row(0);
    const Matrix g1 = Matrix::Identity(3, 3).row(1);
    const ProbabilityMatrix p = multi_center_predict(img, {g0, g1}, 5.0);
    CHECK(p.rows(0, 0) == doctest::Approx(0.5));
    CHECK(p.rows(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(multi_center_predict(Matrix::Ones(1, 3), {Matrix::Ones(1, 2), Matrix::Ones(1, 2)}, 1.0),
                    std::invalid_argument);
}

TEST_CASE("adding a group member never lowers that class's logit") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix img = test::gaussian(4, 6, rng).rowwise().normalized();
        std::vector<Matrix> groups;
        for (int c = 0; c < 3; ++c) groups.push_back(test::gaussian(1 + trial % 2, 6, rng).rowwise().normalized());
        auto logits = [&](const std::vector<Matrix>& gs) -> Matrix {
            return multi_center_predict(img, gs, 1.0).rows.array().log().matrix();
        };
        const Matrix before = logits(groups);
        auto grown = groups;
        Matrix extra(grown[1].rows() + 1, 6);
        extra << grown[1], test::gaussian(1, 6, rng).rowwise().normalized();
        grown[1] = extra;
        const Matrix after = logits(grown);
        // log-softmax differences remove the shared normalizer.
        for (Eigen::Index r = 0; r < img.rows(); ++r) {
            CHECK(after(r, 1) - after(r, 0) >= before(r, 1) - before(r, 0) - 1e-12);
        }
    }
}

TEST_CASE("argmax is invariant to the logit scale") {
    std::mt19937_64 rng(12);
    const Matrix img = test::gaussian(20, 5, rng).rowwise().normalized();
    std::vector<Matrix> groups;
    for (int c = 0; c < 4; ++c) groups.push_back(test::gaussian(2, 5, rng).rowwise().normalized());
    const auto a = multi_center_predict(img, groups, 1.0);
    const auto b = multi_center_predict(img, groups, 37.0);
    for (Eigen::Index r = 0; r < img.rows(); ++r) CHECK(argmax(a.rows.row(r)) == argmax(b.rows.row(r)));
}

TEST_CASE("diagonal-only prompts reduce to cosine-softmax zero-shot") {
    const std::vector<std::string> names{"car", "bus", "truck"};
    const auto model = make_model(names);
    const auto bank = PromptBank::from_pairs({}, names);
    const EncodedPrompts enc = encode_prompt_groups(bank, model);
    std::mt19937_64 rng(13);
    const Matrix img = model.encode_images(test::gaussian(10, 2, rng, 3.0));
    const Matrix mcc = multi_center_logits(img, enc, 10.0).value();
    const Matrix zero_shot = 10.0 * (img * enc.features.value().transpose());
    CHECK(mcc == zero_shot);
}

TEST_CASE("refinement loss matches a scalar KL oracle") {
    std::mt19937_64 rng(14);
    const Matrix base = test::gaussian(3, 4, rng).rowwise().normalized();
    const RowVector feature = test::gaussian(1, 4, rng).row(0).normalized();
    Vector bar(3);
    bar << 0.4211, 0.0, 0.5789;
    const RowVector q = softmax_rows(Matrix(5.0 * feature * base.transpose())).row(0);
    const double loss = refinement_loss(base, feature, bar, 5.0);
    CHECK(loss == doctest::Approx(kl_oracle(q, bar)).epsilon(1e-12));
    CHECK(loss > 0.0);
}

TEST_CASE("refinement loss vanishes when the prediction equals the target") {
    std::mt19937_64 rng(15);
    const Matrix base = test::gaussian(3, 4, rng).rowwise().normalized();
    const RowVector feature = test::gaussian(1, 4, rng).row(0).normalized();
    const RowVector q = softmax_rows(Matrix(2.0 * feature * base.transpose())).row(0);
    CHECK(std::abs(refinement_loss(base, feature, q.transpose(), 2.0)) < 1e-12);
}

TEST_CASE("refinement target must be a distribution") {
    const Matrix base = Matrix::Identity(3, 3);
    const RowVector f = Matrix::Identity(3, 3).row(0);
    CHECK_THROWS_AS(refinement_loss(base, f, Vector::Constant(3, 0.5), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(refinement_loss(base, f, Vector::Constant(2, 0.5), 1.0), std::invalid_argument);
}

TEST_CASE("refinement loss gradient with respect to the context") {
    const std::vector<std::string> names{"car", "bus", "truck"};
    auto model = make_model(names, 4, 21);
    Matrix cm(3, 3);
    cm << 0.55, 0.40, 0.05, 0.10, 0.85, 0.05, 0.35, 0.05, 0.60;
    const ConfusionGraph graph = graph_from_confusion_matrix(cm);
    const auto bank = PromptBank::from_graph(graph, names);
    REQUIRE(bank.confusion_prompt_count() == 2);
    auto loss = [&] {
        const EncodedPrompts enc = encode_prompt_groups(bank, model);
        return total_refinement_loss(bank, enc, graph, 3.0);
    };
    const auto r = test::check_gradients(loss, model.context().vars());
    CHECK(r.checked == 16);
    CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("total refinement loss is zero without confusion prompts") {
    const std::vector<std::string> names{"car", "bus"};
    const auto model = make_model(names);
    const auto bank = PromptBank::from_pairs({}, names);
    const ConfusionGraph graph = graph_from_confusion_matrix(Matrix::Identity(2, 2));
    CHECK(total_refinement_loss(bank, encode_prompt_groups(bank, model), graph, 10.0).scalar() == 0.0);
}

TEST_CASE("prompt export") {
    const auto bank = PromptBank::from_pairs({{1, 0}}, {"car", "bus"});
    std::stringstream out;
    write_prompts_jsonl(out, bank);
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(out, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 3);
    CHECK(rows[2]["text"] == "A picture of a bus looks like a car");
    CHECK(rows[2]["group"] == 1);
}
