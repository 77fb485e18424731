#include "cga/prompt_bank.hpp"

#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "cga/label_fusion.hpp"

namespace cga {

namespace {

const std::string& class_name(const std::vector<std::string>& names, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= names.size())
        throw std::out_of_range("class index " + std::to_string(k) + " out of range");
    return names[static_cast<std::size_t>(k)];
}

}  // namespace

std::string render_pair_text(const ConfusionPair& pair, const std::vector<std::string>& class_names,
                             const std::string& prefix) {
    std::string text = prefix + " " + class_name(class_names, pair.primary);
    if (!pair.diagonal()) text += " looks like a " + class_name(class_names, pair.secondary);
    return text;
}

std::vector<std::string> pair_tokens(const ConfusionPair& pair, const std::vector<std::string>& class_names) {
    std::vector<std::string> tokens{class_name(class_names, pair.primary)};
    if (!pair.diagonal()) {
        for (const char* w : {"looks", "like", "a"}) tokens.emplace_back(w);
        tokens.push_back(class_name(class_names, pair.secondary));
    }
    return tokens;
}

PromptBank PromptBank::from_pairs(std::vector<ConfusionPair> pairs, std::vector<std::string> class_names,
                                  std::string prefix) {
    PromptBank bank;
    bank.class_names = std::move(class_names);
    bank.prefix = std::move(prefix);
    const int c = bank.num_classes();
    bank.groups.assign(static_cast<std::size_t>(c), {});
    for (int i = 0; i < c; ++i) {
        bank.groups[static_cast<std::size_t>(i)].push_back(static_cast<int>(bank.pairs.size()));
        bank.pairs.push_back({i, i});
    }
    for (const auto& p : pairs) {
        if (p.diagonal()) continue;
        if (p.primary < 0 || p.primary >= c || p.secondary < 0 || p.secondary >= c)
            throw std::out_of_range("confusion pair outside class range");
        bank.groups[static_cast<std::size_t>(p.primary)].push_back(static_cast<int>(bank.pairs.size()));
        bank.pairs.push_back(p);
    }
    return bank;
}

PromptBank PromptBank::from_graph(const ConfusionGraph& graph, std::vector<std::string> class_names,
                                  bool with_confusion, std::string prefix) {
    if (graph.num_classes() != static_cast<int>(class_names.size()))
        throw std::invalid_argument("class name count differs from confusion graph size");
    return from_pairs(with_confusion ? graph.off_diagonal_pairs() : std::vector<ConfusionPair>{},
                      std::move(class_names), std::move(prefix));
}

std::size_t PromptBank::confusion_prompt_count() const { return pairs.size() - class_names.size(); }

std::vector<std::string> PromptBank::rendered_texts() const {
    std::vector<std::string> out;
    for (const auto& p : pairs) out.push_back(render_pair_text(p, class_names, prefix));
    return out;
}

std::map<int, std::vector<ConfusionPair>> PromptBank::group_pairs() const {
    std::map<int, std::vector<ConfusionPair>> out;
    for (std::size_t i = 0; i < groups.size(); ++i)
        for (int idx : groups[i]) out[static_cast<int>(i)].push_back(pairs[static_cast<std::size_t>(idx)]);
    return out;
}

std::map<int, Matrix> EncodedPrompts::group_features() const {
    std::map<int, Matrix> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        Matrix m(static_cast<Eigen::Index>(groups[i].size()), features.cols());
        for (std::size_t r = 0; r < groups[i].size(); ++r)
            m.row(static_cast<Eigen::Index>(r)) = features.value().row(groups[i][r]);
        out[static_cast<int>(i)] = std::move(m);
    }
    return out;
}

PromptEncodingError::PromptEncodingError(const ConfusionPair& p, const std::string& what)
    : std::runtime_error("failed to encode prompt (" + std::to_string(p.primary) + "," +
                         std::to_string(p.secondary) + "): " + what),
      pair(p) {}

EncodedPrompts encode_prompt_groups(const PromptBank& bank, const VisionLanguageModel& model) {
    std::vector<std::vector<std::string>> prompts;
    prompts.reserve(bank.pairs.size());
    for (const auto& p : bank.pairs) prompts.push_back(pair_tokens(p, bank.class_names));

    EncodedPrompts out;
    try {
        out.features = model.encode_texts(prompts);
    } catch (const std::exception& e) {
        // Re-encode one by one to find the culprit.
        for (std::size_t k = 0; k < prompts.size(); ++k) {
            try {
                model.encode_texts({prompts[k]});
            } catch (const std::exception& inner) {
                throw PromptEncodingError(bank.pairs[k], inner.what());
            }
        }
        throw;
    }
    out.groups = bank.groups;
    for (const auto& g : bank.groups) out.base_rows.push_back(g.front());
    return out;
}

ad::Var multi_center_logits(const Matrix& image_features, const EncodedPrompts& prompts, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("logit scale must be positive");
    if (image_features.cols() != prompts.features.cols())
        throw std::invalid_argument("image and text feature dimensions differ");
    ad::Var sims = ad::matmul(ad::constant(image_features), ad::transpose(prompts.features));
    return ad::affine(ad::group_max(sims, prompts.groups), scale);
}

ProbabilityMatrix multi_center_predict(const Matrix& image_features, const std::vector<Matrix>& group_features,
                                       double scale) {
    if (group_features.size() < 2) throw std::invalid_argument("need at least two class groups");
    EncodedPrompts prompts;
    Eigen::Index total = 0;
    for (const auto& g : group_features) {
        if (g.rows() == 0) throw std::invalid_argument("empty prompt group");
        if (g.cols() != image_features.cols()) throw std::invalid_argument("image and text feature dimensions differ");
        total += g.rows();
    }
    Matrix stacked(total, image_features.cols());
    Eigen::Index row = 0;
    for (const auto& g : group_features) {
        std::vector<int> members;
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            stacked.row(row) = g.row(r);
            members.push_back(static_cast<int>(row++));
        }
        prompts.groups.push_back(std::move(members));
    }
    prompts.features = ad::constant(std::move(stacked));
    return ProbabilityMatrix(cga::softmax_rows(multi_center_logits(image_features, prompts, scale).value()));
}

namespace {

void check_centroid(const Vector& centroid, Eigen::Index classes) {
    if (centroid.size() != classes || (centroid.array() < 0.0).any() || std::abs(centroid.sum() - 1.0) > 1e-6)
        throw std::invalid_argument("refinement target is not a probability distribution over the classes");
}

}  // namespace

ad::Var refinement_loss(const ad::Var& base_features, const ad::Var& pair_feature, const Vector& centroid,
                        double scale) {
    check_centroid(centroid, base_features.rows());
    if (pair_feature.rows() != 1 || pair_feature.cols() != base_features.cols())
        throw std::invalid_argument("pair feature must be 1 x E");
    ad::Var logits = ad::affine(ad::matmul(pair_feature, ad::transpose(base_features)), scale);
    return kl_to_reference(logits, Matrix(centroid.transpose()));
}

double refinement_loss(const Matrix& base_features, const RowVector& pair_feature, const Vector& centroid,
                       double scale) {
    return refinement_loss(ad::constant(base_features), ad::constant(Matrix(pair_feature)), centroid, scale).scalar();
}

ad::Var total_refinement_loss(const PromptBank& bank, const EncodedPrompts& prompts, const ConfusionGraph& graph,
                              double scale) {
    ad::Var base = ad::gather_rows(prompts.features, prompts.base_rows);
    ad::Var total;
    for (std::size_t k = 0; k < bank.pairs.size(); ++k) {
        const auto& p = bank.pairs[k];
        if (p.diagonal()) continue;
        ad::Var feature = ad::gather_rows(prompts.features, {static_cast<int>(k)});
        ad::Var loss = refinement_loss(base, feature, graph.centroids.at(p), scale);
        total = total.defined() ? ad::add(total, loss) : loss;
    }
    return total.defined() ? total : ad::constant(Matrix::Zero(1, 1));
}

void write_prompts_jsonl(std::ostream& out, const PromptBank& bank) {
    const auto texts = bank.rendered_texts();
    for (std::size_t k = 0; k < bank.pairs.size(); ++k) {
        const auto& p = bank.pairs[k];
        nlohmann::json j{{"primary", bank.class_names[static_cast<std::size_t>(p.primary)]},
                         {"secondary", bank.class_names[static_cast<std::size_t>(p.secondary)]},
                         {"text", texts[k]},
                         {"group", p.primary}};
        out << j.dump() << '\n';
    }
}

}  // namespace cga
