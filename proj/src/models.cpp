#include "cga/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cga {

using nlohmann::json;

// --- source model -----------------------------------------------------------

SourceModel::SourceModel(const SourceArchitecture& arch, std::uint64_t seed) : arch_(arch) {
    if (arch.input_dim < 1 || arch.hidden_dim < 1 || arch.feature_dim < 1 || arch.num_classes < 2)
        throw std::invalid_argument("invalid source architecture");
    std::mt19937_64 rng(seed);
    params_.add("w1", glorot(arch.input_dim, arch.hidden_dim, rng));
    params_.add("b1", Matrix::Zero(1, arch.hidden_dim));
    params_.add("w2", glorot(arch.hidden_dim, arch.feature_dim, rng));
    params_.add("b2", Matrix::Zero(1, arch.feature_dim));
    params_.add("wc", glorot(arch.feature_dim, arch.num_classes, rng));
    params_.add("bc", Matrix::Zero(1, arch.num_classes));
}

SourceModel::SourceModel(const SourceArchitecture& arch, ParameterSet params)
    : arch_(arch), params_(std::move(params)) {
    const auto expect = [&](const char* name, int r, int c) {
        if (!params_.contains(name)) throw CheckpointError(std::string("missing source parameter ") + name);
        const auto& v = params_.at(name);
        if (v.rows() != r || v.cols() != c) throw CheckpointError(std::string("bad shape for ") + name);
    };
    expect("w1", arch.input_dim, arch.hidden_dim);
    expect("b1", 1, arch.hidden_dim);
    expect("w2", arch.hidden_dim, arch.feature_dim);
    expect("b2", 1, arch.feature_dim);
    expect("wc", arch.feature_dim, arch.num_classes);
    expect("bc", 1, arch.num_classes);
}

ad::Var SourceModel::features(const ad::Var& x) const {
    if (x.cols() != arch_.input_dim) throw std::invalid_argument("source model: input dimension mismatch");
    ad::Var h = ad::tanh(ad::add_row(ad::matmul(x, params_.at("w1")), params_.at("b1")));
    return ad::tanh(ad::add_row(ad::matmul(h, params_.at("w2")), params_.at("b2")));
}

ad::Var SourceModel::classify_features(const ad::Var& f) const {
    return ad::add_row(ad::matmul(f, params_.at("wc")), params_.at("bc"));
}

Matrix SourceModel::features(const Matrix& x) const { return features(ad::constant(x)).value(); }

Matrix SourceModel::probabilities(const Matrix& x) const {
    return cga::softmax_rows(logits(ad::constant(x)).value());
}

std::vector<ad::Var> SourceModel::feature_extractor_vars() const {
    return {params_.at("w1"), params_.at("b1"), params_.at("w2"), params_.at("b2")};
}

std::vector<ad::Var> SourceModel::classifier_vars() const { return {params_.at("wc"), params_.at("bc")}; }

ProbabilityMatrix classify_dataset(const SourceModel& model, const Dataset& data) {
    Matrix p = model.probabilities(data.x);
    std::vector<bool> valid = data.valid;
    if (valid.empty()) valid.assign(static_cast<std::size_t>(data.size()), true);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (!valid[static_cast<std::size_t>(i)]) p.row(i).setConstant(1.0 / static_cast<double>(p.cols()));
    return ProbabilityMatrix(std::move(p), std::move(valid));
}

void train_supervised(SourceModel& model, const Dataset& data, const SupervisedTrainingOptions& options) {
    if (!data.has_labels()) throw InvalidInput("supervised training needs labels");
    if (options.batch_size < 1) throw std::invalid_argument("batch size must be positive");
    std::vector<int> order;
    for (Eigen::Index i = 0; i < data.size(); ++i)
        if (data.valid.empty() || data.valid[static_cast<std::size_t>(i)]) order.push_back(static_cast<int>(i));
    if (order.empty()) return;

    SgdMomentum opt(model.parameters().vars(), options.lr, options.momentum);
    std::mt19937_64 rng(options.seed);
    const int c = model.architecture().num_classes;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
            const auto b = static_cast<Eigen::Index>(end - start);
            Matrix x(b, data.dim());
            Matrix onehot = Matrix::Zero(b, c);
            for (Eigen::Index r = 0; r < b; ++r) {
                const int idx = order[start + static_cast<std::size_t>(r)];
                x.row(r) = data.x.row(idx);
                onehot(r, data.labels[static_cast<std::size_t>(idx)]) = 1.0;
            }
            ad::Var logp = ad::log_softmax_rows(model.logits(ad::constant(x)));
            ad::Var loss = ad::affine(ad::sum(ad::mul(logp, ad::constant(onehot))), -1.0 / static_cast<double>(b));
            opt.zero_grad();
            loss.backward();
            opt.step();
        }
    }
}

// --- toy vision-language model ----------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

namespace {

std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

std::uint64_t hash_string(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RowVector random_direction(int dim, std::uint64_t seed, double norm) {
    std::mt19937_64 rng(seed);
    RowVector v = random_normal(1, dim, 1.0, rng).row(0);
    return v.normalized() * norm;
}

}  // namespace

ToyVisionLanguageModel::ToyVisionLanguageModel(const ToyVisionLanguageSpec& spec,
                                               std::vector<std::string> class_names, const Matrix& anchors)
    : spec_(spec), class_names_(std::move(class_names)) {
    if (spec.input_dim < 1 || spec.embed_dim < 2 || !(spec.bandwidth > 0.0) || !(spec.logit_scale > 0.0) ||
        spec.context_length < 1)
        throw std::invalid_argument("invalid vision-language spec");
    if (anchors.rows() != static_cast<Eigen::Index>(class_names_.size()) || anchors.cols() != spec.input_dim)
        throw std::invalid_argument("anchors must be C x input_dim");

    std::mt19937_64 rng(spec.seed);
    projection_ = random_normal(spec.input_dim, spec.embed_dim, 1.0 / spec.bandwidth, rng);
    phase_ = random_uniform(1, spec.embed_dim, 0.0, 2.0 * std::numbers::pi, rng).row(0);

    const Matrix anchor_embeddings = encode_images(anchors);
    for (std::size_t k = 0; k < class_names_.size(); ++k)
        vocabulary_[class_names_[k]] = anchor_embeddings.row(static_cast<Eigen::Index>(k));
    for (const auto& w : tokenize(spec.prefix + " looks like a"))
        if (!vocabulary_.count(lower(w))) vocabulary_[lower(w)] = word_embedding(w);

    const auto prefix_words = tokenize(spec.prefix);
    Matrix ctx(spec.context_length, spec.embed_dim);
    for (int l = 0; l < spec.context_length; ++l) {
        if (static_cast<std::size_t>(l) < prefix_words.size())
            ctx.row(l) = word_embedding(prefix_words[static_cast<std::size_t>(l)]);
        else
            ctx.row(l) = random_direction(spec.embed_dim, spec.seed + 1000 + static_cast<std::uint64_t>(l),
                                          spec.filler_norm);
    }
    context_.add("context", std::move(ctx));
}

RowVector ToyVisionLanguageModel::word_embedding(const std::string& word) const {
    if (auto it = vocabulary_.find(word); it != vocabulary_.end()) return it->second;
    if (auto it = vocabulary_.find(lower(word)); it != vocabulary_.end()) return it->second;
    return random_direction(spec_.embed_dim, hash_string(lower(word), spec_.seed), spec_.filler_norm);
}

Matrix ToyVisionLanguageModel::encode_images(const Matrix& x) const {
    if (x.cols() != spec_.input_dim) throw std::invalid_argument("image encoder: input dimension mismatch");
    Matrix z = x * projection_;
    z.rowwise() += phase_;
    z = z.array().cos().matrix();
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double n = z.row(r).norm();
        if (n > 0.0) z.row(r) /= n;
    }
    return z;
}

ad::Var ToyVisionLanguageModel::encode_texts(const std::vector<std::vector<std::string>>& prompts) const {
    const auto p = static_cast<Eigen::Index>(prompts.size());
    Matrix content = Matrix::Zero(p, spec_.embed_dim);
    for (Eigen::Index r = 0; r < p; ++r) {
        const auto& tokens = prompts[static_cast<std::size_t>(r)];
        if (tokens.empty()) throw std::invalid_argument("text encoder: empty prompt");
        for (std::size_t t = 0; t < tokens.size(); ++t)
            content.row(r) += word_embedding(tokens[t]) / (1.0 + 0.5 * static_cast<double>(t));
    }
    const ad::Var& ctx = context_.at("context");
    ad::Var summed = ad::matmul(ad::constant(Matrix::Ones(p, ctx.rows())), ctx);
    return ad::normalize_rows(ad::add(summed, ad::constant(content)));
}

std::vector<Matrix> ToyVisionLanguageModel::frozen_state() const {
    std::vector<Matrix> out{projection_, Matrix(phase_), Matrix::Constant(1, 1, spec_.logit_scale)};
    for (const auto& [word, emb] : vocabulary_) out.emplace_back(emb);
    return out;
}

// --- checkpoints -------------------------------------------------------------

namespace {

json matrix_to_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
        throw CheckpointError("matrix payload size mismatch");
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data[k++].get<double>();
    return m;
}

json group_to_json(const ParameterSet& set) {
    json g = json::array();
    for (const auto& [name, var] : set.items()) g.push_back({{"name", name}, {"value", matrix_to_json(var.value())}});
    return g;
}

ParameterSet group_from_json(const json& g) {
    ParameterSet set;
    for (const auto& item : g) set.add(item.at("name").get<std::string>(), matrix_from_json(item.at("value")));
    return set;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << v;
    return ss.str();
}

}  // namespace

Matrix checkpoint_probe_batch(int input_dim) {
    Matrix probe(8, input_dim);
    for (Eigen::Index i = 0; i < probe.rows(); ++i)
        for (Eigen::Index j = 0; j < probe.cols(); ++j)
            probe(i, j) = 2.5 * std::sin(1.3 * static_cast<double>(i) + 0.7 * static_cast<double>(j) + 0.1);
    return probe;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointContents& c) {
    const auto& arch = c.source.architecture();
    json groups = {{"source", group_to_json(c.source.parameters())}};
    json manifest = json::array({"source"});
    if (c.context) {
        groups["context"] = group_to_json(*c.context);
        manifest.push_back("context");
    }
    if (c.fam_heads) {
        groups["fam_heads"] = group_to_json(*c.fam_heads);
        manifest.push_back("fam_heads");
    }
    const Matrix probe = checkpoint_probe_batch(arch.input_dim);
    json doc = {
        {"format", "cga-checkpoint"},
        {"version", kCheckpointVersion},
        {"manifest", {{"groups", manifest}}},
        {"architecture",
         {{"input_dim", arch.input_dim},
          {"hidden_dim", arch.hidden_dim},
          {"feature_dim", arch.feature_dim},
          {"num_classes", arch.num_classes}}},
        {"class_names", c.class_names},
        {"groups", groups},
        {"probe_hash", hex64(fnv1a(c.source.probabilities(probe)))},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (doc.value("format", "") != "cga-checkpoint") throw CheckpointError("not a cga checkpoint");
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw CheckpointError("incompatible checkpoint version " + std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
        const auto& a = doc.at("architecture");
        SourceArchitecture arch{a.at("input_dim").get<int>(), a.at("hidden_dim").get<int>(),
                                a.at("feature_dim").get<int>(), a.at("num_classes").get<int>()};
        SourceModel source(arch, group_from_json(doc.at("groups").at("source")));
        Checkpoint ck{std::move(source), doc.at("class_names").get<std::vector<std::string>>(), std::nullopt,
                      std::nullopt, doc.at("manifest").at("groups").get<std::vector<std::string>>()};
        if (ck.class_names.size() != static_cast<std::size_t>(arch.num_classes))
            throw CheckpointError("class name count differs from architecture");
        const auto& groups = doc.at("groups");
        if (groups.contains("context")) ck.context = group_from_json(groups.at("context"));
        if (groups.contains("fam_heads")) ck.fam_heads = group_from_json(groups.at("fam_heads"));
        const std::string expected = doc.at("probe_hash").get<std::string>();
        if (hex64(fnv1a(ck.source.probabilities(checkpoint_probe_batch(arch.input_dim)))) != expected)
            throw CheckpointError("checkpoint probe hash mismatch");
        return ck;
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace cga
