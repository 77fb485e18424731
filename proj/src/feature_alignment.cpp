#include "cga/feature_alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace cga {

const char* to_string(BankView view) { return view == BankView::Source ? "source" : "clip"; }

double pair_score(const Eigen::Ref<const RowVector>& p, const ConfusionPair& pair, double ratio) {
    const double pi = p(pair.primary);
    if (pair.diagonal()) return pi;
    const double pj = p(pair.secondary);
    const double mass = 0.5 * (pi + pj);
    if (pj <= 0.0) return mass - 0.5;
    const double r = pi / pj;
    return mass - 0.5 * std::abs((r - ratio) / (r + ratio));
}

int default_m_sel(Eigen::Index num_samples, std::size_t num_pairs) {
    if (num_pairs == 0) throw std::invalid_argument("default_m_sel: empty pair set");
    const auto n = static_cast<double>(num_samples);
    const int auto_m = static_cast<int>(std::ceil(n / (4.0 * static_cast<double>(num_pairs))));
    return std::max(4, auto_m);
}

FeatureCenterBank build_feature_bank(const Matrix& features, const ProbabilityMatrix& probs,
                                     const ConfusionGraph& graph, int m_sel, BankView view) {
    if (features.rows() != probs.num_samples())
        throw std::invalid_argument("features and probabilities must be row-aligned");
    if (m_sel < 1) throw std::invalid_argument("m_sel must be positive");

    FeatureCenterBank bank;
    bank.view = view;
    bank.pair_index = graph.pairs;
    bank.centers = Matrix::Zero(static_cast<Eigen::Index>(graph.pairs.size()), features.cols());

    std::vector<int> candidates;
    for (Eigen::Index t = 0; t < probs.num_samples(); ++t)
        if (probs.is_valid(t)) candidates.push_back(static_cast<int>(t));

    std::vector<double> scores(static_cast<std::size_t>(probs.num_samples()));
    for (std::size_t k = 0; k < graph.pairs.size(); ++k) {
        const auto& pair = graph.pairs[k];
        const double ratio = graph.ratios.at(pair);
        for (int t : candidates) scores[static_cast<std::size_t>(t)] = pair_score(probs.rows.row(t), pair, ratio);

        std::vector<int> order = candidates;
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(m_sel), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](int a, int b) {
                              const double sa = scores[static_cast<std::size_t>(a)];
                              const double sb = scores[static_cast<std::size_t>(b)];
                              return sa > sb || (sa == sb && a < b);
                          });
        const auto row = static_cast<Eigen::Index>(k);
        for (std::size_t m = 0; m < take; ++m) bank.centers.row(row) += features.row(order[m]);
        if (take > 0) bank.centers.row(row) /= static_cast<double>(take);
        bank.member_counts.push_back(static_cast<int>(take));
        bank.degenerate.push_back(take < static_cast<std::size_t>(m_sel));
    }
    return bank;
}

namespace {

std::string head_prefix(BankView view) { return view == BankView::Source ? "source." : "clip."; }

ProjectionHeads make_heads(int dim, std::uint64_t seed, int gate_hidden, bool identity) {
    if (dim < 1 || gate_hidden < 1) throw std::invalid_argument("invalid projection head size");
    ProjectionHeads h;
    h.dim = dim;
    h.gate_hidden = gate_hidden;
    std::mt19937_64 rng(seed);
    for (BankView view : {BankView::Source, BankView::Clip}) {
        const std::string p = head_prefix(view);
        h.params.add(p + "wq", identity ? Matrix::Zero(dim, dim) : glorot(dim, dim, rng));
        h.params.add(p + "wk", glorot(dim, dim, rng));
        h.params.add(p + "wo", identity ? Matrix::Zero(dim, dim) : Matrix(0.1 * glorot(dim, dim, rng)));
        h.params.add(p + "bo", Matrix::Zero(1, dim));
    }
    h.params.add("gate.u1", glorot(dim, gate_hidden, rng));
    h.params.add("gate.c1", Matrix::Zero(1, gate_hidden));
    h.params.add("gate.u2", glorot(gate_hidden, 1, rng));
    h.params.add("gate.c2", Matrix::Zero(1, 1));
    return h;
}

}  // namespace

ProjectionHeads ProjectionHeads::random(int dim, std::uint64_t seed, int gate_hidden) {
    return make_heads(dim, seed, gate_hidden, false);
}

ProjectionHeads ProjectionHeads::identity(int dim, std::uint64_t seed, int gate_hidden) {
    return make_heads(dim, seed, gate_hidden, true);
}

ad::Var project_onto_bank(const ad::Var& f_t, const FeatureCenterBank& bank, const ProjectionHeads& heads,
                          BankView view) {
    if (f_t.cols() != heads.dim || bank.dim() != heads.dim)
        throw std::invalid_argument("projection head dimension mismatch");
    if (bank.size() == 0) throw std::invalid_argument("empty feature bank");
    const std::string p = head_prefix(view);
    const ad::Var centers = ad::constant(bank.centers);
    ad::Var q = ad::matmul(f_t, heads.params.at(p + "wq"));
    ad::Var k = ad::matmul(centers, heads.params.at(p + "wk"));
    ad::Var weights = ad::softmax_rows(ad::affine(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(heads.dim)));
    ad::Var combined = ad::matmul(weights, centers);
    ad::Var residual = ad::add_row(ad::matmul(combined, heads.params.at(p + "wo")), heads.params.at(p + "bo"));
    return ad::add(f_t, residual);
}

ad::Var fusion_gate(const ad::Var& f_t, const ProjectionHeads& heads) {
    ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(f_t, heads.params.at("gate.u1")), heads.params.at("gate.c1")));
    return ad::sigmoid(ad::add_row(ad::matmul(hidden, heads.params.at("gate.u2")), heads.params.at("gate.c2")));
}

ad::Var nt_xent(const ad::Var& view_a, const ad::Var& view_b, double temperature) {
    if (view_a.rows() != view_b.rows() || view_a.cols() != view_b.cols())
        throw std::invalid_argument("nt_xent: views must have equal shape");
    if (view_a.rows() < 2) throw std::invalid_argument("nt_xent: need at least two samples for negatives");
    if (!(temperature > 0.0)) throw std::invalid_argument("nt_xent: temperature must be positive");
    const auto b = view_a.rows();
    const auto n = 2 * b;
    ad::Var z = ad::normalize_rows(ad::concat_rows(view_a, view_b));
    ad::Var sims = ad::affine(ad::matmul(z, ad::transpose(z)), 1.0 / temperature);
    Matrix self_mask = Matrix::Zero(n, n);
    Matrix positives = Matrix::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        self_mask(r, r) = -1e9;
        positives(r, (r + b) % n) = 1.0;
    }
    ad::Var log_probs = ad::log_softmax_rows(ad::add(sims, ad::constant(self_mask)));
    return ad::affine(ad::sum(ad::mul(log_probs, ad::constant(positives))), -1.0 / static_cast<double>(n));
}

AlignmentOutput project_and_align(const ad::Var& f_t, const FeatureCenterBank& source_bank,
                                  const FeatureCenterBank& clip_bank, const ProjectionHeads& heads,
                                  double temperature) {
    if (source_bank.pair_index != clip_bank.pair_index)
        throw std::invalid_argument("feature banks must share the same pair ordering");
    AlignmentOutput out;
    out.f_s = project_onto_bank(f_t, source_bank, heads, BankView::Source);
    out.f_clip = project_onto_bank(f_t, clip_bank, heads, BankView::Clip);
    if (f_t.rows() < 2) {
        out.ct_skipped = true;
    } else {
        out.l_ct = nt_xent(out.f_s, out.f_clip, temperature);
    }
    return out;
}

ad::Var fuse_features(const ad::Var& f_t, const ad::Var& f_s, const ad::Var& f_clip, const ProjectionHeads& heads) {
    if (f_s.rows() != f_clip.rows() || f_s.cols() != f_clip.cols() || f_t.rows() != f_s.rows())
        throw std::invalid_argument("fuse_features: shape mismatch");
    ad::Var g = fusion_gate(f_t, heads);
    // g * F_s + (1 - g) * F_clip = F_clip + g * (F_s - F_clip)
    return ad::add(f_clip, ad::mul_col(ad::sub(f_s, f_clip), g));
}

void write_bank_csv(std::ostream& out, const FeatureCenterBank& bank, const std::vector<std::string>& class_names) {
    out << "view,primary,secondary,members,degenerate,center_norm\n";
    for (std::size_t k = 0; k < bank.pair_index.size(); ++k) {
        const auto& p = bank.pair_index[k];
        out << to_string(bank.view) << ',' << class_names.at(static_cast<std::size_t>(p.primary)) << ','
            << class_names.at(static_cast<std::size_t>(p.secondary)) << ',' << bank.member_counts[k] << ','
            << (bank.degenerate[k] ? 1 : 0) << ',' << bank.centers.row(static_cast<Eigen::Index>(k)).norm() << '\n';
    }
}

}  // namespace cga
