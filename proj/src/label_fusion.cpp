#include "cga/label_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cga/probability.hpp"

namespace cga {

double entropy(const Eigen::Ref<const RowVector>& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

FusedPrediction fuse_predictions(const RowVector& p_s, const RowVector& p_c) {
    if (p_s.size() != p_c.size()) throw std::invalid_argument("fuse_predictions: length mismatch");
    FusedPrediction out;
    const double h_s = entropy(p_s);
    const double h_c = entropy(p_c);
    if (argmax(p_s) == argmax(p_c)) {
        out.mode = FusionMode::AgreePick;
        out.p_r = h_s < h_c ? p_s : p_c;
        return out;
    }
    out.mode = FusionMode::EntropyMix;
    const double total = h_s + h_c;
    if (total > 0.0) {
        out.omega = h_s / total;
    } else {
        out.omega = 0.5;
        out.degenerate = true;
    }
    out.p_r = out.omega * p_c + (1.0 - out.omega) * p_s;
    return out;
}

double FusedBatch::agree_fraction() const {
    if (modes.empty()) return 0.0;
    const auto agree = std::count(modes.begin(), modes.end(), FusionMode::AgreePick);
    return static_cast<double>(agree) / static_cast<double>(modes.size());
}

FusedBatch fuse_batch(const Matrix& p_s, const Matrix& p_c) {
    if (p_s.rows() != p_c.rows() || p_s.cols() != p_c.cols())
        throw std::invalid_argument("fuse_batch: shape mismatch");
    FusedBatch out;
    out.p_r.resize(p_s.rows(), p_s.cols());
    out.modes.reserve(static_cast<std::size_t>(p_s.rows()));
    for (Eigen::Index r = 0; r < p_s.rows(); ++r) {
        FusedPrediction f = fuse_predictions(p_s.row(r), p_c.row(r));
        out.p_r.row(r) = f.p_r;
        out.modes.push_back(f.mode);
        if (f.degenerate) ++out.degenerate_rows;
    }
    return out;
}

double kl_to_reference(const Eigen::Ref<const RowVector>& p, const Eigen::Ref<const RowVector>& p_r) {
    if (p.size() != p_r.size()) throw std::invalid_argument("kl_to_reference: length mismatch");
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) kl += p(i) * (std::log(p(i)) - std::log(std::max(p_r(i), kReferenceFloor)));
    return kl;
}

ad::Var kl_to_reference(const ad::Var& logits, const Matrix& reference) {
    if (logits.rows() != reference.rows() || logits.cols() != reference.cols())
        throw std::invalid_argument("kl_to_reference: shape mismatch");
    const Matrix log_ref = reference.cwiseMax(kReferenceFloor).array().log().matrix();
    ad::Var log_p = ad::log_softmax_rows(logits);
    ad::Var p = ad::exp(log_p);
    ad::Var per_row = ad::sum_rows(ad::mul(p, ad::sub(log_p, ad::constant(log_ref))));
    return ad::mean(per_row);
}

double clip_objective(double l_r, double l_c) { return l_r + l_c; }

double source_objective(double l_s, double l_a, double l_ct, double alpha, double gamma) {
    if (alpha < 0.0 || gamma < 0.0) throw std::invalid_argument("loss weights must be non-negative");
    return l_s + alpha * l_a + gamma * l_ct;
}

}  // namespace cga
