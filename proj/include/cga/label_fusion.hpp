#pragma once

#include <vector>

#include "cga/autodiff.hpp"

namespace cga {

// Floor applied to reference probabilities before taking their log.
inline constexpr double kReferenceFloor = 1e-8;

/// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(const Eigen::Ref<const RowVector>& p);

enum class FusionMode { AgreePick, EntropyMix };

struct FusedPrediction {
    RowVector p_r;
    FusionMode mode = FusionMode::AgreePick;
    double omega = 0.0;  // only meaningful for EntropyMix
    bool degenerate = false;  // both inputs one-hot at different classes
};

/// Agreeing argmaxes pick the lower-entropy input (ties go to the
/// vision-language view); disagreement mixes both with the entropy weight
/// omega = H(p_s) / (H(p_s) + H(p_c)) applied to p_c.
FusedPrediction fuse_predictions(const RowVector& p_s, const RowVector& p_c);

struct FusedBatch {
    Matrix p_r;
    std::vector<FusionMode> modes;
    std::size_t degenerate_rows = 0;

    double agree_fraction() const;
};

FusedBatch fuse_batch(const Matrix& p_s, const Matrix& p_c);

/// KL(p || p_r) with p_r floored at kReferenceFloor inside the log.
double kl_to_reference(const Eigen::Ref<const RowVector>& p, const Eigen::Ref<const RowVector>& p_r);

/// Mean over rows of KL(softmax(logits) || reference). The reference is a
/// constant: no gradient flows into whatever produced it.
ad::Var kl_to_reference(const ad::Var& logits, const Matrix& reference);

double clip_objective(double l_r, double l_c);
double source_objective(double l_s, double l_a, double l_ct, double alpha, double gamma);

}  // namespace cga
