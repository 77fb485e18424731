#pragma once

// Confusion-aware feature-centre banks and the projection heads that align
// the source view with the vision-language view.

#include <iosfwd>
#include <string>
#include <vector>

#include "cga/confusion.hpp"
#include "cga/nn.hpp"

namespace cga {

enum class BankView { Source, Clip };

const char* to_string(BankView view);

struct FeatureCenterBank {
    Matrix centers;                        // |M| x D
    std::vector<ConfusionPair> pair_index; // aligned with centers rows
    BankView view = BankView::Source;
    std::vector<int> member_counts;
    std::vector<bool> degenerate;          // fewer than m_sel candidates

    Eigen::Index size() const { return centers.rows(); }
    Eigen::Index dim() const { return centers.cols(); }
};

/// How well a probability row sits at the (i, j) confusion centre:
///   S = (p_i + p_j)/2 - |(R - R_sim) / (R + R_sim)| / 2,  R = p_i / p_j.
/// Diagonal pairs score p_i. p_j = 0 makes R infinite and the penalty 1/2.
double pair_score(const Eigen::Ref<const RowVector>& p, const ConfusionPair& pair, double ratio);

// max(4, ceil(N_t / (4 |M|))).
int default_m_sel(Eigen::Index num_samples, std::size_t num_pairs);

/// For each pair of `graph`, average the features of the m_sel best-scoring
/// valid samples (ties broken by lowest sample index).
FeatureCenterBank build_feature_bank(const Matrix& features, const ProbabilityMatrix& probs,
                                     const ConfusionGraph& graph, int m_sel, BankView view);

/// Trainable projectors over the two banks plus the fusion gate.
struct ProjectionHeads {
    int dim = 0;
    int gate_hidden = 8;
    ParameterSet params;

    static ProjectionHeads random(int dim, std::uint64_t seed, int gate_hidden = 8);
    // Uniform attention over the bank and a zero residual branch: both
    // projections return their input unchanged.
    static ProjectionHeads identity(int dim, std::uint64_t seed, int gate_hidden = 8);
};

// F_t + softmax(F_t Wq (centers Wk)^T / sqrt(D)) centers Wo + bo.
ad::Var project_onto_bank(const ad::Var& f_t, const FeatureCenterBank& bank, const ProjectionHeads& heads,
                          BankView view);

// Scalar gate in (0, 1) per sample, B x 1.
ad::Var fusion_gate(const ad::Var& f_t, const ProjectionHeads& heads);

/// Symmetric normalized-temperature cross-entropy over 2B projections: the
/// positive of row b in one view is row b in the other view; every other
/// projection in the batch is a negative.
ad::Var nt_xent(const ad::Var& view_a, const ad::Var& view_b, double temperature);

struct AlignmentOutput {
    ad::Var f_s;
    ad::Var f_clip;
    ad::Var l_ct;          // undefined when skipped
    bool ct_skipped = false;
};

AlignmentOutput project_and_align(const ad::Var& f_t, const FeatureCenterBank& source_bank,
                                  const FeatureCenterBank& clip_bank, const ProjectionHeads& heads,
                                  double temperature);

// W(F_t) F_s + (1 - W(F_t)) F_clip.
ad::Var fuse_features(const ad::Var& f_t, const ad::Var& f_s, const ad::Var& f_clip, const ProjectionHeads& heads);

// CSV: view,primary,secondary,members,degenerate,center_norm
void write_bank_csv(std::ostream& out, const FeatureCenterBank& bank, const std::vector<std::string>& class_names);

}  // namespace cga
