#pragma once

// Epoch pre-operation (confusion graphs, prompts, multi-centre predictions,
// feature banks) and the per-batch two-step training loop.

#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cga/config.hpp"
#include "cga/evaluation.hpp"
#include "cga/feature_alignment.hpp"
#include "cga/label_fusion.hpp"
#include "cga/prompt_bank.hpp"

namespace cga {

struct EpochState {
    int epoch = 0;
    ConfusionGraph graph_s;   // source model view
    ConfusionGraph graph_c;   // plain zero-shot vision-language view
    PromptBank prompt_bank;   // built from graph_s
    ProbabilityMatrix p_s_cache;
    ProbabilityMatrix p_c_cache;  // multi-centre predictions with this epoch's prompts
    FeatureCenterBank bank_s;
    FeatureCenterBank bank_c;
    int m_sel = 0;
};

struct BatchMetrics {
    long step = 0;
    int epoch = 0;
    double l_s = 0.0;
    double l_a = 0.0;
    double l_ct = 0.0;
    double l_c = 0.0;
    double l_r = 0.0;
    double agree_fraction = 0.0;
    bool ct_skipped = false;
};

class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(const BatchMetrics& metrics, std::vector<int> batch_ids);
    BatchMetrics metrics;
    std::vector<int> batch_ids;
};

/// Image embeddings paired with the logits the vision-language view produces
/// for them under the given prompts. With `use_mcc` false every class keeps
/// only its base prompt (plain zero-shot classification).
ad::Var vision_language_logits(const Matrix& image_features, const EncodedPrompts& prompts, double scale,
                               bool use_mcc);

EpochState epoch_preoperation(const Dataset& target, const SourceModel& source, const VisionLanguageModel& vl,
                              const AdaptationConfig& config, int epoch);

/// Mutable training context: models, optimizers, shuffling RNG, step counter.
class TrainingSession {
public:
    TrainingSession(SourceModel& source, VisionLanguageModel& vl, ProjectionHeads& heads,
                    const AdaptationConfig& config);

    SourceModel& source;
    VisionLanguageModel& vl;
    ProjectionHeads& heads;
    const AdaptationConfig& config;

    SgdMomentum context_optimizer;
    SgdMomentum source_optimizer;
    std::mt19937_64 rng;
    long step = 0;

    // Called right before each optimizer step with "prompt" or "source" and
    // the reference distribution used for it.
    std::function<void(const std::string&, const Matrix&)> on_step;
};

/// One pass over the valid target samples. Per batch: fuse p_s and p_c into
/// a frozen reference, take a prompt step on L_r + L_c, then a source/heads
/// step on L_s + alpha L_a + gamma L_ct.
std::vector<BatchMetrics> train_epoch(const EpochState& state, const Dataset& target, TrainingSession& session);

struct EpochSummary {
    int epoch = 0;
    Evaluation evaluation;     // source model at epoch start (needs labels)
    Matrix cm_estimated;
    std::vector<ConfusionPair> off_diagonal_pairs;
    double threshold = 0.0;
    double agree_fraction = 0.0;
    double mean_l_s = 0.0, mean_l_a = 0.0, mean_l_ct = 0.0, mean_l_c = 0.0, mean_l_r = 0.0;
};

struct RunReport {
    std::vector<std::string> class_names;
    bool has_labels = false;
    Evaluation baseline;   // source-only
    Evaluation final;
    std::vector<EpochSummary> epochs;
    std::vector<BatchMetrics> batches;
    std::filesystem::path checkpoint;
};

struct AdaptOptions {
    std::ostream* log = nullptr;  // progress lines; null for quiet
    bool write_files = true;
};

/// Full run: load data, obtain the source model, adapt for config.epochs,
/// write the report directory and a source-only deployment checkpoint.
RunReport adapt(const AdaptationConfig& config, const AdaptOptions& options = {});

// Builds the toy vision-language model for a dataset directory.
std::unique_ptr<ToyVisionLanguageModel> make_toy_vision_language(const AdaptationConfig& config,
                                                                 const std::vector<std::string>& class_names,
                                                                 const Matrix& anchors);

void write_batch_metrics_csv(std::ostream& out, const std::vector<BatchMetrics>& batches);

}  // namespace cga
