#pragma once

// Adapters over the two models in the loop: the source classifier
// (feature extractor + linear head) and a vision-language model whose only
// trainable state is a shared prompt context.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cga/dataset.hpp"
#include "cga/nn.hpp"
#include "cga/probability.hpp"

namespace cga {

struct SourceArchitecture {
    int input_dim = 2;
    int hidden_dim = 32;
    int feature_dim = 16;
    int num_classes = 2;
};

/// Two-layer tanh perceptron feature extractor followed by a linear classifier.
class SourceModel {
public:
    SourceModel(const SourceArchitecture& arch, std::uint64_t seed);
    SourceModel(const SourceArchitecture& arch, ParameterSet params);

    const SourceArchitecture& architecture() const { return arch_; }

    ad::Var features(const ad::Var& x) const;
    ad::Var classify_features(const ad::Var& features) const;
    ad::Var logits(const ad::Var& x) const { return classify_features(features(x)); }

    Matrix features(const Matrix& x) const;
    Matrix probabilities(const Matrix& x) const;

    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    std::vector<ad::Var> feature_extractor_vars() const;
    std::vector<ad::Var> classifier_vars() const;

private:
    SourceArchitecture arch_;
    ParameterSet params_;
};

/// Interface to a vision-language model with prompt-only tuning.
class VisionLanguageModel {
public:
    virtual ~VisionLanguageModel() = default;

    // Unit-norm image embeddings, one row per input row.
    virtual Matrix encode_images(const Matrix& x) const = 0;
    // Unit-norm text embeddings for prompts given as class-text tokens; the
    // learnable context is prepended implicitly. Differentiable w.r.t. the
    // context.
    virtual ad::Var encode_texts(const std::vector<std::vector<std::string>>& prompts) const = 0;
    virtual double logit_scale() const = 0;

    virtual ParameterSet& context() = 0;
    virtual const ParameterSet& context() const = 0;
    // Every frozen tensor, in a stable order; used to audit that training
    // touches nothing but the context.
    virtual std::vector<Matrix> frozen_state() const = 0;
};

struct ToyVisionLanguageSpec {
    int input_dim = 2;
    int embed_dim = 128;
    double bandwidth = 1.5;
    double logit_scale = 10.0;
    int context_length = 4;
    std::string prefix = "A picture of a";
    double filler_norm = 0.3;
    std::uint64_t seed = 7;
};

/// Desk-scale vision-language stand-in. Images go through a frozen random
/// Fourier feature map; text is a position-weighted bag of word embeddings
/// plus the sum of the context tokens. Class-name embeddings are the image
/// embeddings of per-class anchor points, which plays the role of
/// pretrained image/text alignment.
class ToyVisionLanguageModel final : public VisionLanguageModel {
public:
    ToyVisionLanguageModel(const ToyVisionLanguageSpec& spec, std::vector<std::string> class_names,
                           const Matrix& anchors);

    Matrix encode_images(const Matrix& x) const override;
    ad::Var encode_texts(const std::vector<std::vector<std::string>>& prompts) const override;
    double logit_scale() const override { return spec_.logit_scale; }

    ParameterSet& context() override { return context_; }
    const ParameterSet& context() const override { return context_; }
    std::vector<Matrix> frozen_state() const override;

    const ToyVisionLanguageSpec& spec() const { return spec_; }
    RowVector word_embedding(const std::string& word) const;

private:
    ToyVisionLanguageSpec spec_;
    std::vector<std::string> class_names_;
    Matrix projection_;  // input_dim x embed_dim
    RowVector phase_;
    std::map<std::string, RowVector> vocabulary_;
    ParameterSet context_;
};

std::vector<std::string> tokenize(const std::string& text);

/// One probability row per sample, in dataset order. Masked samples keep a
/// uniform placeholder row and stay masked.
ProbabilityMatrix classify_dataset(const SourceModel& model, const Dataset& data);

struct SupervisedTrainingOptions {
    int epochs = 30;
    int batch_size = 32;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

/// Cross-entropy training on a labeled split. Used to produce the pretrained
/// source model for synthetic experiments.
void train_supervised(SourceModel& model, const Dataset& data, const SupervisedTrainingOptions& options);

// --- checkpoints ------------------------------------------------------------

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    SourceModel source;
    std::vector<std::string> class_names;
    std::optional<ParameterSet> context;
    std::optional<ParameterSet> fam_heads;
    std::vector<std::string> groups;  // manifest inventory
};

struct CheckpointContents {
    const SourceModel& source;
    const std::vector<std::string>& class_names;
    const ParameterSet* context = nullptr;
    const ParameterSet* fam_heads = nullptr;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointContents& contents);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Fixed probe inputs used for the integrity hash.
Matrix checkpoint_probe_batch(int input_dim);

}  // namespace cga
