#pragma once

// Confusion-aware multi-prototype prompts.
//
// Each confusion pair becomes one prompt: "(prefix) car" for a diagonal pair,
// "(prefix) car looks like a bus" for an off-diagonal one. Prompts are grouped
// by primary class and a class logit is the best match within its group.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cga/confusion.hpp"
#include "cga/models.hpp"

namespace cga {

inline constexpr const char* kDefaultPrefix = "A picture of a";

std::string render_pair_text(const ConfusionPair& pair, const std::vector<std::string>& class_names,
                             const std::string& prefix = kDefaultPrefix);

// Class-text tokens (no prefix; the learnable context stands in for it).
// Class names stay single tokens even when they contain spaces.
std::vector<std::string> pair_tokens(const ConfusionPair& pair, const std::vector<std::string>& class_names);

struct PromptBank {
    std::vector<std::string> class_names;
    std::string prefix = kDefaultPrefix;
    std::vector<ConfusionPair> pairs;         // one prompt per pair; diagonals first
    std::vector<std::vector<int>> groups;     // groups[i] = indices into pairs with primary i

    // Diagonal pairs only when `with_confusion` is false (plain zero-shot).
    static PromptBank from_graph(const ConfusionGraph& graph, std::vector<std::string> class_names,
                                 bool with_confusion = true, std::string prefix = kDefaultPrefix);
    static PromptBank from_pairs(std::vector<ConfusionPair> pairs, std::vector<std::string> class_names,
                                 std::string prefix = kDefaultPrefix);

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::size_t prompt_count() const { return pairs.size(); }
    std::size_t confusion_prompt_count() const;
    std::vector<std::string> rendered_texts() const;
    std::map<int, std::vector<ConfusionPair>> group_pairs() const;
};

struct EncodedPrompts {
    ad::Var features;                     // P x E, unit rows, aligned with bank.pairs
    std::vector<std::vector<int>> groups;

    // Row index of the diagonal prompt for each class.
    std::vector<int> base_rows;
    std::map<int, Matrix> group_features() const;
};

// Thrown when the text encoder rejects a prompt; names the pair.
class PromptEncodingError : public std::runtime_error {
public:
    PromptEncodingError(const ConfusionPair& pair, const std::string& what);
    ConfusionPair pair;
};

EncodedPrompts encode_prompt_groups(const PromptBank& bank, const VisionLanguageModel& model);

/// scale * max-over-group cosine similarity, B x C. Image features must be
/// unit-norm.
ad::Var multi_center_logits(const Matrix& image_features, const EncodedPrompts& prompts, double scale);

ProbabilityMatrix multi_center_predict(const Matrix& image_features, const std::vector<Matrix>& group_features,
                                       double scale);

/// KL(softmax(scale * cos(text_ij, base)) || centroid), centroid floored at
/// kReferenceFloor inside the log.
ad::Var refinement_loss(const ad::Var& base_features, const ad::Var& pair_feature, const Vector& centroid,
                        double scale);
double refinement_loss(const Matrix& base_features, const RowVector& pair_feature, const Vector& centroid,
                       double scale);

/// Sum of refinement losses over every off-diagonal prompt in the bank, using
/// the centroids of `graph`. Returns a zero constant when there are none.
ad::Var total_refinement_loss(const PromptBank& bank, const EncodedPrompts& prompts, const ConfusionGraph& graph,
                              double scale);

// One JSON object per line: {primary, secondary, text, group}.
void write_prompts_jsonl(std::ostream& out, const PromptBank& bank);

}  // namespace cga
