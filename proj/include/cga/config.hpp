#pragma once

// Run configuration. On disk this is a sectioned key=value file:
//
//   [data]
//   dir = data/toy
//   [loss]
//   alpha = 0.5
//
// Unknown keys are rejected; missing keys take the defaults below.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cga {

struct AdaptationConfig {
    // [data]
    std::string data_dir;           // holds source.csv, target.csv, anchors.csv, classes.txt
    std::string source_checkpoint;  // empty: pretrain on the source split
    std::vector<std::string> class_names;  // empty: read classes.txt

    // [run]
    std::uint64_t seed = 0;
    int epochs = 15;
    int batch_size = 32;
    int pretrain_epochs = 30;
    std::string out = "runs/toy";

    // [confusion]
    int n_top = 2;

    // [prompt]
    int context_length = 4;
    double logit_scale = 10.0;
    std::string prefix = "A picture of a";

    // [alignment]
    int m_sel = 0;  // 0 selects max(4, ceil(N_t / (4 |M|)))
    double temperature = 0.1;
    int gate_hidden = 8;

    // [loss]
    double alpha = 0.5;
    double gamma = 0.05;
    bool use_lc = true;
    bool use_lct = true;
    bool use_lr = true;
    bool use_mcc = true;
    bool dynamic = true;  // rebuild confusion state every epoch

    // [optim]
    double lr_source = 1e-3;
    double lr_context = 1e-4;
    double momentum = 0.9;
    double lr_pretrain = 0.05;

    // [vl]
    int embed_dim = 128;
    double bandwidth = 1.5;
    double filler_norm = 0.3;

    bool operator==(const AdaptationConfig&) const = default;

    // Returns "section.key: problem" strings; empty when valid.
    std::vector<std::string> validate() const;
};

// Both throw InvalidInput listing every offending field.
AdaptationConfig parse_config(const std::string& text);
AdaptationConfig load_config(const std::filesystem::path& path);

std::string serialize_config(const AdaptationConfig& config);

// Commented template with every key at its default.
std::string config_template();

// Shortest decimal text that parses back to exactly `v`.
std::string format_exact(double v);

}  // namespace cga
