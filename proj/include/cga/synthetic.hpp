#pragma once

// Two-domain Gaussian blob generator with one planted directional confusion.
//
// Source classes sit on a circle. The target domain is the source rotated and
// translated, and the planted primary class is additionally pulled toward the
// planted secondary class, so a source-trained classifier confuses
// primary -> secondary far more often than the reverse.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cga/dataset.hpp"

namespace cga {

struct SyntheticDomainSpec {
    int classes = 4;
    std::vector<std::string> class_names;  // empty: class0, class1, ...
    int samples_per_class = 300;
    int dim = 2;
    double radius = 3.0;
    std::vector<double> stddev{0.7};       // one value, or one per class
    double rotation_deg = 25.0;            // in the plane of the first two dims
    std::vector<double> translation{0.4, -0.3};
    int planted_primary = 0;
    int planted_secondary = 1;
    double overlap = 0.5;                  // fraction of the way toward the secondary mean
    double anchor_noise = 0.15;            // noise on the vision-language class anchors
    std::uint64_t seed = 11;

    // Self-test settings: a fresh source model trained on the source split.
    int selftest_epochs = 30;
    double selftest_lr = 0.05;

    bool operator==(const SyntheticDomainSpec&) const = default;

    std::vector<std::string> resolved_class_names() const;
    double stddev_of(int k) const;
    // Throws InvalidInput listing every invalid field.
    void validate() const;
};

SyntheticDomainSpec parse_synthetic_spec(const std::string& text);
SyntheticDomainSpec load_synthetic_spec(const std::filesystem::path& path);
std::string serialize_synthetic_spec(const SyntheticDomainSpec& spec);

struct SyntheticDomains {
    Dataset source;
    Dataset target;
    Matrix source_means;  // C x dim
    Matrix target_means;  // C x dim
    Matrix anchors;       // C x dim, noisy target means
};

SyntheticDomains generate_synthetic(const SyntheticDomainSpec& spec);

// The four-class toy used by configs/toy_synthetic.ini: a narrow planted pair
// pulled 70% of the way together, two wider neighbours, no rotation.
SyntheticDomainSpec toy_synthetic_spec();

struct SyntheticSelfTest {
    double source_accuracy = 0.0;        // on the source split
    double target_accuracy = 0.0;        // source-only on the target split
    double forward_rate = 0.0;           // primary -> secondary on target
    double reverse_rate = 0.0;           // secondary -> primary on target
    bool one_directional = false;        // forward >= 3 * reverse and forward > 0
};

SyntheticSelfTest run_self_test(const SyntheticDomainSpec& spec, const SyntheticDomains& domains);

// Writes source.csv, target.csv (+ _labels.csv sidecars), classes.txt,
// anchors.csv, spec.ini and selftest.json into `dir`.
SyntheticSelfTest write_synthetic(const SyntheticDomainSpec& spec, const std::filesystem::path& dir);

}  // namespace cga
