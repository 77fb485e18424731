#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cga/autodiff.hpp"

namespace cga {

/// A split of numeric samples. `labels` is empty for unlabeled data; rows
/// that failed to decode are kept (zero-filled) and flagged in `valid`.
struct Dataset {
    Matrix x;
    std::vector<int> labels;
    std::vector<bool> valid;
    std::vector<std::string> class_names;

    Eigen::Index size() const { return x.rows(); }
    Eigen::Index dim() const { return x.cols(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }
    bool has_labels() const { return !labels.empty(); }
    std::size_t valid_count() const;
};

// Sample file: CSV with a header (f0,f1,...), one sample per row. Rows with
// unparsable or non-finite cells are masked. Labels live in the sidecar
// `<stem>_labels.csv` (header "label", class index per row) and class names
// in `classes.txt` next to the sample file, one per line.
std::filesystem::path labels_path_for(const std::filesystem::path& samples);
std::filesystem::path classes_path_for(const std::filesystem::path& samples);

void write_samples_csv(const std::filesystem::path& path, const Matrix& x);
void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels);
void write_class_names(const std::filesystem::path& path, const std::vector<std::string>& names);
std::vector<std::string> read_class_names(const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path, std::vector<bool>* valid = nullptr);

// Loads samples plus, when present, the label sidecar and class list.
Dataset load_dataset(const std::filesystem::path& samples);
void save_dataset(const std::filesystem::path& samples, const Dataset& data);

}  // namespace cga
