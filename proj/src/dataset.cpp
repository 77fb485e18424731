#include "cga/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cga/probability.hpp"

namespace cga {

namespace fs = std::filesystem;

std::size_t Dataset::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

fs::path labels_path_for(const fs::path& samples) {
    return samples.parent_path() / (samples.stem().string() + "_labels.csv");
}

fs::path classes_path_for(const fs::path& samples) { return samples.parent_path() / "classes.txt"; }

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& text, double& out) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin < end && *begin == ' ') ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\r')) --end;
    auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

}  // namespace

void write_samples_csv(const fs::path& path, const Matrix& x) {
    auto out = open_out(path);
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << 'f' << j;
    out << '\n';
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_double(x(i, j));
        out << '\n';
    }
}

void write_labels_csv(const fs::path& path, const std::vector<int>& labels) {
    auto out = open_out(path);
    out << "label\n";
    for (int l : labels) out << l << '\n';
}

void write_class_names(const fs::path& path, const std::vector<std::string>& names) {
    auto out = open_out(path);
    for (const auto& n : names) out << n << '\n';
}

std::vector<std::string> read_class_names(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read class list " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    if (names.size() < 2) throw InvalidInput("class list " + path.string() + " needs at least 2 classes");
    return names;
}

Matrix read_matrix_csv(const fs::path& path, std::vector<bool>* valid) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(path.string() + ": missing header");
    const std::size_t cols = split_csv(line).size();
    std::vector<std::vector<double>> rows;
    std::vector<bool> mask;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        std::vector<double> row(cols, 0.0);
        bool ok = cells.size() == cols;
        for (std::size_t j = 0; ok && j < cols; ++j) ok = parse_double(cells[j], row[j]);
        if (!ok) std::fill(row.begin(), row.end(), 0.0);
        rows.push_back(std::move(row));
        mask.push_back(ok);
    }
    if (!valid && std::find(mask.begin(), mask.end(), false) != mask.end())
        throw InvalidInput(path.string() + ": malformed row");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    if (valid) *valid = std::move(mask);
    return m;
}

Dataset load_dataset(const fs::path& samples) {
    if (!fs::exists(samples)) throw InvalidInput("dataset file not found: " + samples.string());
    Dataset d;
    d.x = read_matrix_csv(samples, &d.valid);
    if (fs::exists(classes_path_for(samples))) d.class_names = read_class_names(classes_path_for(samples));
    const fs::path lp = labels_path_for(samples);
    if (fs::exists(lp)) {
        Matrix l = read_matrix_csv(lp);
        if (l.cols() != 1 || l.rows() != d.x.rows())
            throw InvalidInput(lp.string() + ": expected one label per sample");
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
            const int label = static_cast<int>(l(i, 0));
            if (label != l(i, 0) || label < 0 || (!d.class_names.empty() && label >= d.num_classes()))
                throw InvalidInput(lp.string() + ": label out of range at row " + std::to_string(i));
            d.labels.push_back(label);
        }
    }
    return d;
}

void save_dataset(const fs::path& samples, const Dataset& data) {
    write_samples_csv(samples, data.x);
    if (data.has_labels()) write_labels_csv(labels_path_for(samples), data.labels);
    if (!data.class_names.empty()) write_class_names(classes_path_for(samples), data.class_names);
}

}  // namespace cga
