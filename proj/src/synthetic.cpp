#include "cga/synthetic.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "cga/config.hpp"
#include "cga/evaluation.hpp"

namespace cga {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::vector<std::string> SyntheticDomainSpec::resolved_class_names() const {
    if (!class_names.empty()) return class_names;
    std::vector<std::string> out;
    for (int k = 0; k < classes; ++k) out.push_back("class" + std::to_string(k));
    return out;
}

double SyntheticDomainSpec::stddev_of(int k) const {
    return stddev.size() == 1 ? stddev.front() : stddev.at(static_cast<std::size_t>(k));
}

void SyntheticDomainSpec::validate() const {
    std::vector<std::string> errors;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };
    need(classes >= 2, "synthetic.classes: must be >= 2");
    need(class_names.empty() || class_names.size() == static_cast<std::size_t>(classes),
         "synthetic.class_names: need one name per class");
    need(std::set<std::string>(class_names.begin(), class_names.end()).size() == class_names.size(),
         "synthetic.class_names: names must be distinct");
    need(samples_per_class >= 1, "synthetic.samples_per_class: must be >= 1");
    need(dim >= 2, "synthetic.dim: must be >= 2");
    need(radius > 0.0, "synthetic.radius: must be > 0");
    need(stddev.size() == 1 || stddev.size() == static_cast<std::size_t>(classes),
         "synthetic.stddev: give one value or one per class");
    for (double s : stddev) need(s > 0.0 && std::isfinite(s), "synthetic.stddev: degenerate covariance (stddev must be > 0)");
    need(translation.size() <= static_cast<std::size_t>(dim), "synthetic.translation: longer than dim");
    need(planted_primary >= 0 && planted_primary < classes, "synthetic.planted_primary: out of range");
    need(planted_secondary >= 0 && planted_secondary < classes, "synthetic.planted_secondary: out of range");
    need(planted_primary != planted_secondary, "synthetic.planted_secondary: must differ from planted_primary");
    need(overlap >= 0.0 && overlap < 1.0, "synthetic.overlap: must lie in [0, 1)");
    need(anchor_noise >= 0.0, "synthetic.anchor_noise: must be >= 0");
    need(selftest_epochs >= 1, "synthetic.selftest_epochs: must be >= 1");
    need(selftest_lr > 0.0, "synthetic.selftest_lr: must be > 0");
    if (!errors.empty()) {
        std::string msg = "invalid synthetic spec:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw InvalidInput(msg);
    }
}

namespace {

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b == std::string::npos) continue;
        item = item.substr(b, e - b + 1);
        double v = 0.0;
        auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size())
            throw InvalidInput("synthetic." + key + ": not a number list: '" + text + "'");
        out.push_back(v);
    }
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + format_exact(v[k]);
    return out;
}

}  // namespace

SyntheticDomainSpec parse_synthetic_spec(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidInput(std::string("synthetic spec: ") + e.message());
    }
    const auto section = tree.get_child_optional("synthetic");
    if (!section) throw InvalidInput("synthetic spec: missing [synthetic] section");

    SyntheticDomainSpec s;
    static const std::set<std::string> known{
        "classes", "class_names", "samples_per_class", "dim", "radius", "stddev", "rotation_deg", "translation",
        "planted_primary", "planted_secondary", "overlap", "anchor_noise", "seed", "selftest_epochs", "selftest_lr"};
    for (const auto& [key, value] : *section)
        if (!known.count(key)) throw InvalidInput("synthetic." + key + ": unknown key");

    auto get = [&](const char* key, auto& member) {
        using T = std::decay_t<decltype(member)>;
        if (auto v = section->get_optional<std::string>(key)) {
            try {
                member = section->get<T>(key);
            } catch (const pt::ptree_bad_data&) {
                throw InvalidInput(std::string("synthetic.") + key + ": bad value '" + *v + "'");
            }
        }
    };
    get("classes", s.classes);
    get("samples_per_class", s.samples_per_class);
    get("dim", s.dim);
    get("radius", s.radius);
    get("rotation_deg", s.rotation_deg);
    get("planted_primary", s.planted_primary);
    get("planted_secondary", s.planted_secondary);
    get("overlap", s.overlap);
    get("anchor_noise", s.anchor_noise);
    get("seed", s.seed);
    get("selftest_epochs", s.selftest_epochs);
    get("selftest_lr", s.selftest_lr);
    if (auto v = section->get_optional<std::string>("stddev")) s.stddev = parse_list("stddev", *v);
    if (auto v = section->get_optional<std::string>("translation")) s.translation = parse_list("translation", *v);
    if (auto v = section->get_optional<std::string>("class_names")) {
        s.class_names.clear();
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) s.class_names.push_back(item.substr(item.find_first_not_of(' ')));
    }
    s.validate();
    return s;
}

SyntheticDomainSpec load_synthetic_spec(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read synthetic spec " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_synthetic_spec(ss.str());
}

std::string serialize_synthetic_spec(const SyntheticDomainSpec& s) {
    std::ostringstream out;
    out << "[synthetic]\n"
        << "classes = " << s.classes << '\n';
    if (!s.class_names.empty()) {
        out << "class_names = ";
        for (std::size_t k = 0; k < s.class_names.size(); ++k) out << (k ? "," : "") << s.class_names[k];
        out << '\n';
    }
    out << "samples_per_class = " << s.samples_per_class << '\n'
        << "dim = " << s.dim << '\n'
        << "radius = " << format_exact(s.radius) << '\n'
        << "stddev = " << join(s.stddev) << '\n'
        << "rotation_deg = " << format_exact(s.rotation_deg) << '\n'
        << "translation = " << join(s.translation) << '\n'
        << "planted_primary = " << s.planted_primary << '\n'
        << "planted_secondary = " << s.planted_secondary << '\n'
        << "overlap = " << format_exact(s.overlap) << '\n'
        << "anchor_noise = " << format_exact(s.anchor_noise) << '\n'
        << "seed = " << s.seed << '\n'
        << "selftest_epochs = " << s.selftest_epochs << '\n'
        << "selftest_lr = " << format_exact(s.selftest_lr) << '\n';
    return out.str();
}

SyntheticDomainSpec toy_synthetic_spec() {
    SyntheticDomainSpec s;
    s.classes = 4;
    s.samples_per_class = 2500;
    s.radius = 4.0;
    s.stddev = {0.6, 0.6, 1.2, 1.2};
    s.rotation_deg = 0.0;
    s.overlap = 0.7;
    return s;
}

SyntheticDomains generate_synthetic(const SyntheticDomainSpec& spec) {
    spec.validate();
    const int c = spec.classes;
    const int d = spec.dim;
    SyntheticDomains out;

    out.source_means = Matrix::Zero(c, d);
    for (int k = 0; k < c; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / c;
        out.source_means(k, 0) = spec.radius * std::cos(angle);
        out.source_means(k, 1) = spec.radius * std::sin(angle);
    }

    // Rotation in the first plane, then translation.
    const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
    Matrix rotation = Matrix::Identity(d, d);
    rotation(0, 0) = std::cos(theta);
    rotation(0, 1) = -std::sin(theta);
    rotation(1, 0) = std::sin(theta);
    rotation(1, 1) = std::cos(theta);
    RowVector shift = RowVector::Zero(d);
    for (std::size_t k = 0; k < spec.translation.size(); ++k) shift(static_cast<Eigen::Index>(k)) = spec.translation[k];

    out.target_means = (out.source_means * rotation.transpose()).rowwise() + shift;
    const RowVector toward = out.target_means.row(spec.planted_secondary) - out.target_means.row(spec.planted_primary);
    out.target_means.row(spec.planted_primary) += spec.overlap * toward;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto sample_split = [&](const Matrix& means) {
        Dataset split;
        split.class_names = spec.resolved_class_names();
        split.x.resize(static_cast<Eigen::Index>(c) * spec.samples_per_class, d);
        Eigen::Index row = 0;
        for (int k = 0; k < c; ++k) {
            for (int n = 0; n < spec.samples_per_class; ++n, ++row) {
                for (int j = 0; j < d; ++j) split.x(row, j) = means(k, j) + spec.stddev_of(k) * normal(rng);
                split.labels.push_back(k);
            }
        }
        split.valid.assign(static_cast<std::size_t>(split.x.rows()), true);
        return split;
    };
    out.source = sample_split(out.source_means);
    out.target = sample_split(out.target_means);

    out.anchors = out.target_means;
    for (Eigen::Index k = 0; k < out.anchors.rows(); ++k)
        for (Eigen::Index j = 0; j < out.anchors.cols(); ++j) out.anchors(k, j) += spec.anchor_noise * normal(rng);
    return out;
}

SyntheticSelfTest run_self_test(const SyntheticDomainSpec& spec, const SyntheticDomains& domains) {
    SourceModel model({spec.dim, 32, 16, spec.classes}, spec.seed + 101);
    train_supervised(model, domains.source,
                     {spec.selftest_epochs, 32, spec.selftest_lr, 0.9, spec.seed + 202});
    SyntheticSelfTest r;
    r.source_accuracy = evaluate(model, domains.source).accuracy;
    const Evaluation target = evaluate(model, domains.target);
    r.target_accuracy = target.accuracy;
    const Matrix rates = target.confusion_rates();
    r.forward_rate = rates(spec.planted_primary, spec.planted_secondary);
    r.reverse_rate = rates(spec.planted_secondary, spec.planted_primary);
    r.one_directional = r.forward_rate > 0.0 && r.forward_rate >= 3.0 * r.reverse_rate;
    return r;
}

SyntheticSelfTest write_synthetic(const SyntheticDomainSpec& spec, const fs::path& dir) {
    const SyntheticDomains domains = generate_synthetic(spec);
    fs::create_directories(dir);
    save_dataset(dir / "source.csv", domains.source);
    save_dataset(dir / "target.csv", domains.target);
    write_samples_csv(dir / "anchors.csv", domains.anchors);
    {
        std::ofstream out(dir / "spec.ini");
        out << serialize_synthetic_spec(spec);
    }
    const SyntheticSelfTest r = run_self_test(spec, domains);
    nlohmann::json report{{"source_accuracy", r.source_accuracy},
                          {"source_only_target_accuracy", r.target_accuracy},
                          {"planted_primary", spec.resolved_class_names()[static_cast<std::size_t>(spec.planted_primary)]},
                          {"planted_secondary",
                           spec.resolved_class_names()[static_cast<std::size_t>(spec.planted_secondary)]},
                          {"forward_rate", r.forward_rate},
                          {"reverse_rate", r.reverse_rate},
                          {"one_directional", r.one_directional}};
    std::ofstream out(dir / "selftest.json");
    out << report.dump(2) << '\n';
    return r;
}

}  // namespace cga
