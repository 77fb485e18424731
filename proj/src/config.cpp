#include "cga/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cga/probability.hpp"

namespace cga {

namespace pt = boost::property_tree;

namespace {

// Calls f(section, key, member, help) for every config field, in file order.
template <class Config, class F>
void visit_fields(Config& c, F&& f) {
    f("data", "dir", c.data_dir, "dataset directory (source.csv, target.csv, anchors.csv, classes.txt)");
    f("data", "source_checkpoint", c.source_checkpoint, "pretrained source model; empty = train on source.csv");
    f("data", "class_names", c.class_names, "comma-separated override of classes.txt");
    f("run", "seed", c.seed, "seed for every random choice in the run");
    f("run", "epochs", c.epochs, "adaptation epochs");
    f("run", "batch_size", c.batch_size, "target samples per step");
    f("run", "pretrain_epochs", c.pretrain_epochs, "source pretraining epochs when no checkpoint is given");
    f("run", "out", c.out, "report directory");
    f("confusion", "n_top", c.n_top, "classes each sample contributes to in the confusion matrix");
    f("prompt", "context_length", c.context_length, "learnable context tokens");
    f("prompt", "logit_scale", c.logit_scale, "vision-language logit scale");
    f("prompt", "prefix", c.prefix, "human-readable prompt prefix; initializes the context");
    f("alignment", "m_sel", c.m_sel, "samples averaged per feature centre; 0 = auto");
    f("alignment", "temperature", c.temperature, "contrastive temperature");
    f("alignment", "gate_hidden", c.gate_hidden, "hidden units of the fusion gate");
    f("loss", "alpha", c.alpha, "weight of the augmented-feature loss");
    f("loss", "gamma", c.gamma, "weight of the contrastive loss");
    f("loss", "use_lc", c.use_lc, "train prompts towards the fused reference");
    f("loss", "use_lct", c.use_lct, "contrastive alignment of the two projections");
    f("loss", "use_lr", c.use_lr, "refine confusion prompts towards their centroids");
    f("loss", "use_mcc", c.use_mcc, "multi-prototype confusion prompts; false = plain zero-shot");
    f("loss", "dynamic", c.dynamic, "rebuild confusion state every epoch; false = keep epoch-0 state");
    f("optim", "lr_source", c.lr_source, "SGD learning rate for source model and heads");
    f("optim", "lr_context", c.lr_context, "SGD learning rate for the prompt context");
    f("optim", "momentum", c.momentum, "SGD momentum");
    f("optim", "lr_pretrain", c.lr_pretrain, "learning rate for source pretraining");
    f("vl", "embed_dim", c.embed_dim, "toy vision-language embedding size");
    f("vl", "bandwidth", c.bandwidth, "toy image encoder kernel bandwidth");
    f("vl", "filler_norm", c.filler_norm, "norm of non-class word embeddings");
}

std::string to_text(const std::string& v) { return v; }
std::string to_text(std::uint64_t v) { return std::to_string(v); }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(double v) { return format_exact(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + v[k];
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
bool parse_number(const std::string& text, T& out) {
    const std::string t = trim(text);
    auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

bool from_text(const std::string& text, std::string& out) {
    out = trim(text);
    return true;
}
bool from_text(const std::string& text, std::uint64_t& out) { return parse_number(text, out); }
bool from_text(const std::string& text, int& out) { return parse_number(text, out); }
bool from_text(const std::string& text, double& out) { return parse_number(text, out); }
bool from_text(const std::string& text, bool& out) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return out = true, true;
    if (t == "false" || t == "0" || t == "no") return out = false, true;
    return false;
}
bool from_text(const std::string& text, std::vector<std::string>& out) {
    out.clear();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(trim(item));
    return true;
}

const char* type_name(const std::string&) { return "text"; }
const char* type_name(std::uint64_t) { return "non-negative integer"; }
const char* type_name(int) { return "integer"; }
const char* type_name(double) { return "number"; }
const char* type_name(bool) { return "true/false"; }
const char* type_name(const std::vector<std::string>&) { return "comma-separated list"; }

}  // namespace

std::string format_exact(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> AdaptationConfig::validate() const {
    std::vector<std::string> errors;
    auto need = [&](bool ok, const char* field, const std::string& what) {
        if (!ok) errors.push_back(std::string(field) + ": " + what);
    };
    need(!data_dir.empty(), "data.dir", "required (path to a dataset directory)");
    need(epochs >= 0, "run.epochs", "must be >= 0");
    need(batch_size >= 1, "run.batch_size", "must be >= 1");
    need(pretrain_epochs >= 0, "run.pretrain_epochs", "must be >= 0");
    need(!out.empty(), "run.out", "required");
    need(n_top >= 1, "confusion.n_top", "must be >= 1 (and <= number of classes)");
    need(context_length >= 1, "prompt.context_length", "must be >= 1");
    need(logit_scale > 0.0, "prompt.logit_scale", "must be > 0");
    need(m_sel >= 0, "alignment.m_sel", "must be >= 0");
    need(temperature > 0.0, "alignment.temperature", "must be > 0");
    need(gate_hidden >= 1, "alignment.gate_hidden", "must be >= 1");
    need(alpha >= 0.0, "loss.alpha", "must be >= 0");
    need(gamma >= 0.0, "loss.gamma", "must be >= 0");
    need(lr_source >= 0.0, "optim.lr_source", "must be >= 0");
    need(lr_context >= 0.0, "optim.lr_context", "must be >= 0");
    need(momentum >= 0.0 && momentum < 1.0, "optim.momentum", "must lie in [0, 1)");
    need(lr_pretrain >= 0.0, "optim.lr_pretrain", "must be >= 0");
    need(embed_dim >= 2, "vl.embed_dim", "must be >= 2");
    need(bandwidth > 0.0, "vl.bandwidth", "must be > 0");
    need(filler_norm >= 0.0, "vl.filler_norm", "must be >= 0");
    return errors;
}

AdaptationConfig parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidInput(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
    }

    AdaptationConfig c;
    std::vector<std::string> errors;
    std::set<std::string> known;
    visit_fields(c, [&](const char* section, const char* key, auto& member, const char*) {
        const std::string path = std::string(section) + "." + key;
        known.insert(path);
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) {
            if (!from_text(*v, member)) errors.push_back(path + ": expected " + type_name(member) + ", got '" + *v + "'");
        }
    });
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            errors.push_back(section + ": key outside of a section");
            continue;
        }
        for (const auto& [key, value] : body)
            if (!known.count(section + "." + key)) errors.push_back(section + "." + key + ": unknown key");
    }
    for (auto& e : c.validate()) errors.push_back(std::move(e));
    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw InvalidInput(msg);
    }
    return c;
}

AdaptationConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const AdaptationConfig& config) {
    std::ostringstream out;
    std::string current;
    visit_fields(config, [&](const char* section, const char* key, const auto& member, const char*) {
        if (current != section) {
            if (!current.empty()) out << '\n';
            out << '[' << section << "]\n";
            current = section;
        }
        out << key << " = " << to_text(member) << '\n';
    });
    return out.str();
}

std::string config_template() {
    std::ostringstream out;
    AdaptationConfig defaults;
    defaults.data_dir = "data/toy";
    std::string current;
    out << "; Adaptation config. Every key is optional except data.dir.\n";
    visit_fields(defaults, [&](const char* section, const char* key, const auto& member, const char* help) {
        if (current != section) {
            out << '\n' << '[' << section << "]\n";
            current = section;
        }
        out << "; " << help << " (" << type_name(member) << ")\n" << key << " = " << to_text(member) << '\n';
    });
    return out.str();
}

}  // namespace cga
