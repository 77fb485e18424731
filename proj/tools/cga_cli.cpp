#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cga/config.hpp"
#include "cga/confusion.hpp"
#include "cga/engine.hpp"
#include "cga/evaluation.hpp"
#include "cga/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cga;

namespace {

// A directory stands for its target split.
fs::path resolve_samples(const fs::path& dataset) {
    return fs::is_directory(dataset) ? dataset / "target.csv" : dataset;
}

Dataset load_for_model(const fs::path& dataset, const Checkpoint& ck) {
    const fs::path samples = resolve_samples(dataset);
    if (!fs::exists(samples)) throw InvalidInput("--dataset: no such file " + samples.string());
    Dataset data = load_dataset(samples);
    if (data.class_names.empty()) data.class_names = ck.class_names;
    if (data.num_classes() != ck.source.architecture().num_classes)
        throw InvalidInput("--dataset: " + std::to_string(data.num_classes()) + " classes but the checkpoint has " +
                           std::to_string(ck.source.architecture().num_classes));
    if (data.dim() != ck.source.architecture().input_dim)
        throw InvalidInput("--dataset: sample dimension " + std::to_string(data.dim()) +
                           " does not match the checkpoint input " +
                           std::to_string(ck.source.architecture().input_dim));
    return data;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confusion-aware source-free domain adaptation (toy pipeline)"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("--quiet,-q", quiet, "Suppress progress output");

    // adapt
    auto* adapt_cmd = app.add_subcommand("adapt", "Adapt a source model to the target split of a dataset");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir, checkpoint, dataset;
    adapt_cmd->add_option("--config,-c", config_path, "Run configuration file")->required();
    adapt_cmd->add_option("--seed", seed, "Override run.seed");
    adapt_cmd->add_option("--out,-o", out_dir, "Override run.out (report directory)");
    adapt_cmd->add_option("--checkpoint", checkpoint, "Override data.source_checkpoint");
    adapt_cmd->add_option("--dataset", dataset, "Override data.dir");

    // evaluate
    auto* eval_cmd = app.add_subcommand(
        "evaluate",
        "Per-class accuracy of a checkpoint on a labeled dataset.\n"
        "CSV written to --out has columns: class,count,correct,accuracy\n"
        "(accuracy is a fraction in [0,1]; one row per class).");
    std::string eval_ckpt, eval_data, eval_out;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--dataset", eval_data, "Samples CSV, or a dataset directory (uses target.csv)")
        ->required()
        ->check(CLI::ExistingPath);
    eval_cmd->add_option("--out,-o", eval_out, "Per-class CSV path");

    // analyze-confusion
    auto* conf_cmd = app.add_subcommand("analyze-confusion",
                                        "Estimate the confusion matrix and pairs of a checkpoint on a dataset.\n"
                                        "Writes confusion.csv, pairs.jsonl and prompts.jsonl into --out.");
    std::string conf_ckpt, conf_data, conf_out = ".";
    int n_top = 2;
    int top_k = 5;
    conf_cmd->add_option("--checkpoint", conf_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    conf_cmd->add_option("--dataset", conf_data, "Samples CSV, or a dataset directory (uses target.csv)")
        ->required()
        ->check(CLI::ExistingPath);
    conf_cmd->add_option("--out,-o", conf_out, "Output directory")->capture_default_str();
    conf_cmd->add_option("--n-top", n_top, "Top-N contribution weights")->capture_default_str()->check(
        CLI::PositiveNumber);
    conf_cmd->add_option("--top", top_k, "How many directional confusions to print")->capture_default_str();

    // synth-data
    auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic two-domain dataset with a planted pair");
    std::string spec_path, synth_out;
    std::optional<std::uint64_t> synth_seed;
    synth_cmd->add_option("--config,-c", spec_path, "Synthetic spec file ([synthetic] section); defaults if absent")
        ->check(CLI::ExistingFile);
    synth_cmd->add_option("--out,-o", synth_out, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "Override synthetic.seed");

    auto* tmpl_cmd = app.add_subcommand("config-template", "Print a configuration file with every default");
    bool tmpl_synth = false;
    tmpl_cmd->add_flag("--synthetic", tmpl_synth, "Print the synthetic dataset spec instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*adapt_cmd) {
            AdaptationConfig config = load_config(config_path);
            if (seed) config.seed = *seed;
            if (!out_dir.empty()) config.out = out_dir;
            if (!checkpoint.empty()) config.source_checkpoint = checkpoint;
            if (!dataset.empty()) config.data_dir = dataset;
            AdaptOptions options;
            options.log = quiet ? nullptr : &std::cerr;
            const RunReport report = adapt(config, options);
            if (report.has_labels) {
                std::cout << std::fixed << std::setprecision(1) << "source-only " << 100.0 * report.baseline.accuracy
                          << "%  adapted " << 100.0 * report.final.accuracy << "%\n";
            }
            std::cout << "report: " << config.out << '\n';
        } else if (*eval_cmd) {
            const Checkpoint ck = load_checkpoint(eval_ckpt);
            const Dataset data = load_for_model(eval_data, ck);
            const Evaluation e = evaluate(ck.source, data);
            std::cout << std::fixed << std::setprecision(1);
            for (std::size_t k = 0; k < e.per_class_accuracy.size(); ++k)
                std::cout << std::left << std::setw(16) << data.class_names[k] << ' ' << std::right << std::setw(5)
                          << 100.0 * e.per_class_accuracy[k] << '\n';
            std::cout << "accuracy " << 100.0 * e.accuracy << "%  mean-class " << 100.0 * e.mean_class_accuracy
                      << "%\n";
            if (!eval_out.empty()) {
                auto out = open_out(eval_out);
                write_evaluation_csv(out, e, data.class_names);
            }
        } else if (*conf_cmd) {
            const Checkpoint ck = load_checkpoint(conf_ckpt);
            const Dataset data = load_for_model(conf_data, ck);
            if (n_top > data.num_classes()) throw InvalidInput("--n-top: exceeds the number of classes");
            const ConfusionGraph graph = build_confusion_graph(classify_dataset(ck.source, data), n_top);
            const fs::path dir(conf_out);
            fs::create_directories(dir);
            {
                auto out = open_out(dir / "confusion.csv");
                write_confusion_csv(out, graph.cm, data.class_names);
            }
            {
                auto out = open_out(dir / "pairs.jsonl");
                write_pairs_jsonl(out, graph, data.class_names);
            }
            {
                auto out = open_out(dir / "prompts.jsonl");
                write_prompts_jsonl(out, PromptBank::from_graph(graph, data.class_names));
            }
            const auto pairs = graph.off_diagonal_pairs();
            if (!quiet) std::cout << "threshold " << std::setprecision(4) << graph.threshold << '\n';
            if (pairs.empty()) std::cout << "no directional confusions\n";
            for (std::size_t k = 0; k < pairs.size() && static_cast<int>(k) < top_k; ++k) {
                const auto& p = pairs[k];
                std::cout << data.class_names[static_cast<std::size_t>(p.primary)] << " -> "
                          << data.class_names[static_cast<std::size_t>(p.secondary)] << "  " << std::fixed
                          << std::setprecision(6) << graph.cm(p.primary, p.secondary) << '\n';
            }
        } else if (*synth_cmd) {
            SyntheticDomainSpec spec = spec_path.empty() ? SyntheticDomainSpec{} : load_synthetic_spec(spec_path);
            if (synth_seed) spec.seed = *synth_seed;
            const SyntheticSelfTest r = write_synthetic(spec, synth_out);
            const std::size_t total = 2 * static_cast<std::size_t>(spec.classes) * spec.samples_per_class;
            if (!quiet)
                std::cout << "wrote " << total << " samples to " << synth_out << '\n'
                          << std::fixed << std::setprecision(3) << "self-test: forward " << r.forward_rate
                          << " reverse " << r.reverse_rate << (r.one_directional ? " (one-directional)" : " (NOT one-directional)")
                          << '\n';
            if (!r.one_directional) {
                std::cerr << "synth-data: planted pair is not one-directional for the self-test model\n";
                return 1;
            }
        } else if (*tmpl_cmd) {
            std::cout << (tmpl_synth ? serialize_synthetic_spec(SyntheticDomainSpec{}) : config_template());
        }
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
