#include "cga/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cga {

namespace fs = std::filesystem;

NonFiniteLoss::NonFiniteLoss(const BatchMetrics& m, std::vector<int> ids)
    : std::runtime_error([&] {
          std::ostringstream ss;
          ss << "non-finite loss at step " << m.step << " (L_s=" << m.l_s << " L_a=" << m.l_a << " L_ct=" << m.l_ct
             << " L_c=" << m.l_c << " L_r=" << m.l_r << ") on batch samples [";
          for (std::size_t k = 0; k < ids.size(); ++k) ss << (k ? "," : "") << ids[k];
          ss << "]";
          return ss.str();
      }()),
      metrics(m),
      batch_ids(std::move(ids)) {}

ad::Var vision_language_logits(const Matrix& image_features, const EncodedPrompts& prompts, double scale,
                               bool use_mcc) {
    if (use_mcc) return multi_center_logits(image_features, prompts, scale);
    EncodedPrompts base = prompts;
    base.groups.clear();
    for (int row : prompts.base_rows) base.groups.push_back({row});
    return multi_center_logits(image_features, base, scale);
}

EpochState epoch_preoperation(const Dataset& target, const SourceModel& source, const VisionLanguageModel& vl,
                              const AdaptationConfig& config, int epoch) {
    if (target.size() == 0 || target.valid_count() == 0) throw InvalidInput("data.dir: target split is empty");
    const int c = source.architecture().num_classes;
    if (config.n_top > c) throw InvalidInput("confusion.n_top: exceeds the number of classes");
    std::vector<std::string> names = target.class_names;
    if (names.empty())
        for (int k = 0; k < c; ++k) names.push_back("class" + std::to_string(k));
    if (static_cast<int>(names.size()) != c)
        throw InvalidInput("class count of the dataset differs from the source model");

    EpochState s;
    s.epoch = epoch;
    s.p_s_cache = classify_dataset(source, target);
    s.graph_s = build_confusion_graph(s.p_s_cache, config.n_top);

    const Matrix images = vl.encode_images(target.x);
    const double scale = vl.logit_scale();

    // Plain zero-shot view for the vision-language confusion graph.
    const PromptBank plain = PromptBank::from_pairs({}, names, config.prefix);
    const EncodedPrompts plain_encoded = encode_prompt_groups(plain, vl);
    ProbabilityMatrix p_zero_shot(cga::softmax_rows(multi_center_logits(images, plain_encoded, scale).value()),
                                  s.p_s_cache.valid);
    s.graph_c = build_confusion_graph(p_zero_shot, config.n_top);

    s.prompt_bank = PromptBank::from_graph(s.graph_s, names, true, config.prefix);
    const EncodedPrompts encoded = encode_prompt_groups(s.prompt_bank, vl);
    s.p_c_cache = ProbabilityMatrix(
        cga::softmax_rows(vision_language_logits(images, encoded, scale, config.use_mcc).value()), s.p_s_cache.valid);

    const Matrix features = source.features(target.x);
    s.m_sel = config.m_sel > 0 ? config.m_sel : default_m_sel(static_cast<Eigen::Index>(target.valid_count()),
                                                                s.graph_s.pairs.size());
    s.bank_s = build_feature_bank(features, s.p_s_cache, s.graph_s, s.m_sel, BankView::Source);
    s.bank_c = build_feature_bank(features, s.p_c_cache, s.graph_s, s.m_sel, BankView::Clip);
    return s;
}

TrainingSession::TrainingSession(SourceModel& s, VisionLanguageModel& v, ProjectionHeads& h,
                                 const AdaptationConfig& cfg)
    : source(s),
      vl(v),
      heads(h),
      config(cfg),
      context_optimizer(v.context().vars(), cfg.lr_context, cfg.momentum),
      source_optimizer(
          [&] {
              auto vars = s.parameters().vars();
              for (auto& var : h.params.vars()) vars.push_back(var);
              return vars;
          }(),
          cfg.lr_source, cfg.momentum),
      rng(cfg.seed + 5) {}

std::vector<BatchMetrics> train_epoch(const EpochState& state, const Dataset& target, TrainingSession& session) {
    const auto& cfg = session.config;
    std::vector<int> order;
    for (Eigen::Index i = 0; i < target.size(); ++i)
        if (target.valid.empty() || target.valid[static_cast<std::size_t>(i)]) order.push_back(static_cast<int>(i));
    std::shuffle(order.begin(), order.end(), session.rng);

    const double scale = session.vl.logit_scale();
    std::vector<BatchMetrics> metrics;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::vector<int> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
        Matrix x(static_cast<Eigen::Index>(ids.size()), target.dim());
        for (std::size_t r = 0; r < ids.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = target.x.row(ids[r]);

        BatchMetrics m;
        m.step = session.step++;
        m.epoch = state.epoch;

        // Forward both views with the parameters as they are at batch start.
        const Matrix images = session.vl.encode_images(x);
        const EncodedPrompts prompts = encode_prompt_groups(state.prompt_bank, session.vl);
        ad::Var logits_c = vision_language_logits(images, prompts, scale, cfg.use_mcc);
        ad::Var f_t = session.source.features(ad::constant(x));
        ad::Var logits_s = session.source.classify_features(f_t);

        const FusedBatch fused = fuse_batch(cga::softmax_rows(logits_s.value()), cga::softmax_rows(logits_c.value()));
        const Matrix& p_r = fused.p_r;
        m.agree_fraction = fused.agree_fraction();

        // Prompt step.
        ad::Var l_c = kl_to_reference(logits_c, p_r);
        ad::Var l_r = total_refinement_loss(state.prompt_bank, prompts, state.graph_s, scale);
        m.l_c = l_c.scalar();
        m.l_r = l_r.scalar();

        // Source / alignment step.
        AlignmentOutput aligned =
            project_and_align(f_t, state.bank_s, state.bank_c, session.heads, cfg.temperature);
        ad::Var f_a = fuse_features(f_t, aligned.f_s, aligned.f_clip, session.heads);
        ad::Var l_a = kl_to_reference(session.source.classify_features(f_a), p_r);
        ad::Var l_s = kl_to_reference(logits_s, p_r);
        m.l_s = l_s.scalar();
        m.l_a = l_a.scalar();
        m.ct_skipped = aligned.ct_skipped;
        m.l_ct = aligned.ct_skipped ? 0.0 : aligned.l_ct.scalar();

        for (double v : {m.l_s, m.l_a, m.l_ct, m.l_c, m.l_r})
            if (!std::isfinite(v)) throw NonFiniteLoss(m, ids);

        ad::Var l_clip;
        if (cfg.use_lc) l_clip = l_c;
        if (cfg.use_lr && state.prompt_bank.confusion_prompt_count() > 0)
            l_clip = l_clip.defined() ? ad::add(l_clip, l_r) : l_r;
        if (session.on_step) session.on_step("prompt", p_r);
        if (l_clip.defined() && l_clip.requires_grad()) {
            session.context_optimizer.zero_grad();
            l_clip.backward();
            session.context_optimizer.step();
        }

        ad::Var l_source = ad::add(l_s, ad::affine(l_a, cfg.alpha));
        if (cfg.use_lct && !aligned.ct_skipped) l_source = ad::add(l_source, ad::affine(aligned.l_ct, cfg.gamma));
        if (session.on_step) session.on_step("source", p_r);
        session.source_optimizer.zero_grad();
        l_source.backward();
        session.source_optimizer.step();

        metrics.push_back(m);
    }
    return metrics;
}

std::unique_ptr<ToyVisionLanguageModel> make_toy_vision_language(const AdaptationConfig& config,
                                                                 const std::vector<std::string>& class_names,
                                                                 const Matrix& anchors) {
    ToyVisionLanguageSpec spec;
    spec.input_dim = static_cast<int>(anchors.cols());
    spec.embed_dim = config.embed_dim;
    spec.bandwidth = config.bandwidth;
    spec.logit_scale = config.logit_scale;
    spec.context_length = config.context_length;
    spec.prefix = config.prefix;
    spec.filler_norm = config.filler_norm;
    spec.seed = config.seed + 4;
    return std::make_unique<ToyVisionLanguageModel>(spec, class_names, anchors);
}

void write_batch_metrics_csv(std::ostream& out, const std::vector<BatchMetrics>& batches) {
    out << "step,L_s,L_a,L_ct,L_c,L_r,mode_agree_fraction\n" << std::setprecision(10);
    for (const auto& b : batches)
        out << b.step << ',' << b.l_s << ',' << b.l_a << ',' << b.l_ct << ',' << b.l_c << ',' << b.l_r << ','
            << b.agree_fraction << '\n';
}

namespace {

template <class F>
void write_file(const fs::path& path, F&& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    body(out);
}

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json evaluation_json(const Evaluation& e) {
    return {{"accuracy", e.accuracy},
            {"mean_class_accuracy", e.mean_class_accuracy},
            {"per_class_accuracy", e.per_class_accuracy},
            {"confusion", matrix_json(e.confusion.cast<double>())}};
}

}  // namespace

RunReport adapt(const AdaptationConfig& config, const AdaptOptions& options) {
    if (auto errors = config.validate(); !errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw InvalidInput(msg);
    }
    const fs::path dir(config.data_dir);
    if (!fs::is_directory(dir)) throw InvalidInput("data.dir: directory not found: " + dir.string());
    if (!fs::exists(dir / "target.csv")) throw InvalidInput("data.dir: no target.csv in " + dir.string());
    if (!fs::exists(dir / "anchors.csv")) throw InvalidInput("data.dir: no anchors.csv in " + dir.string());

    Dataset target = load_dataset(dir / "target.csv");
    if (!config.class_names.empty()) target.class_names = config.class_names;
    if (target.class_names.empty()) throw InvalidInput("data.class_names: no classes.txt and no override given");
    const Matrix anchors = read_matrix_csv(dir / "anchors.csv");
    if (anchors.rows() != target.num_classes() || anchors.cols() != target.dim())
        throw InvalidInput("data.dir: anchors.csv must hold one row per class with the sample dimension");

    auto log = [&](const std::string& line) {
        if (options.log) *options.log << line << '\n' << std::flush;
    };

    SourceModel source = [&] {
        if (!config.source_checkpoint.empty()) {
            Checkpoint ck = load_checkpoint(config.source_checkpoint);
            if (static_cast<int>(ck.class_names.size()) != target.num_classes())
                throw InvalidInput("data.source_checkpoint: class count differs from the dataset");
            if (ck.source.architecture().input_dim != target.dim())
                throw InvalidInput("data.source_checkpoint: input dimension differs from the dataset");
            return std::move(ck.source);
        }
        if (!fs::exists(dir / "source.csv"))
            throw InvalidInput("data.source_checkpoint: empty and no source.csv to pretrain on");
        Dataset src = load_dataset(dir / "source.csv");
        SourceModel model({static_cast<int>(target.dim()), 32, 16, target.num_classes()}, config.seed + 1);
        train_supervised(model, src,
                         {config.pretrain_epochs, 32, config.lr_pretrain, config.momentum, config.seed + 2});
        return model;
    }();

    auto vl = make_toy_vision_language(config, target.class_names, anchors);
    ProjectionHeads heads = ProjectionHeads::random(source.architecture().feature_dim, config.seed + 3,
                                                    config.gate_hidden);

    RunReport report;
    report.class_names = target.class_names;
    report.has_labels = target.has_labels();
    if (report.has_labels) {
        report.baseline = evaluate(source, target);
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(1) << "source-only accuracy " << 100.0 * report.baseline.accuracy << "%";
        log(ss.str());
    }

    const fs::path out_dir(config.out);
    if (options.write_files) {
        fs::create_directories(out_dir);
        write_file(out_dir / "config.ini", [&](std::ostream& o) { o << serialize_config(config); });
    }

    TrainingSession session(source, *vl, heads, config);
    EpochState state;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.dynamic || epoch == 0) {
            state = epoch_preoperation(target, source, *vl, config, epoch);
        } else {
            state.epoch = epoch;
        }

        EpochSummary summary;
        summary.epoch = epoch;
        summary.cm_estimated = state.graph_s.cm;
        summary.off_diagonal_pairs = state.graph_s.off_diagonal_pairs();
        summary.threshold = state.graph_s.threshold;
        if (report.has_labels) summary.evaluation = evaluate(source, target);

        if (options.write_files) {
            const std::string k = std::to_string(epoch);
            write_file(out_dir / ("cm_est_epoch" + k + ".csv"),
                       [&](std::ostream& o) { write_confusion_csv(o, state.graph_s.cm, report.class_names); });
            write_file(out_dir / ("pairs_epoch" + k + ".jsonl"),
                       [&](std::ostream& o) { write_pairs_jsonl(o, state.graph_s, report.class_names); });
            write_file(out_dir / ("prompts_epoch" + k + ".jsonl"),
                       [&](std::ostream& o) { write_prompts_jsonl(o, state.prompt_bank); });
            write_file(out_dir / ("bank_epoch" + k + ".csv"), [&](std::ostream& o) {
                write_bank_csv(o, state.bank_s, report.class_names);
                std::ostringstream rest;
                write_bank_csv(rest, state.bank_c, report.class_names);
                const std::string body = rest.str();
                o << body.substr(body.find('\n') + 1);
            });
            if (report.has_labels)
                write_file(out_dir / ("cm_true_epoch" + k + ".csv"),
                           [&](std::ostream& o) { write_true_confusion_csv(o, summary.evaluation, report.class_names); });
        }

        const auto batches = train_epoch(state, target, session);
        if (!batches.empty()) {
            const double n = static_cast<double>(batches.size());
            for (const auto& b : batches) {
                summary.agree_fraction += b.agree_fraction / n;
                summary.mean_l_s += b.l_s / n;
                summary.mean_l_a += b.l_a / n;
                summary.mean_l_ct += b.l_ct / n;
                summary.mean_l_c += b.l_c / n;
                summary.mean_l_r += b.l_r / n;
            }
        }
        report.batches.insert(report.batches.end(), batches.begin(), batches.end());
        report.epochs.push_back(summary);

        std::ostringstream ss;
        ss << std::fixed << std::setprecision(4) << "epoch " << epoch << " pairs=" << summary.off_diagonal_pairs.size()
           << " agree=" << summary.agree_fraction << " L_s=" << summary.mean_l_s << " L_c=" << summary.mean_l_c;
        if (report.has_labels) ss << std::setprecision(1) << " acc@start=" << 100.0 * summary.evaluation.accuracy << "%";
        log(ss.str());
    }

    if (report.has_labels) {
        report.final = evaluate(source, target);
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(1) << "adapted accuracy " << 100.0 * report.final.accuracy << "%";
        log(ss.str());
    }

    if (options.write_files) {
        report.checkpoint = out_dir / "checkpoint.json";
        save_checkpoint(report.checkpoint, {source, report.class_names});
        write_file(out_dir / "batch_metrics.csv", [&](std::ostream& o) { write_batch_metrics_csv(o, report.batches); });
        write_file(out_dir / "metrics.csv", [&](std::ostream& o) {
            o << "epoch,accuracy,mean_class_accuracy,off_diagonal_pairs,threshold,mode_agree_fraction,L_s,L_a,L_ct,L_c,"
                 "L_r\n"
              << std::setprecision(10);
            for (const auto& e : report.epochs)
                o << e.epoch << ',' << e.evaluation.accuracy << ',' << e.evaluation.mean_class_accuracy << ','
                  << e.off_diagonal_pairs.size() << ',' << e.threshold << ',' << e.agree_fraction << ',' << e.mean_l_s
                  << ',' << e.mean_l_a << ',' << e.mean_l_ct << ',' << e.mean_l_c << ',' << e.mean_l_r << '\n';
        });
        if (report.has_labels)
            write_file(out_dir / "cm_true_final.csv",
                       [&](std::ostream& o) { write_true_confusion_csv(o, report.final, report.class_names); });

        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : report.epochs) {
            nlohmann::json pairs = nlohmann::json::array();
            for (const auto& p : e.off_diagonal_pairs)
                pairs.push_back({report.class_names[static_cast<std::size_t>(p.primary)],
                                 report.class_names[static_cast<std::size_t>(p.secondary)]});
            nlohmann::json item{{"epoch", e.epoch},
                                {"cm_estimated", matrix_json(e.cm_estimated)},
                                {"pairs", pairs},
                                {"threshold", e.threshold},
                                {"mode_agree_fraction", e.agree_fraction}};
            if (report.has_labels) {
                item["cm_true"] = matrix_json(e.evaluation.confusion.cast<double>());
                item["accuracy"] = e.evaluation.accuracy;
            }
            epochs.push_back(item);
        }
        nlohmann::json doc{{"class_names", report.class_names},
                           {"epochs", epochs},
                           {"checkpoint", report.checkpoint.filename().string()}};
        if (report.has_labels) {
            doc["baseline"] = evaluation_json(report.baseline);
            doc["final"] = evaluation_json(report.final);
        }
        write_file(out_dir / "report.json", [&](std::ostream& o) { o << doc.dump(1) << '\n'; });
    }
    return report;
}

}  // namespace cga
