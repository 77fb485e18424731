#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "cga/engine.hpp"
#include "cga/synthetic.hpp"

namespace py = pybind11;
using namespace cga;

namespace {

ProbabilityMatrix as_probs(const Matrix& p, std::optional<std::vector<bool>> valid) {
    return valid ? ProbabilityMatrix(p, std::move(*valid)) : ProbabilityMatrix(p);
}

std::vector<std::pair<int, int>> as_tuples(const std::vector<ConfusionPair>& pairs) {
    std::vector<std::pair<int, int>> out;
    for (const auto& p : pairs) out.emplace_back(p.primary, p.secondary);
    return out;
}

std::vector<ConfusionPair> from_tuples(const std::vector<std::pair<int, int>>& pairs) {
    std::vector<ConfusionPair> out;
    for (const auto& [i, j] : pairs) out.push_back({i, j});
    return out;
}

py::dict graph_dict(const ConfusionGraph& g) {
    py::dict ratios;
    for (const auto& [pair, r] : g.ratios) ratios[py::make_tuple(pair.primary, pair.secondary)] = r;
    py::dict d;
    d["cm"] = g.cm;
    d["threshold"] = g.threshold;
    d["pairs"] = as_tuples(g.off_diagonal_pairs());
    d["ratios"] = ratios;
    d["unsupported_classes"] = g.diagnostics.unsupported_classes;
    d["ties_exceed_cap"] = g.diagnostics.threshold_ties_exceed_cap;
    return d;
}

py::dict evaluation_dict(const Evaluation& e) {
    py::dict d;
    d["accuracy"] = e.accuracy;
    d["mean_class_accuracy"] = e.mean_class_accuracy;
    d["per_class_accuracy"] = e.per_class_accuracy;
    d["class_counts"] = e.class_counts;
    d["confusion"] = Eigen::MatrixXi(e.confusion);
    return d;
}

}  // namespace

PYBIND11_MODULE(_cga, m) {
    m.doc() = "Confusion-guided source-free adaptation core";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

    m.def("estimate_confusion_matrix",
          [](const Matrix& probs, int n_top, std::optional<std::vector<bool>> valid) {
              return estimate_confusion_matrix(as_probs(probs, std::move(valid)), n_top);
          },
          py::arg("probs"), py::arg("n_top") = 2, py::arg("valid") = py::none());

    m.def("build_confusion_graph",
          [](const Matrix& probs, int n_top, std::optional<std::vector<bool>> valid) {
              return graph_dict(build_confusion_graph(as_probs(probs, std::move(valid)), n_top));
          },
          py::arg("probs"), py::arg("n_top") = 2, py::arg("valid") = py::none());

    m.def("graph_from_confusion_matrix", [](const Matrix& cm) { return graph_dict(graph_from_confusion_matrix(cm)); },
          py::arg("cm"));

    m.def("pair_score",
          [](const RowVector& p, int primary, int secondary, double ratio) {
              return pair_score(p, {primary, secondary}, ratio);
          },
          py::arg("p"), py::arg("primary"), py::arg("secondary"), py::arg("ratio"));

    m.def("build_feature_bank",
          [](const Matrix& features, const Matrix& probs, int n_top, int m_sel) {
              const ProbabilityMatrix p(probs);
              const ConfusionGraph g = build_confusion_graph(p, n_top);
              const FeatureCenterBank b = build_feature_bank(features, p, g, m_sel, BankView::Source);
              py::dict d;
              d["centers"] = b.centers;
              d["pairs"] = as_tuples(b.pair_index);
              d["member_counts"] = b.member_counts;
              d["degenerate"] = b.degenerate;
              return d;
          },
          py::arg("features"), py::arg("probs"), py::arg("n_top") = 2, py::arg("m_sel") = 4);

    m.def("entropy", [](const RowVector& p) { return entropy(p); }, py::arg("p"));

    m.def("fuse_predictions",
          [](const RowVector& p_s, const RowVector& p_c) {
              const FusedPrediction f = fuse_predictions(p_s, p_c);
              py::dict d;
              d["p_r"] = f.p_r;
              d["mode"] = f.mode == FusionMode::AgreePick ? "agree" : "mix";
              d["omega"] = f.omega;
              d["degenerate"] = f.degenerate;
              return d;
          },
          py::arg("p_s"), py::arg("p_c"));

    m.def("fuse_batch",
          [](const Matrix& p_s, const Matrix& p_c) {
              const FusedBatch b = fuse_batch(p_s, p_c);
              return py::make_tuple(b.p_r, b.agree_fraction());
          },
          py::arg("p_s"), py::arg("p_c"));

    m.def("kl_to_reference", [](const RowVector& p, const RowVector& p_r) { return kl_to_reference(p, p_r); },
          py::arg("p"), py::arg("p_r"));

    m.def("prompt_texts",
          [](const std::vector<std::pair<int, int>>& pairs, std::vector<std::string> class_names,
             std::string prefix) {
              return PromptBank::from_pairs(from_tuples(pairs), std::move(class_names), std::move(prefix))
                  .rendered_texts();
          },
          py::arg("pairs"), py::arg("class_names"), py::arg("prefix") = std::string(kDefaultPrefix));

    m.def("spearman", &spearman, py::arg("a"), py::arg("b"));

    m.def("config_template", &config_template);

    m.def("synth_data",
          [](const std::filesystem::path& out, std::optional<std::filesystem::path> spec_path,
             std::optional<std::uint64_t> seed) {
              SyntheticDomainSpec spec = spec_path ? load_synthetic_spec(*spec_path) : SyntheticDomainSpec{};
              if (seed) spec.seed = *seed;
              const SyntheticSelfTest st = write_synthetic(spec, out);
              py::dict d;
              d["source_accuracy"] = st.source_accuracy;
              d["target_accuracy"] = st.target_accuracy;
              d["forward_rate"] = st.forward_rate;
              d["reverse_rate"] = st.reverse_rate;
              d["one_directional"] = st.one_directional;
              return d;
          },
          py::arg("out"), py::arg("spec") = py::none(), py::arg("seed") = py::none());

    m.def("adapt",
          [](const std::filesystem::path& config_path, std::optional<std::string> out,
             std::optional<std::uint64_t> seed, std::optional<std::string> data_dir) {
              AdaptationConfig c = load_config(config_path);
              if (out) c.out = *out;
              if (seed) c.seed = *seed;
              if (data_dir) c.data_dir = *data_dir;
              RunReport r;
              {
                  py::gil_scoped_release release;
                  r = adapt(c);
              }
              py::dict d;
              d["class_names"] = r.class_names;
              d["checkpoint"] = r.checkpoint.string();
              d["epochs"] = r.epochs.size();
              if (r.has_labels) {
                  d["baseline"] = evaluation_dict(r.baseline);
                  d["final"] = evaluation_dict(r.final);
              }
              return d;
          },
          py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
          py::arg("data_dir") = py::none());

    m.def("evaluate",
          [](const std::filesystem::path& checkpoint, const std::filesystem::path& samples) {
              const Checkpoint ck = load_checkpoint(checkpoint);
              return evaluation_dict(evaluate(ck.source, load_dataset(samples)));
          },
          py::arg("checkpoint"), py::arg("samples"));
}
