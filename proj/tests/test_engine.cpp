#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cga/engine.hpp"
#include "cga/synthetic.hpp"
#include "support.hpp"

using namespace cga;

namespace {

// Small three-class domain pair shared by every test in this file.
const std::filesystem::path& toy_dir() {
    static const std::filesystem::path dir = [] {
        SyntheticDomainSpec spec;
        spec.classes = 3;
        spec.samples_per_class = 80;
        spec.selftest_epochs = 5;
        spec.seed = 5;
        auto d = test::scratch_dir("engine_data");
        write_synthetic(spec, d);
        return d;
    }();
    return dir;
}

AdaptationConfig small_config(const std::string& out) {
    AdaptationConfig c;
    c.data_dir = toy_dir().string();
    c.out = (std::filesystem::temp_directory_path() / ("cga_test_" + out)).string();
    c.epochs = 2;
    c.pretrain_epochs = 10;
    c.embed_dim = 32;
    c.lr_source = 1e-2;
    c.lr_context = 1e-2;
    return c;
}

struct Fixture {
    AdaptationConfig config;
    Dataset target;
    Matrix anchors;
    SourceModel source;
    std::unique_ptr<ToyVisionLanguageModel> vl;
    ProjectionHeads heads;

    explicit Fixture(AdaptationConfig c)
        : config(std::move(c)),
          target(load_dataset(toy_dir() / "target.csv")),
          anchors(read_matrix_csv(toy_dir() / "anchors.csv")),
          source({2, 32, 16, 3}, 1),
          vl(make_toy_vision_language(config, target.class_names, anchors)),
          heads(ProjectionHeads::random(16, 3, config.gate_hidden)) {
        train_supervised(source, load_dataset(toy_dir() / "source.csv"), {10, 32, 0.05, 0.9, 2});
    }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("zero learning rates leave every parameter untouched") {
    AdaptationConfig c = small_config("lr0");
    c.lr_source = 0.0;
    c.lr_context = 0.0;
    Fixture f(c);
    const ParameterSet source_before = f.source.parameters();
    const ParameterSet context_before = f.vl->context();
    const ParameterSet heads_before = f.heads.params;
    TrainingSession session(f.source, *f.vl, f.heads, f.config);
    const EpochState state = epoch_preoperation(f.target, f.source, *f.vl, f.config, 0);
    const auto batches = train_epoch(state, f.target, session);
    CHECK(batches.size() == 8);
    CHECK(f.source.parameters().identical_to(source_before));
    CHECK(f.vl->context().identical_to(context_before));
    CHECK(f.heads.params.identical_to(heads_before));
}

TEST_CASE("training touches only the prompt context of the vision-language model") {
    Fixture f(small_config("frozen"));
    const auto frozen = f.vl->frozen_state();
    const ParameterSet context_before = f.vl->context();
    TrainingSession session(f.source, *f.vl, f.heads, f.config);
    train_epoch(epoch_preoperation(f.target, f.source, *f.vl, f.config, 0), f.target, session);
    const auto after = f.vl->frozen_state();
    REQUIRE(after.size() == frozen.size());
    for (std::size_t i = 0; i < frozen.size(); ++i) CHECK(after[i] == frozen[i]);
    CHECK_FALSE(f.vl->context().identical_to(context_before));
}

TEST_CASE("zero epochs return the input checkpoint") {
    const auto dir = test::scratch_dir("engine_ck0");
    Fixture f(small_config("ck0_unused"));
    save_checkpoint(dir / "in.json", {f.source, f.target.class_names});
    AdaptationConfig c = small_config("ck0");
    c.epochs = 0;
    c.source_checkpoint = (dir / "in.json").string();
    const RunReport r = adapt(c);
    const Checkpoint out = load_checkpoint(r.checkpoint);
    CHECK(out.source.parameters().identical_to(f.source.parameters()));
    CHECK(r.final.accuracy == r.baseline.accuracy);
}

TEST_CASE("pre-operation on frozen models is deterministic") {
    Fixture f(small_config("preop"));
    const EpochState a = epoch_preoperation(f.target, f.source, *f.vl, f.config, 0);
    const EpochState b = epoch_preoperation(f.target, f.source, *f.vl, f.config, 0);
    CHECK(a.graph_s.cm == b.graph_s.cm);
    CHECK(a.graph_s.pairs == b.graph_s.pairs);
    CHECK(a.graph_c.cm == b.graph_c.cm);
    CHECK(a.p_c_cache.rows == b.p_c_cache.rows);
    CHECK(a.bank_s.centers == b.bank_s.centers);
    CHECK(a.bank_c.centers == b.bank_c.centers);
    CHECK(a.m_sel == b.m_sel);
}

TEST_CASE("pair and prompt counts stay within bounds") {
    Fixture f(small_config("bounds"));
    const EpochState s = epoch_preoperation(f.target, f.source, *f.vl, f.config, 0);
    CHECK(s.graph_s.off_diagonal_pairs().size() <= 3);
    CHECK(s.prompt_bank.prompt_count() <= 6);
    CHECK(s.prompt_bank.prompt_count() >= 3);
    CHECK(s.bank_s.size() == static_cast<Eigen::Index>(s.graph_s.pairs.size()));
    CHECK(s.bank_c.pair_index == s.bank_s.pair_index);
    CHECK(s.m_sel == default_m_sel(240, s.graph_s.pairs.size()));
}

TEST_CASE("pre-operation rejects bad inputs") {
    Fixture f(small_config("preop_bad"));
    AdaptationConfig c = f.config;
    c.n_top = 4;
    CHECK_THROWS_AS(epoch_preoperation(f.target, f.source, *f.vl, c, 0), InvalidInput);
    Dataset empty = f.target;
    empty.valid.assign(empty.valid.size(), false);
    CHECK_THROWS_AS(epoch_preoperation(empty, f.source, *f.vl, f.config, 0), InvalidInput);
}

TEST_CASE("without multi-centre prompts the logits equal zero-shot") {
    Fixture f(small_config("nomcc"));
    Matrix cm(3, 3);
    cm << 0.5, 0.4, 0.1, 0.1, 0.8, 0.1, 0.1, 0.45, 0.45;
    const auto bank = PromptBank::from_graph(graph_from_confusion_matrix(cm), f.target.class_names);
    REQUIRE(bank.confusion_prompt_count() > 0);
    const EncodedPrompts enc = encode_prompt_groups(bank, *f.vl);
    const Matrix img = f.vl->encode_images(f.target.x.topRows(20));
    const Matrix got = vision_language_logits(img, enc, 10.0, false).value();

    const auto plain = PromptBank::from_pairs({}, f.target.class_names);
    const Matrix base = encode_prompt_groups(plain, *f.vl).features.value();
    const Matrix zero_shot = 10.0 * (img * base.transpose());
    CHECK(got == zero_shot);
    CHECK(vision_language_logits(img, enc, 10.0, true).value() != zero_shot);
}

TEST_CASE("each batch steps the prompts before the source model with one reference") {
    Fixture f(small_config("order"));
    TrainingSession session(f.source, *f.vl, f.heads, f.config);
    std::vector<std::pair<std::string, Matrix>> calls;
    session.on_step = [&](const std::string& which, const Matrix& p_r) { calls.emplace_back(which, p_r); };
    const auto batches = train_epoch(epoch_preoperation(f.target, f.source, *f.vl, f.config, 0), f.target, session);
    REQUIRE(calls.size() == 2 * batches.size());
    for (std::size_t k = 0; k < calls.size(); k += 2) {
        CHECK(calls[k].first == "prompt");
        CHECK(calls[k + 1].first == "source");
        CHECK(calls[k].second == calls[k + 1].second);
        CHECK(calls[k].second.rowwise().sum().isOnes(1e-9));
    }
}

TEST_CASE("a non-finite sample aborts training with its batch ids") {
    Fixture f(small_config("nan"));
    const EpochState state = epoch_preoperation(f.target, f.source, *f.vl, f.config, 0);
    Dataset bad = f.target;
    bad.x(17, 0) = std::nan("");
    TrainingSession session(f.source, *f.vl, f.heads, f.config);
    try {
        train_epoch(state, bad, session);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(std::find(e.batch_ids.begin(), e.batch_ids.end(), 17) != e.batch_ids.end());
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("report files and schema") {
    const AdaptationConfig c = small_config("report");
    const RunReport r = adapt(c);
    const std::filesystem::path out(c.out);
    for (const char* f : {"config.ini", "checkpoint.json", "metrics.csv", "batch_metrics.csv", "report.json",
                          "cm_true_final.csv", "cm_est_epoch0.csv", "pairs_epoch1.jsonl", "prompts_epoch0.jsonl",
                          "bank_epoch1.csv", "cm_true_epoch0.csv"})
        CHECK_MESSAGE(std::filesystem::exists(out / f), f);
    const auto doc = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(doc["class_names"].size() == 3);
    REQUIRE(doc["epochs"].size() == 2);
    for (const char* k : {"cm_estimated", "pairs", "threshold", "cm_true", "accuracy"})
        CHECK_MESSAGE(doc["epochs"][0].contains(k), k);
    CHECK(doc.contains("baseline"));
    CHECK(doc.contains("final"));
    CHECK(slurp(out / "metrics.csv").rfind(
              "epoch,accuracy,mean_class_accuracy,off_diagonal_pairs,threshold,mode_agree_fraction,L_s,L_a,L_ct,L_c,L_r\n",
              0) == 0);
    CHECK(slurp(out / "batch_metrics.csv").rfind("step,L_s,L_a,L_ct,L_c,L_r,mode_agree_fraction\n", 0) == 0);
    CHECK(load_checkpoint(out / "checkpoint.json").groups == std::vector<std::string>{"source"});
    CHECK(r.batches.size() == 16);
}

TEST_CASE("the same seed reproduces the metrics files") {
    const AdaptationConfig a = small_config("seed_a");
    const AdaptationConfig b = small_config("seed_b");
    adapt(a);
    adapt(b);
    CHECK(slurp(std::filesystem::path(a.out) / "metrics.csv") == slurp(std::filesystem::path(b.out) / "metrics.csv"));
    CHECK(slurp(std::filesystem::path(a.out) / "batch_metrics.csv") ==
          slurp(std::filesystem::path(b.out) / "batch_metrics.csv"));
}

TEST_CASE("static mode reuses the first epoch's confusion state") {
    AdaptationConfig c = small_config("static");
    c.dynamic = false;
    c.epochs = 3;
    AdaptOptions opts;
    opts.write_files = false;
    const RunReport r = adapt(c, opts);
    REQUIRE(r.epochs.size() == 3);
    CHECK(r.epochs[1].cm_estimated == r.epochs[0].cm_estimated);
    CHECK(r.epochs[2].cm_estimated == r.epochs[0].cm_estimated);
    CHECK(r.epochs[2].evaluation.confusion != r.epochs[0].evaluation.confusion);
}

TEST_CASE("missing data is reported against the config field") {
    AdaptationConfig c = small_config("missing");
    c.data_dir = "/nonexistent/cga";
    CHECK_THROWS_WITH_AS(adapt(c), doctest::Contains("data.dir"), InvalidInput);
}

TEST_CASE("agreement settles over the last epochs") {
    AdaptationConfig c = small_config("settle");
    c.epochs = 6;
    AdaptOptions opts;
    opts.write_files = false;
    const RunReport r = adapt(c, opts);
    for (std::size_t e = r.epochs.size() - 2; e < r.epochs.size(); ++e)
        CHECK(r.epochs[e].agree_fraction >= r.epochs[e - 1].agree_fraction - 0.05);
}
