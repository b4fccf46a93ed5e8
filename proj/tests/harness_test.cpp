#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/harness.hpp"
#include "support.hpp"

namespace {

using namespace debias;
using testing_support::TempDir;

constexpr Label F = Label::FAKE;
constexpr Label R = Label::REAL;

RunOptions options(std::size_t threads, bool explain) {
  RunOptions o;
  o.threads = threads;
  o.explain = explain;
  return o;
}

ErrorCode code_of(const std::function<void()>& fn, std::string* what = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::IO_ERROR;
}

TEST(MacroF1, HandComputedExample) {
  const std::vector<Label> gold{F, F, R, R};
  const std::vector<Label> pred{F, R, R, R};
  const auto cell = evaluate_predictions(gold, pred);
  EXPECT_DOUBLE_EQ(cell.per_class.at(F).f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(cell.per_class.at(R).f1, 0.8);
  EXPECT_DOUBLE_EQ(cell.macro_f1, (2.0 / 3.0 + 0.8) / 2.0);
  EXPECT_EQ(cell.per_class.at(F).support, 2U);
}

TEST(MacroF1, PerfectAndTotalMiss) {
  const std::vector<Label> gold{F, R, F, R};
  EXPECT_DOUBLE_EQ(macro_f1(gold, gold), 1.0);
  const std::vector<Label> flipped{R, F, R, F};
  EXPECT_DOUBLE_EQ(macro_f1(gold, flipped), 0.0);
}

TEST(MacroF1, LengthMismatch) {
  const std::vector<Label> gold{F, R};
  const std::vector<Label> pred{F};
  EXPECT_EQ(code_of([&] { macro_f1(gold, pred); }), ErrorCode::LENGTH_MISMATCH);
}

TEST(MacroF1, SymmetricUnderLabelSwap) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Label> gold, pred, gold_sw, pred_sw;
    const auto n = 1 + gen() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(gen() % 2 ? F : R);
      pred.push_back(gen() % 2 ? F : R);
      gold_sw.push_back(gold.back() == F ? R : F);
      pred_sw.push_back(pred.back() == F ? R : F);
    }
    const double m = macro_f1(gold, pred);
    EXPECT_DOUBLE_EQ(m, macro_f1(gold_sw, pred_sw));
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(Improvement, Examples) {
  EXPECT_NEAR(improvement_percent(31.49, 54.00), 71.48, 0.005);
  EXPECT_NEAR(improvement_percent(98.50, 96.95), -1.57, 0.005);
  EXPECT_EQ(improvement_percent(50.0, 50.0), 0.0);
  EXPECT_EQ(code_of([] { improvement_percent(0.0, 1.0); }), ErrorCode::NONPOSITIVE_BASELINE);
  EXPECT_EQ(code_of([] { improvement_percent(-3.0, 1.0); }), ErrorCode::NONPOSITIVE_BASELINE);
  const std::vector<double> row{71.48, 7.16};
  EXPECT_NEAR(arithmetic_mean(row), 39.32, 1e-12);
  EXPECT_EQ(code_of([] { arithmetic_mean(std::vector<double>{}); }), ErrorCode::EMPTY_INPUT);
}

TEST(Variants, StagesAndNames) {
  EXPECT_TRUE(stages_of(PipelineVariant::BASELINE).baseline_normalize);
  EXPECT_FALSE(stages_of(PipelineVariant::BASELINE).extended_clean);
  EXPECT_TRUE(stages_of(PipelineVariant::EXTENDED_PREP).extended_clean);
  EXPECT_FALSE(stages_of(PipelineVariant::EXTENDED_PREP).entity_replace);
  EXPECT_TRUE(stages_of(PipelineVariant::EXTENDED_PREP_PLUS_NER).entity_replace);
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_EQ(parse_variant("extended_prep"), PipelineVariant::EXTENDED_PREP);
  EXPECT_EQ(code_of([] { parse_variant("FULL"); }), ErrorCode::INVALID_CONFIG);
}

TEST(TextTransform, AppliesStagesInOrder) {
  const auto& g = Gazetteer::shipped();
  const auto& emo = EmoticonLexicon::shipped();
  const Document doc{"1", "Donald Trump says https://t.co/x #covid", Label::FAKE};
  EXPECT_EQ(TextTransform(PipelineVariant::BASELINE, StageOrder::CLEAN_THEN_NER, g, emo).apply(doc),
            "donald trump says $URL$ $HASHTAG$ covid");
  EXPECT_EQ(TextTransform(PipelineVariant::EXTENDED_PREP, StageOrder::CLEAN_THEN_NER, g, emo).apply(doc),
            "Donald Trump says");
  EXPECT_EQ(TextTransform(PipelineVariant::EXTENDED_PREP_PLUS_NER, StageOrder::CLEAN_THEN_NER, g, emo).apply(doc),
            "$PER$ says");
  EXPECT_EQ(TextTransform(PipelineVariant::EXTENDED_PREP_PLUS_NER, StageOrder::NER_THEN_CLEAN, g, emo).apply(doc),
            "$PER$ says");
}

TEST(TextTransform, FingerprintSeparatesVariantsAndOrders) {
  const auto& g = Gazetteer::shipped();
  const auto& emo = EmoticonLexicon::shipped();
  std::set<std::string> seen;
  for (auto v : kAllVariants) {
    seen.insert(TextTransform(v, StageOrder::CLEAN_THEN_NER, g, emo).fingerprint());
  }
  seen.insert(TextTransform(PipelineVariant::EXTENDED_PREP_PLUS_NER, StageOrder::NER_THEN_CLEAN, g, emo).fingerprint());
  EXPECT_EQ(seen.size(), 4U);
  EXPECT_EQ(TextTransform(PipelineVariant::BASELINE, StageOrder::CLEAN_THEN_NER, g, emo).fingerprint(),
            TextTransform(PipelineVariant::BASELINE, StageOrder::NER_THEN_CLEAN, g, emo).fingerprint());
}

nlohmann::json minimal_config() {
  return nlohmann::json::parse(R"({
    "datasets": [{"name": "a", "path": "a.jsonl"}, {"name": "b", "path": "/abs/b.csv", "format": "csv"}],
    "split": {"seed": 1},
    "train": {"seed": 2},
    "shapley": {"seed": 3}
  })");
}

TEST(ExperimentConfig, ParsesAndResolvesRelativePaths) {
  const auto c = experiment_config_from_json(minimal_config(), "/base");
  ASSERT_EQ(c.datasets.size(), 2U);
  EXPECT_EQ(c.datasets[0].path, std::filesystem::path("/base/a.jsonl"));
  EXPECT_EQ(c.datasets[1].path, std::filesystem::path("/abs/b.csv"));
  EXPECT_EQ(c.datasets[1].format, DataFormat::CSV);
  EXPECT_EQ(c.split.seed, 1U);
  EXPECT_EQ(c.train.seed, 2U);
  EXPECT_EQ(c.shapley.seed, 3U);
  EXPECT_TRUE(c.rotation);
  EXPECT_EQ(c.variants.size(), 3U);
}

TEST(ExperimentConfig, EverySeedIsRequired) {
  for (const char* section : {"split", "train", "shapley"}) {
    auto j = minimal_config();
    j[section].erase("seed");
    std::string what;
    EXPECT_EQ(code_of([&] { experiment_config_from_json(j, "/base"); }, &what), ErrorCode::MISSING_SEED) << section;
    EXPECT_NE(what.find(section), std::string::npos) << what;
  }
}

TEST(ExperimentConfig, RotationNeedsTwoDatasets) {
  auto j = minimal_config();
  j["datasets"].erase(1);
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j, "/base"); }), ErrorCode::INVALID_CONFIG);
  j["rotation"] = false;
  EXPECT_NO_THROW(experiment_config_from_json(j, "/base"));
}

TEST(ExperimentConfig, RejectsBadValues) {
  auto j = minimal_config();
  j["shapley"]["n_permutations"] = 3;
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j, "/base"); }), ErrorCode::INVALID_CONFIG);
  j = minimal_config();
  j["variants"] = {"BASELINE", "BASELINE"};
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j, "/base"); }), ErrorCode::INVALID_CONFIG);
  j = minimal_config();
  j["datasets"][1]["name"] = "a";
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j, "/base"); }), ErrorCode::INVALID_CONFIG);
}

TEST(ExperimentConfig, CanonicalJsonRoundTrip) {
  const auto c = experiment_config_from_json(minimal_config(), "/base");
  const auto again = experiment_config_from_json(nlohmann::json::parse(to_json(c).dump()), "/elsewhere");
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
  EXPECT_EQ(config_hash(again), config_hash(c));
}

// Three tiny corpora written to a temp dir, each separable by a class word.
struct TinyCorpora {
  TempDir dir{"rotation"};
  ExperimentConfig config;

  explicit TinyCorpora(std::size_t n_datasets, bool rotation) {
    for (std::size_t d = 0; d < n_datasets; ++d) {
      std::string jsonl;
      for (int i = 0; i < 20; ++i) {
        const auto id = std::to_string(i);
        jsonl += R"({"id":"f)" + id + R"(","text":"hoax claim )" + std::to_string(d) + R"( https://x.y","label":"fake"})" "\n";
        jsonl += R"({"id":"r)" + id + R"(","text":"report today )" + std::to_string(d) + R"(","label":"real"})" "\n";
      }
      const auto name = "d" + std::to_string(d);
      testing_support::write_text(dir / (name + ".jsonl"), jsonl);
      config.datasets.push_back({name, dir / (name + ".jsonl"), DataFormat::JSONL, default_label_map()});
    }
    config.rotation = rotation;
    config.split.seed = 1;
    config.train.seed = 1;
    config.shapley.seed = 1;
    config.shapley.sample_size = 3;
  }
};

TEST(Rotation, CellCountsWithThreeDatasets) {
  TinyCorpora t(3, true);
  const auto run = run_rotation(t.config, options(1, false));
  const auto& r = run.results;
  EXPECT_EQ(r.cells.size(), 3U * 3U * 3U);
  std::size_t internal = 0;
  for (const auto& c : r.cells) internal += c.internal;
  EXPECT_EQ(internal, 3U * 3U);
  EXPECT_EQ(r.improvements.size(), 6U);
  EXPECT_EQ(r.external_averages.size(), 3U);
  ASSERT_TRUE(r.overall_average.has_value());
  std::vector<double> averages;
  for (const auto& [train, avg] : r.external_averages) averages.push_back(avg);
  EXPECT_DOUBLE_EQ(*r.overall_average, arithmetic_mean(averages));
  EXPECT_TRUE(run.artifacts.empty());
}

TEST(Rotation, SingleDatasetWithoutRotationIsInternalOnly) {
  TinyCorpora t(1, false);
  const auto run = run_rotation(t.config, options(1, false));
  EXPECT_EQ(run.results.cells.size(), 3U);
  for (const auto& c : run.results.cells) EXPECT_TRUE(c.internal);
  EXPECT_TRUE(run.results.improvements.empty());
  EXPECT_FALSE(run.results.overall_average.has_value());
}

TEST(Rotation, SharedTransformHashWithinFamily) {
  TinyCorpora t(2, true);
  const auto run = run_rotation(t.config, options(1, false));
  for (const auto& a : run.results.cells) {
    for (const auto& b : run.results.cells) {
      EXPECT_EQ(a.variant == b.variant, a.transform_hash == b.transform_hash);
    }
  }
}

TEST(Rotation, ExplainsSampledInternalTestDocuments) {
  TinyCorpora t(2, true);
  const auto run = run_rotation(t.config, options(2, true));
  ASSERT_EQ(run.artifacts.size(), 2U * 3U);
  for (const auto& art : run.artifacts) {
    EXPECT_EQ(art.explanations.size(), 3U);
    EXPECT_EQ(art.gold.size(), 3U);
    for (const auto& e : art.explanations) EXPECT_LE(e.efficiency_gap(), 1e-9);
    EXPECT_FALSE(art.global_sum.empty());
  }
  const auto* base = run.artifact("d0", PipelineVariant::BASELINE);
  ASSERT_NE(base, nullptr);
  bool url_seen = false;
  for (const auto& e : base->global_sum.entries) url_seen = url_seen || e.token == "$URL$";
  const auto* full = run.artifact("d0", PipelineVariant::EXTENDED_PREP_PLUS_NER);
  ASSERT_NE(full, nullptr);
  for (const auto& e : full->global_sum.entries) EXPECT_NE(e.token, "$URL$");
  EXPECT_TRUE(url_seen || base->explanations.empty());
}

TEST(Rotation, Deterministic) {
  TinyCorpora t(2, true);
  const auto a = run_rotation(t.config, options(1, true));
  const auto b = run_rotation(t.config, options(3, true));
  EXPECT_EQ(to_json(a.results).dump(), to_json(b.results).dump());
  ASSERT_EQ(a.artifacts.size(), b.artifacts.size());
  for (std::size_t f = 0; f < a.artifacts.size(); ++f) {
    for (std::size_t k = 0; k < a.artifacts[f].explanations.size(); ++k) {
      EXPECT_EQ(a.artifacts[f].explanations[k].phi, b.artifacts[f].explanations[k].phi);
    }
  }
}

TEST(Rotation, ErrorsCarryCellContext) {
  TinyCorpora t(2, true);
  testing_support::write_text(t.config.datasets[0].path, R"({"id":"1","text":"only","label":"fake"})" "\n");
  std::string what;
  EXPECT_EQ(code_of([&] { run_rotation(t.config, options(1, false)); }, &what),
            ErrorCode::CLASS_TOO_SMALL);
  EXPECT_NE(what.find("[train=d0"), std::string::npos) << what;
}

TEST(Improvements, ZeroBaselineIsSkippedWithNote) {
  ExperimentResults r;
  r.datasets = {"a", "b"};
  r.train_datasets = {"a"};
  r.variants = {PipelineVariant::BASELINE, PipelineVariant::EXTENDED_PREP_PLUS_NER};
  const auto cell = [](std::string eval, PipelineVariant v, double f1, bool internal) {
    CellResult c;
    c.train_dataset = "a";
    c.eval_dataset = std::move(eval);
    c.variant = v;
    c.internal = internal;
    c.metrics.macro_f1 = f1;
    return c;
  };
  r.cells = {cell("a", PipelineVariant::BASELINE, 0.9, true), cell("b", PipelineVariant::BASELINE, 0.0, false),
             cell("a", PipelineVariant::EXTENDED_PREP_PLUS_NER, 0.8, true),
             cell("b", PipelineVariant::EXTENDED_PREP_PLUS_NER, 0.5, false)};
  compute_improvements(r);
  EXPECT_TRUE(r.improvements.empty());
  EXPECT_FALSE(r.notes.empty());
  EXPECT_NEAR(r.internal_improvements.at("a"), (80.0 - 90.0) / 90.0 * 100.0, 1e-9);
}

TEST(Results, JsonRoundTrip) {
  TinyCorpora t(2, true);
  const auto run = run_rotation(t.config, options(1, false));
  const auto back = experiment_results_from_json(nlohmann::json::parse(to_json(run.results).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(run.results).dump());
}

// Frozen from the shipped golden configuration (train seed 7, split seed 7).
TEST(GoldenExperiment, ConfoundedDirectionMacroF1) {
  const auto config = load_experiment_config(testing_support::source_dir() / "data/golden/experiment.json");
  const auto run = run_rotation(config, options(1, false));
  const auto& r = run.results;
  const auto f1 = [&](const char* train, const char* eval, PipelineVariant v) {
    const auto* c = r.find(train, eval, v);
    EXPECT_NE(c, nullptr);
    return c ? c->metrics.macro_f1 : -1.0;
  };
  EXPECT_DOUBLE_EQ(f1("domain_a", "domain_a", PipelineVariant::BASELINE), 0.9733143568760008);
  EXPECT_DOUBLE_EQ(f1("domain_a", "domain_a", PipelineVariant::EXTENDED_PREP_PLUS_NER), 0.9333333333333333);
  EXPECT_DOUBLE_EQ(f1("domain_a", "domain_b", PipelineVariant::BASELINE), 0.8112185686653772);
  EXPECT_DOUBLE_EQ(f1("domain_a", "domain_b", PipelineVariant::EXTENDED_PREP_PLUS_NER), 0.9249729152223953);
  EXPECT_DOUBLE_EQ(f1("domain_b", "domain_a", PipelineVariant::BASELINE), 0.9309993789944109);
  EXPECT_NEAR(r.improvements.at({"domain_a", "domain_b"}), 14.02265073199293, 1e-9);
  ASSERT_TRUE(r.overall_average.has_value());
  EXPECT_NEAR(*r.overall_average, 6.581675670134753, 1e-9);
}

}  // namespace
