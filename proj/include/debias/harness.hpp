#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "debias/audit.hpp"
#include "debias/classifier.hpp"
#include "debias/corpus.hpp"
#include "debias/detail/hash.hpp"
#include "debias/detail/parallel.hpp"
#include "debias/detail/random.hpp"
#include "debias/entity.hpp"
#include "debias/error.hpp"
#include "debias/shapley.hpp"
#include "debias/textprep.hpp"

namespace debias {

inline constexpr std::string_view kToolkitVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Metrics

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count

  bool operator==(const ClassMetrics&) const = default;
};

struct MetricsCell {
  double macro_f1 = 0.0;
  std::map<Label, ClassMetrics> per_class;
  std::size_t n_eval = 0;

  bool operator==(const MetricsCell&) const = default;
};

// Per-class precision, recall and F1 plus their unweighted mean. A class with
// no gold and no predicted members scores F1 = 0.
inline MetricsCell evaluate_predictions(std::span<const Label> gold, std::span<const Label> pred) {
  if (gold.size() != pred.size()) {
    throw Error(ErrorCode::LENGTH_MISMATCH,
                fmt::format("{} gold labels vs {} predictions", gold.size(), pred.size()));
  }
  if (gold.empty()) throw Error(ErrorCode::EMPTY_INPUT, "no labels to score");
  MetricsCell cell;
  cell.n_eval = gold.size();
  for (Label c : kLabels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == c;
      const bool p = pred[i] == c;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    ClassMetrics m;
    m.support = tp + fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const auto denom = 2 * tp + fp + fn;
    m.f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    cell.per_class[c] = m;
  }
  cell.macro_f1 = (cell.per_class[Label::FAKE].f1 + cell.per_class[Label::REAL].f1) / 2.0;
  return cell;
}

inline double macro_f1(std::span<const Label> gold, std::span<const Label> pred) {
  return evaluate_predictions(gold, pred).macro_f1;
}

// (after - before) / before * 100
inline double improvement_percent(double before, double after) {
  if (!(before > 0.0)) {
    throw Error(ErrorCode::NONPOSITIVE_BASELINE, fmt::format("baseline {} must be > 0", before));
  }
  return (after - before) / before * 100.0;
}

inline double arithmetic_mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EMPTY_INPUT, "mean of no values");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

// ---------------------------------------------------------------------------
// Pipeline variants

enum class PipelineVariant { BASELINE, EXTENDED_PREP, EXTENDED_PREP_PLUS_NER };

inline constexpr std::array<PipelineVariant, 3> kAllVariants = {
    PipelineVariant::BASELINE, PipelineVariant::EXTENDED_PREP, PipelineVariant::EXTENDED_PREP_PLUS_NER};

struct StageToggles {
  bool baseline_normalize = false;
  bool extended_clean = false;
  bool entity_replace = false;
};

constexpr StageToggles stages_of(PipelineVariant v) {
  switch (v) {
    case PipelineVariant::BASELINE: return {true, false, false};
    case PipelineVariant::EXTENDED_PREP: return {false, true, false};
    case PipelineVariant::EXTENDED_PREP_PLUS_NER: return {false, true, true};
  }
  return {};
}

constexpr std::string_view variant_name(PipelineVariant v) {
  switch (v) {
    case PipelineVariant::BASELINE: return "BASELINE";
    case PipelineVariant::EXTENDED_PREP: return "EXTENDED_PREP";
    case PipelineVariant::EXTENDED_PREP_PLUS_NER: return "EXTENDED_PREP_PLUS_NER";
  }
  return "BASELINE";
}

inline PipelineVariant parse_variant(std::string_view s) {
  std::string upper(s);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto v : kAllVariants) {
    if (variant_name(v) == upper) return v;
  }
  throw Error(ErrorCode::INVALID_CONFIG,
              "unknown variant '" + std::string(s) + "' (BASELINE|EXTENDED_PREP|EXTENDED_PREP_PLUS_NER)");
}

enum class StageOrder { CLEAN_THEN_NER, NER_THEN_CLEAN };

constexpr std::string_view stage_order_name(StageOrder o) {
  return o == StageOrder::CLEAN_THEN_NER ? "clean_then_ner" : "ner_then_clean";
}

inline StageOrder parse_stage_order(std::string_view s) {
  if (s == "clean_then_ner") return StageOrder::CLEAN_THEN_NER;
  if (s == "ner_then_clean") return StageOrder::NER_THEN_CLEAN;
  throw Error(ErrorCode::INVALID_CONFIG, "unknown entity order '" + std::string(s) +
                                             "' (clean_then_ner|ner_then_clean)");
}

// The text rewrite one variant applies to every corpus it touches.
class TextTransform {
 public:
  TextTransform(PipelineVariant variant, StageOrder order, const Gazetteer& gazetteer,
                const EmoticonLexicon& emoticons, const SidecarAnnotations* sidecar = nullptr)
      : variant_(variant), order_(order), gazetteer_(&gazetteer), emoticons_(&emoticons), sidecar_(sidecar) {}

  PipelineVariant variant() const { return variant_; }

  std::string apply(const Document& doc) const {
    const auto stages = stages_of(variant_);
    std::string text = doc.text;
    if (stages.baseline_normalize) text = baseline_normalize(text);
    const std::vector<EntitySpan>* spans = nullptr;
    if (sidecar_) {
      if (const auto it = sidecar_->find(doc.id); it != sidecar_->end()) spans = &it->second;
    }
    if (stages.entity_replace && order_ == StageOrder::NER_THEN_CLEAN) {
      text = anonymize_entities(text, *gazetteer_, spans);
    }
    if (stages.extended_clean) text = extended_clean(text, *emoticons_);
    if (stages.entity_replace && order_ == StageOrder::CLEAN_THEN_NER) {
      text = anonymize_entities(text, *gazetteer_, spans);
    }
    return text;
  }

  // Stable hash of everything that can change apply()'s output.
  std::string fingerprint() const {
    const auto stages = stages_of(variant_);
    detail::Fnv1a h;
    h.field(variant_name(variant_));
    h.field(stages.baseline_normalize ? "norm" : "-");
    h.field(stages.extended_clean ? "clean" : "-");
    if (stages.extended_clean) {
      for (const auto& e : emoticons_->entries()) h.field(e);
    }
    if (stages.entity_replace) {
      h.field(stage_order_name(order_));
      for (const auto& [phrase, cat] : gazetteer_->entries()) h.field(phrase).field(category_name(cat));
      if (sidecar_) {
        for (const auto& [id, spans] : *sidecar_) {
          h.field(id);
          for (const auto& s : spans) {
            h.field(fmt::format("{}-{}-{}", s.token_start, s.token_end, category_name(s.category)));
          }
        }
      }
    }
    return h.hex();
  }

  Dataset apply(const Dataset& ds) const {
    Dataset out = ds;
    for (auto& d : out.documents) d.text = apply(d);
    return out;
  }

 private:
  PipelineVariant variant_;
  StageOrder order_;
  const Gazetteer* gazetteer_;
  const EmoticonLexicon* emoticons_;
  const SidecarAnnotations* sidecar_;
};

// ---------------------------------------------------------------------------
// Experiment configuration

struct DatasetConfig {
  std::string name;
  std::filesystem::path path;
  DataFormat format = DataFormat::JSONL;
  LabelMap label_map = default_label_map();
};

struct ShapleySettings {
  std::size_t exact_limit = kDefaultExactLimit;
  std::size_t n_permutations = 200;
  std::size_t sample_size = 200;
  std::uint64_t seed = 0;
};

struct AuditSettings {
  std::size_t top_k = kDefaultTopK;
  std::set<TokenCategory> spurious = default_spurious_categories();
};

struct EntitySettings {
  std::optional<std::filesystem::path> gazetteer;
  std::optional<std::filesystem::path> sidecar;
  StageOrder order = StageOrder::CLEAN_THEN_NER;
};

struct ExperimentConfig {
  std::vector<DatasetConfig> datasets;
  bool rotation = true;
  std::vector<PipelineVariant> variants{kAllVariants.begin(), kAllVariants.end()};
  SplitSpec split;
  TrainConfig train;
  ShapleySettings shapley;
  AuditSettings audit;
  EntitySettings entity;
  std::optional<std::filesystem::path> emoticons;
  std::optional<std::filesystem::path> stopwords;

  void validate() const {
    if (datasets.empty()) throw Error(ErrorCode::INVALID_CONFIG, "at least one dataset is required");
    if (rotation && datasets.size() < 2) {
      throw Error(ErrorCode::INVALID_CONFIG, "rotation needs at least two datasets");
    }
    std::set<std::string> names;
    for (const auto& d : datasets) {
      if (d.name.empty()) throw Error(ErrorCode::INVALID_CONFIG, "dataset name is empty");
      if (!names.insert(d.name).second) throw Error(ErrorCode::INVALID_CONFIG, "duplicate dataset " + d.name);
    }
    if (variants.empty()) throw Error(ErrorCode::INVALID_CONFIG, "no variants selected");
    if (std::set<PipelineVariant>(variants.begin(), variants.end()).size() != variants.size()) {
      throw Error(ErrorCode::INVALID_CONFIG, "duplicate variant");
    }
    split.validate();
    train.validate();
    if (shapley.exact_limit > kMaxExactLimit) {
      throw Error(ErrorCode::INVALID_CONFIG, fmt::format("shapley.exact_limit above {}", kMaxExactLimit));
    }
    if (shapley.n_permutations < 2 || shapley.n_permutations % 2 != 0) {
      throw Error(ErrorCode::INVALID_CONFIG, "shapley.n_permutations must be even and >= 2");
    }
    if (audit.top_k < 1) throw Error(ErrorCode::INVALID_CONFIG, "audit.top_k must be >= 1");
  }
};

namespace detail {

inline const nlohmann::json& require_object(const nlohmann::json& j, std::string_view key) {
  if (!j.contains(key) || !j[std::string(key)].is_object()) {
    throw Error(ErrorCode::INVALID_CONFIG, "'" + std::string(key) + "' must be an object");
  }
  return j[std::string(key)];
}

inline std::uint64_t require_seed(const nlohmann::json& section, std::string_view where) {
  if (!section.contains("seed") || section["seed"].is_null()) {
    throw Error(ErrorCode::MISSING_SEED, std::string(where) + ".seed is required");
  }
  if (!section["seed"].is_number_unsigned() && !section["seed"].is_number_integer()) {
    throw Error(ErrorCode::INVALID_CONFIG, std::string(where) + ".seed must be a non-negative integer");
  }
  if (section["seed"].is_number_integer() && section["seed"].get<long long>() < 0) {
    throw Error(ErrorCode::INVALID_CONFIG, std::string(where) + ".seed must be a non-negative integer");
  }
  return section["seed"].get<std::uint64_t>();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline DataFormat parse_format(std::string_view s) {
  if (s == "jsonl") return DataFormat::JSONL;
  if (s == "csv") return DataFormat::CSV;
  throw Error(ErrorCode::INVALID_CONFIG, "unknown format '" + std::string(s) + "' (jsonl|csv)");
}

}  // namespace detail

// Relative paths are resolved against `base_dir`. Every seed must be present.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::INVALID_CONFIG, "config must be a JSON object");
  ExperimentConfig c;
  try {
    c.split.seed = detail::require_seed(detail::require_object(j, "split"), "split");
    if (!j.contains("train") || !j["train"].is_object()) {
      throw Error(ErrorCode::INVALID_CONFIG, "'train' must be an object");
    }
    c.train = train_config_from_json(j["train"]);
    c.shapley.seed = detail::require_seed(detail::require_object(j, "shapley"), "shapley");

    if (!j.contains("datasets") || !j["datasets"].is_array()) {
      throw Error(ErrorCode::INVALID_CONFIG, "'datasets' must be an array");
    }
    for (const auto& d : j["datasets"]) {
      DatasetConfig dc;
      dc.path = detail::resolve(base_dir, d.at("path").get<std::string>());
      dc.name = d.value("name", dc.path.stem().string());
      dc.format = detail::parse_format(d.value("format", "jsonl"));
      if (d.contains("label_map")) {
        dc.label_map.clear();
        for (const auto& [raw, label] : d["label_map"].items()) {
          const auto parsed = parse_label_name(label.get<std::string>());
          if (!parsed) throw Error(ErrorCode::INVALID_CONFIG, "label_map value must be FAKE or REAL");
          dc.label_map[raw] = *parsed;
        }
      }
      c.datasets.push_back(std::move(dc));
    }
    c.rotation = j.value("rotation", true);
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j["variants"]) c.variants.push_back(parse_variant(v.get<std::string>()));
    }

    const auto& split = j["split"];
    c.split.train_fraction = split.value("train", c.split.train_fraction);
    c.split.val_fraction = split.value("val", c.split.val_fraction);
    c.split.test_fraction = split.value("test", c.split.test_fraction);

    const auto& sh = j["shapley"];
    c.shapley.exact_limit = sh.value("exact_limit", c.shapley.exact_limit);
    c.shapley.n_permutations = sh.value("n_permutations", c.shapley.n_permutations);
    c.shapley.sample_size = sh.value("sample_size", c.shapley.sample_size);

    if (j.contains("audit")) {
      const auto& a = j["audit"];
      c.audit.top_k = a.value("top_k", c.audit.top_k);
      if (a.contains("spurious")) {
        c.audit.spurious.clear();
        for (const auto& name : a["spurious"]) {
          const auto cat = parse_token_category(name.get<std::string>());
          if (!cat) throw Error(ErrorCode::INVALID_CONFIG, "unknown token category " + name.dump());
          c.audit.spurious.insert(*cat);
        }
      }
    }
    if (j.contains("entity")) {
      const auto& e = j["entity"];
      if (e.contains("gazetteer")) c.entity.gazetteer = detail::resolve(base_dir, e["gazetteer"].get<std::string>());
      if (e.contains("sidecar")) c.entity.sidecar = detail::resolve(base_dir, e["sidecar"].get<std::string>());
      if (e.contains("order")) c.entity.order = parse_stage_order(e["order"].get<std::string>());
    }
    if (j.contains("emoticons")) c.emoticons = detail::resolve(base_dir, j["emoticons"].get<std::string>());
    if (j.contains("stopwords")) c.stopwords = detail::resolve(base_dir, j["stopwords"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::INVALID_CONFIG, e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::INVALID_CONFIG, path.filename().string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

// Canonical form; hashing it identifies the experiment.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& d : c.datasets) {
    nlohmann::ordered_json dj;
    dj["name"] = d.name;
    dj["path"] = d.path.generic_string();
    dj["format"] = d.format == DataFormat::JSONL ? "jsonl" : "csv";
    dj["label_map"] = nlohmann::ordered_json::object();
    for (const auto& [raw, label] : d.label_map) dj["label_map"][raw] = label_name(label);
    j["datasets"].push_back(dj);
  }
  j["rotation"] = c.rotation;
  j["variants"] = nlohmann::ordered_json::array();
  for (auto v : c.variants) j["variants"].push_back(variant_name(v));
  j["split"] = {{"train", c.split.train_fraction},
                {"val", c.split.val_fraction},
                {"test", c.split.test_fraction},
                {"seed", c.split.seed}};
  j["train"] = to_json(c.train);
  j["shapley"] = {{"exact_limit", c.shapley.exact_limit},
                  {"n_permutations", c.shapley.n_permutations},
                  {"sample_size", c.shapley.sample_size},
                  {"seed", c.shapley.seed}};
  j["audit"]["top_k"] = c.audit.top_k;
  j["audit"]["spurious"] = nlohmann::ordered_json::array();
  for (auto cat : c.audit.spurious) j["audit"]["spurious"].push_back(token_category_name(cat));
  j["entity"]["order"] = stage_order_name(c.entity.order);
  if (c.entity.gazetteer) j["entity"]["gazetteer"] = c.entity.gazetteer->generic_string();
  if (c.entity.sidecar) j["entity"]["sidecar"] = c.entity.sidecar->generic_string();
  if (c.emoticons) j["emoticons"] = c.emoticons->generic_string();
  if (c.stopwords) j["stopwords"] = c.stopwords->generic_string();
  return j;
}

// ---------------------------------------------------------------------------
// Results

struct CellResult {
  std::string train_dataset;
  std::string eval_dataset;
  PipelineVariant variant = PipelineVariant::BASELINE;
  bool internal = false;
  MetricsCell metrics;
  std::string transform_hash;
};

struct ExperimentResults {
  std::vector<std::string> datasets;
  std::vector<std::string> train_datasets;
  std::vector<PipelineVariant> variants;
  std::vector<CellResult> cells;  // train order x variant order x eval order
  // (train, eval) -> improvement of the full methodology over BASELINE, external pairs only
  std::map<std::pair<std::string, std::string>, double> improvements;
  std::map<std::string, double> internal_improvements;
  std::map<std::string, double> external_averages;
  std::optional<double> overall_average;
  std::vector<std::string> notes;

  const CellResult* find(std::string_view train, std::string_view eval, PipelineVariant v) const {
    for (const auto& c : cells) {
      if (c.train_dataset == train && c.eval_dataset == eval && c.variant == v) return &c;
    }
    return nullptr;
  }

  bool empty() const { return cells.empty(); }
};

// Fills improvements and averages from the cells. Pairs whose BASELINE
// Macro-F1 is zero are skipped with a note.
inline void compute_improvements(ExperimentResults& r) {
  r.improvements.clear();
  r.internal_improvements.clear();
  r.external_averages.clear();
  r.overall_average.reset();
  const auto has = [&](PipelineVariant v) { return std::find(r.variants.begin(), r.variants.end(), v) != r.variants.end(); };
  if (!has(PipelineVariant::BASELINE) || !has(PipelineVariant::EXTENDED_PREP_PLUS_NER)) return;
  std::vector<double> averages;
  for (const auto& train : r.train_datasets) {
    std::vector<double> row;
    for (const auto& eval : r.datasets) {
      const auto* before = r.find(train, eval, PipelineVariant::BASELINE);
      const auto* after = r.find(train, eval, PipelineVariant::EXTENDED_PREP_PLUS_NER);
      if (!before || !after) continue;
      const double b = before->metrics.macro_f1 * 100.0;
      const double a = after->metrics.macro_f1 * 100.0;
      if (!(b > 0.0)) {
        r.notes.push_back(fmt::format("{} -> {}: baseline Macro-F1 is 0, improvement undefined", train, eval));
        continue;
      }
      const double imp = improvement_percent(b, a);
      if (before->internal) {
        r.internal_improvements[train] = imp;
      } else {
        r.improvements[{train, eval}] = imp;
        row.push_back(imp);
      }
    }
    if (!row.empty()) {
      r.external_averages[train] = arithmetic_mean(row);
      averages.push_back(r.external_averages[train]);
    }
  }
  if (!averages.empty()) r.overall_average = arithmetic_mean(averages);
}

inline nlohmann::ordered_json to_json(const MetricsCell& m) {
  nlohmann::ordered_json j;
  j["macro_f1"] = m.macro_f1;
  j["n_eval"] = m.n_eval;
  for (Label c : kLabels) {
    const auto& pc = m.per_class.at(c);
    j["per_class"][std::string(label_token(c))] = {
        {"precision", pc.precision}, {"recall", pc.recall}, {"f1", pc.f1}, {"support", pc.support}};
  }
  return j;
}

inline nlohmann::ordered_json to_json(const ExperimentResults& r) {
  nlohmann::ordered_json j;
  j["datasets"] = r.datasets;
  j["train_datasets"] = r.train_datasets;
  j["variants"] = nlohmann::ordered_json::array();
  for (auto v : r.variants) j["variants"].push_back(variant_name(v));
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    nlohmann::ordered_json cj;
    cj["train"] = c.train_dataset;
    cj["eval"] = c.eval_dataset;
    cj["variant"] = variant_name(c.variant);
    cj["role"] = c.internal ? "internal" : "external";
    cj["transform_hash"] = c.transform_hash;
    cj["metrics"] = to_json(c.metrics);
    j["cells"].push_back(cj);
  }
  j["improvements"] = nlohmann::ordered_json::array();
  for (const auto& [key, v] : r.improvements) {
    j["improvements"].push_back({{"train", key.first}, {"eval", key.second}, {"percent", v}});
  }
  j["internal_improvements"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.internal_improvements) j["internal_improvements"][k] = v;
  j["external_averages"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.external_averages) j["external_averages"][k] = v;
  j["overall_average"] = r.overall_average ? nlohmann::ordered_json(*r.overall_average) : nlohmann::ordered_json();
  j["notes"] = r.notes;
  return j;
}

inline ExperimentResults experiment_results_from_json(const nlohmann::json& j) {
  ExperimentResults r;
  try {
    r.datasets = j.at("datasets").get<std::vector<std::string>>();
    r.train_datasets = j.at("train_datasets").get<std::vector<std::string>>();
    for (const auto& v : j.at("variants")) r.variants.push_back(parse_variant(v.get<std::string>()));
    for (const auto& cj : j.at("cells")) {
      CellResult c;
      c.train_dataset = cj.at("train").get<std::string>();
      c.eval_dataset = cj.at("eval").get<std::string>();
      c.variant = parse_variant(cj.at("variant").get<std::string>());
      c.internal = cj.at("role").get<std::string>() == "internal";
      c.transform_hash = cj.value("transform_hash", "");
      const auto& m = cj.at("metrics");
      c.metrics.macro_f1 = m.at("macro_f1").get<double>();
      c.metrics.n_eval = m.at("n_eval").get<std::size_t>();
      for (Label l : kLabels) {
        const auto& pc = m.at("per_class").at(std::string(label_token(l)));
        c.metrics.per_class[l] = {pc.at("precision").get<double>(), pc.at("recall").get<double>(),
                                  pc.at("f1").get<double>(), pc.at("support").get<std::size_t>()};
      }
      r.cells.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::INVALID_CONFIG, std::string("results: ") + e.what());
  }
  compute_improvements(r);
  return r;
}

// Explanations, global importance and audit for one (train dataset, variant).
struct CellArtifacts {
  std::string train_dataset;
  PipelineVariant variant = PipelineVariant::BASELINE;
  std::vector<Explanation> explanations;
  std::vector<Label> gold;  // gold label per explanation
  GlobalImportance global_mean;
  GlobalImportance global_sum;
  AuditReport audit;
};

struct ExperimentRun {
  ExperimentConfig config;
  ExperimentResults results;
  std::vector<CellArtifacts> artifacts;
  std::vector<std::pair<std::string, double>> timings;  // label -> seconds

  const CellArtifacts* artifact(std::string_view train, PipelineVariant v) const {
    for (const auto& a : artifacts) {
      if (a.train_dataset == train && a.variant == v) return &a;
    }
    return nullptr;
  }
};

struct RunOptions {
  std::size_t threads = 1;
  bool explain = true;
  std::function<void(std::string_view)> log;  // progress messages
};

// Hash of the canonical config, for manifests.
inline std::string config_hash(const ExperimentConfig& c) {
  return detail::Fnv1a().update(to_json(c).dump()).hex();
}

// ---------------------------------------------------------------------------
// Rotation

// Each dataset in turn (only the first when rotation is off) is split and
// used for training; every variant's transform is applied identically to its
// splits and to all other datasets, which are evaluated in full.
ExperimentRun run_rotation(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace debias
