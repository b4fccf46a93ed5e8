#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "debias/audit.hpp"
#include "debias/classifier.hpp"
#include "debias/corpus.hpp"
#include "debias/detail/parallel.hpp"
#include "debias/entity.hpp"
#include "debias/error.hpp"
#include "debias/external_scorer.hpp"
#include "debias/harness.hpp"
#include "debias/report.hpp"
#include "debias/shapley.hpp"
#include "debias/textprep.hpp"

namespace debias::cli {
namespace {

namespace fs = std::filesystem;

// Usage problems found after parsing (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const CLI::Validator kExistingOrStdin(
    [](std::string& s) -> std::string {
      if (s == "-" || fs::is_regular_file(s)) return {};
      return "file does not exist: " + s;
    },
    "FILE|-", "ExistingFileOrStdin");

// Opened input: a file or the process's stdin.
class Input {
 public:
  Input(const std::string& path, std::istream& stdin_stream) {
    if (path == "-") {
      stream_ = &stdin_stream;
      return;
    }
    file_.open(path, std::ios::binary);
    if (!file_) throw Error(ErrorCode::IO_ERROR, "cannot open " + path);
    stream_ = &file_;
  }
  std::istream& get() { return *stream_; }

 private:
  std::ifstream file_;
  std::istream* stream_ = nullptr;
};

class Output {
 public:
  Output(const std::string& path, std::ostream& stdout_stream) {
    if (path == "-") {
      stream_ = &stdout_stream;
      return;
    }
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    file_.open(path, std::ios::binary);
    if (!file_) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
    stream_ = &file_;
  }
  std::ostream& get() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) throw Error(ErrorCode::IO_ERROR, "write failed");
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("debias", sink);
  logger->set_pattern("[%l] %v");
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("DEBIAS_AUDIT_LOG")) {
    const std::string v(env);
    if (v == "debug") level = spdlog::level::debug;
    else if (v == "info") level = spdlog::level::info;
    else if (v == "warn") level = spdlog::level::warn;
  }
  logger->set_level(level);
  return logger;
}

DataFormat format_for(const std::string& path, const std::string& flag) {
  if (flag == "jsonl") return DataFormat::JSONL;
  if (flag == "csv") return DataFormat::CSV;
  return fs::path(path).extension() == ".csv" ? DataFormat::CSV : DataFormat::JSONL;
}

// "raw=LABEL" pairs added on top of the default fake/real mapping.
LabelMap label_map_from(const std::vector<std::string>& pairs) {
  auto map = default_label_map();
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    const auto label = eq == std::string::npos ? std::nullopt : parse_label_name(p.substr(eq + 1));
    if (!label) throw UsageError("--label-map expects RAW=FAKE or RAW=REAL, got '" + p + "'");
    map[p.substr(0, eq)] = *label;
  }
  return map;
}

Dataset read_dataset(const std::string& path, const std::string& format, const LabelMap& labels, std::istream& in,
                     bool allow_empty = false) {
  Input input(path, in);
  const LoadOptions opts{allow_empty};
  const auto name = path == "-" ? std::string("stdin") : fs::path(path).stem().string();
  return format_for(path, format) == DataFormat::CSV ? read_csv_dataset(input.get(), labels, name, opts)
                                                     : read_jsonl_dataset(input.get(), labels, name, opts);
}

// Rewrites the "text" field of every JSONL record, leaving other fields as they are.
template <typename Fn>
void rewrite_text_stream(std::istream& in, std::ostream& out, Fn&& rewrite) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::MALFORMED_RECORD, fmt::format("line {}: not valid JSON", lineno));
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw Error(ErrorCode::MALFORMED_RECORD, fmt::format("line {}: missing string field 'text'", lineno));
    }
    j["text"] = rewrite(j, j["text"].get<std::string>());
    out << j.dump() << '\n';
  }
}

std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream ss(cmd);
  std::vector<std::string> parts;
  for (std::string p; ss >> p;) parts.push_back(p);
  if (parts.empty()) throw UsageError("--scorer-cmd is empty");
  return parts;
}

// A model file or an external scorer process.
struct ScorerHandle {
  std::optional<LinearModel> model;
  std::unique_ptr<LinearScorer> linear;
  std::unique_ptr<ExternalScorer> external;

  const Scorer& get() const {
    if (linear) return *linear;
    return *external;
  }
};

std::unique_ptr<ScorerHandle> open_scorer(const std::string& model_path, const std::string& scorer_cmd,
                                          double timeout_s) {
  auto h = std::make_unique<ScorerHandle>();
  if (!model_path.empty()) {
    h->model = load_model(model_path);
    h->linear = std::make_unique<LinearScorer>(*h->model);
  } else {
    h->external = open_external_scorer(split_command(scorer_cmd),
                                       std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000)));
  }
  return h;
}

struct DocRecord {
  std::string id;
  std::string text;
};

std::vector<DocRecord> read_doc_records(std::istream& in) {
  std::vector<DocRecord> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::MALFORMED_RECORD, fmt::format("line {}: not valid JSON", lineno));
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw Error(ErrorCode::MALFORMED_RECORD, fmt::format("line {}: missing string field 'text'", lineno));
    }
    DocRecord d;
    d.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(lineno);
    d.text = j["text"].get<std::string>();
    docs.push_back(std::move(d));
  }
  return docs;
}

std::set<TokenCategory> parse_categories(const std::vector<std::string>& names) {
  std::set<TokenCategory> out;
  for (const auto& n : names) {
    const auto c = parse_token_category(n);
    if (!c) throw UsageError("--spurious: unknown category '" + n + "'");
    out.insert(*c);
  }
  return out;
}

const std::vector<std::string> kCategoryNames = [] {
  std::vector<std::string> v;
  for (auto c : kAllTokenCategories) v.emplace_back(token_category_name(c));
  return v;
}();

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  auto log = make_logger(err);

  CLI::App app{"Spurious-feature audit and debiasing toolkit for short-text classifiers.", "debias-audit"};
  app.require_subcommand(1, 1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", std::string(kToolkitVersion));
  std::size_t threads = detail::default_thread_count();
  const auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads,
                    "Worker threads for document-level parallel work (default: available parallelism)")
        ->check(CLI::PositiveNumber);
  };

  // ingest
  std::string ingest_in, ingest_out = "-", ingest_format = "auto", ingest_split_dir;
  std::vector<std::string> ingest_labels;
  std::optional<std::uint64_t> ingest_seed;
  bool ingest_allow_empty = false;
  double split_train = 0.70, split_val = 0.15, split_test = 0.15;
  auto* ingest = app.add_subcommand("ingest", "Validate a labeled corpus and write it as JSONL, optionally split");
  ingest->add_option("--in", ingest_in, "Input corpus (JSONL or CSV with id,text,label; - for stdin)")
      ->required()
      ->check(kExistingOrStdin);
  ingest->add_option("--out", ingest_out, "Normalized JSONL output (- for stdout)")->capture_default_str();
  ingest->add_option("--format", ingest_format, "Input format")
      ->check(CLI::IsMember({"auto", "jsonl", "csv"}))
      ->capture_default_str();
  ingest->add_option("--label-map", ingest_labels, "Extra RAW=FAKE|REAL label mappings");
  ingest->add_flag("--allow-empty", ingest_allow_empty, "Accept documents with empty text");
  ingest->add_option("--split-dir", ingest_split_dir, "Also write stratified train/val/test JSONL here");
  ingest->add_option("--train-fraction", split_train, "Train fraction for --split-dir")->capture_default_str();
  ingest->add_option("--val-fraction", split_val, "Validation fraction for --split-dir")->capture_default_str();
  ingest->add_option("--test-fraction", split_test, "Test fraction for --split-dir")->capture_default_str();
  ingest->add_option("--seed", ingest_seed, "Split seed (required with --split-dir)");

  // prep
  std::string prep_mode, prep_in = "-", prep_out = "-", prep_emoticons;
  auto* prep = app.add_subcommand("prep", "Rewrite the text field of a JSONL stream with a preprocessing mode");
  prep->add_option("--mode", prep_mode, "Preprocessing mode")
      ->required()
      ->check(CLI::IsMember({"baseline", "extended"}));
  prep->add_option("--in", prep_in, "Input JSONL (- for stdin)")->check(kExistingOrStdin)->capture_default_str();
  prep->add_option("--out", prep_out, "Output JSONL (- for stdout)")->capture_default_str();
  prep->add_option("--emoticons", prep_emoticons, "Emoticon list for extended mode")->check(CLI::ExistingFile);

  // ner
  std::string ner_in = "-", ner_out = "-", ner_gazetteer, ner_sidecar;
  auto* ner = app.add_subcommand("ner", "Replace named entities in a JSONL stream with $PER$/$ORG$/$LOC$/$MISC$");
  ner->add_option("--in", ner_in, "Input JSONL (- for stdin)")->check(kExistingOrStdin)->capture_default_str();
  ner->add_option("--out", ner_out, "Output JSONL (- for stdout)")->capture_default_str();
  ner->add_option("--gazetteer", ner_gazetteer, "Gazetteer TSV (default: shipped)")->check(CLI::ExistingFile);
  ner->add_option("--sidecar", ner_sidecar, "Precomputed entity spans per document id (JSONL)")
      ->check(CLI::ExistingFile);

  // train
  std::string train_in, train_out, train_format = "auto";
  std::vector<std::string> train_labels;
  std::optional<std::uint64_t> train_seed;
  TrainConfig tc;
  std::string feature_mode = "counts";
  bool no_lowercase = false;
  auto* train = app.add_subcommand("train", "Fit the logistic-regression classifier on a labeled corpus");
  train->add_option("--train", train_in, "Training corpus (JSONL or CSV)")->required()->check(kExistingOrStdin);
  train->add_option("--out", train_out, "Model file to write")->required();
  train->add_option("--format", train_format, "Input format")
      ->check(CLI::IsMember({"auto", "jsonl", "csv"}))
      ->capture_default_str();
  train->add_option("--label-map", train_labels, "Extra RAW=FAKE|REAL label mappings");
  train->add_option("--seed", train_seed, "Shuffling seed")->required();
  train->add_option("--learning-rate", tc.learning_rate, "Gradient step size")->capture_default_str();
  train->add_option("--epochs", tc.epochs, "Passes over the data")->capture_default_str();
  train->add_option("--l2", tc.l2_lambda, "L2 penalty on weights")->capture_default_str();
  train->add_option("--batch-size", tc.batch_size, "Mini-batch size")->capture_default_str();
  train->add_option("--feature-mode", feature_mode, "Term weighting")
      ->check(CLI::IsMember({"counts", "tfidf"}))
      ->capture_default_str();
  train->add_flag("--no-lowercase", no_lowercase, "Keep term case");

  // score
  std::string score_model, score_cmd, score_in = "-", score_out = "-";
  double score_timeout = 30.0;
  auto* score_cmd_app = app.add_subcommand("score", "Score a JSONL stream, emitting id, p_fake and prediction");
  auto* score_model_opt =
      score_cmd_app->add_option("--model", score_model, "Model file from 'train'")->check(CLI::ExistingFile);
  auto* score_ext_opt = score_cmd_app->add_option("--scorer-cmd", score_cmd, "External scorer command line");
  score_model_opt->excludes(score_ext_opt);
  score_cmd_app->add_option("--in", score_in, "Input JSONL (- for stdin)")
      ->check(kExistingOrStdin)
      ->capture_default_str();
  score_cmd_app->add_option("--out", score_out, "Output JSONL (- for stdout)")->capture_default_str();
  score_cmd_app->add_option("--timeout", score_timeout, "External scorer reply timeout in seconds")
      ->capture_default_str();

  // explain
  std::string explain_model, explain_cmd, explain_in = "-", explain_out = "-";
  std::size_t exact_limit = kDefaultExactLimit, n_perm = 200;
  std::optional<std::uint64_t> explain_seed;
  double explain_timeout = 30.0;
  auto* explain_app = app.add_subcommand("explain", "Shapley attributions of P(FAKE) for every token occurrence");
  auto* explain_model_opt =
      explain_app->add_option("--model", explain_model, "Model file from 'train'")->check(CLI::ExistingFile);
  auto* explain_ext_opt = explain_app->add_option("--scorer-cmd", explain_cmd, "External scorer command line");
  explain_model_opt->excludes(explain_ext_opt);
  explain_app->add_option("--in", explain_in, "Input JSONL with id and text (- for stdin)")
      ->check(kExistingOrStdin)
      ->capture_default_str();
  explain_app->add_option("--out", explain_out, "Explanations JSONL (- for stdout)")->capture_default_str();
  explain_app->add_option("--exact-limit", exact_limit, "Largest token count explained exactly")
      ->check(CLI::Range(std::size_t{0}, kMaxExactLimit))
      ->capture_default_str();
  explain_app->add_option("--permutations", n_perm, "Permutations for longer documents (even)")
      ->capture_default_str();
  explain_app->add_option("--seed", explain_seed, "Sampling seed (required when any document exceeds the limit)");
  explain_app->add_option("--timeout", explain_timeout, "External scorer reply timeout in seconds")
      ->capture_default_str();
  add_threads(explain_app);

  // global
  std::string global_in = "-", global_out = "-", global_mode = "sum";
  auto* global = app.add_subcommand("global", "Aggregate explanations into per-token global importance (CSV)");
  global->add_option("--in", global_in, "Explanations JSONL (- for stdin)")
      ->check(kExistingOrStdin)
      ->capture_default_str();
  global->add_option("--out", global_out, "CSV output (- for stdout)")->capture_default_str();
  global->add_option("--mode", global_mode, "Ranking statistic")
      ->check(CLI::IsMember({"mean", "sum"}))
      ->capture_default_str();

  // audit
  std::string audit_in = "-", audit_out = "-", audit_md, audit_gazetteer, audit_stopwords, audit_emoticons;
  std::size_t top_k = kDefaultTopK;
  std::vector<std::string> spurious_names;
  auto* audit = app.add_subcommand("audit", "Categorize top tokens and flag spurious features");
  audit->add_option("--in", audit_in, "Global importance CSV (- for stdin)")
      ->check(kExistingOrStdin)
      ->capture_default_str();
  audit->add_option("--out", audit_out, "Audit report JSON (- for stdout)")->capture_default_str();
  audit->add_option("--markdown", audit_md, "Also write a markdown table here");
  audit->add_option("--top-k", top_k, "Tokens inspected, by sum |phi|")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  audit->add_option("--spurious", spurious_names, "Categories counted as spurious (default: artifacts + entities)")
      ->check(CLI::IsMember(kCategoryNames))
      ->delimiter(',');
  audit->add_option("--gazetteer", audit_gazetteer, "Gazetteer TSV (default: shipped)")->check(CLI::ExistingFile);
  audit->add_option("--stopwords", audit_stopwords, "Stopword list (default: shipped)")->check(CLI::ExistingFile);
  audit->add_option("--emoticons", audit_emoticons, "Emoticon list (default: shipped)")->check(CLI::ExistingFile);

  // experiment
  std::string exp_config, exp_out;
  bool no_explain = false;
  auto* experiment = app.add_subcommand("experiment", "Run the internal/external rotation and write the report");
  experiment->add_option("--config", exp_config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  experiment->add_option("--out", exp_out, "Report directory")->required();
  experiment->add_flag("--no-explain", no_explain, "Skip explanations, global importance and audit");
  add_threads(experiment);

  // report
  std::string report_results, report_out;
  auto* report = app.add_subcommand("report", "Re-render improvement tables from a results.json");
  report->add_option("--results", report_results, "results.json from 'experiment'")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Report directory")->required();

  // gen-synthetic
  std::string gen_spec, gen_out;
  std::optional<std::uint64_t> gen_seed;
  ConfoundSpec cs;
  std::vector<std::string> gen_entities;
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a confounded two-domain synthetic corpus");
  gen->add_option("--spec", gen_spec, "ConfoundSpec JSON (overrides the inline flags)")->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--vocab-size", cs.vocab_size, "Synthetic vocabulary size")->capture_default_str();
  gen->add_option("--docs-per-class", cs.docs_per_class, "Documents per class per domain")->capture_default_str();
  gen->add_option("--signal-strength", cs.signal_strength, "Per-slot probability of a class keyword")
      ->capture_default_str();
  gen->add_option("--url-rate", cs.confound_url_rate, "Share of domain-A FAKE documents given a URL")
      ->capture_default_str();
  gen->add_option("--entity", gen_entities, "Confounded entity as NAME=fake:RATE or NAME=real:RATE");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (ingest->parsed()) {
      if (!ingest_split_dir.empty() && !ingest_seed) throw UsageError("--seed is required with --split-dir");
      const auto ds = read_dataset(ingest_in, ingest_format, label_map_from(ingest_labels), in, ingest_allow_empty);
      Output o(ingest_out, out);
      write_jsonl(ds, o.get());
      o.finish();
      log->info("{}: {} documents ({} fake, {} real)", ds.name, ds.size(), ds.count(Label::FAKE),
                ds.count(Label::REAL));
      if (!ingest_split_dir.empty()) {
        SplitSpec spec{split_train, split_val, split_test, *ingest_seed};
        const auto s = stratified_split(ds, spec);
        fs::create_directories(ingest_split_dir);
        write_jsonl(s.train, fs::path(ingest_split_dir) / "train.jsonl");
        write_jsonl(s.val, fs::path(ingest_split_dir) / "val.jsonl");
        write_jsonl(s.test, fs::path(ingest_split_dir) / "test.jsonl");
      }
    } else if (prep->parsed()) {
      const auto lexicon = prep_emoticons.empty() ? EmoticonLexicon::shipped() : EmoticonLexicon::load(prep_emoticons);
      Input i(prep_in, in);
      Output o(prep_out, out);
      const bool extended = prep_mode == "extended";
      rewrite_text_stream(i.get(), o.get(), [&](const auto&, const std::string& text) {
        return extended ? extended_clean(text, lexicon) : baseline_normalize(text);
      });
      o.finish();
    } else if (ner->parsed()) {
      const auto gazetteer = ner_gazetteer.empty() ? Gazetteer::shipped() : Gazetteer::load(ner_gazetteer);
      std::optional<SidecarAnnotations> sidecar;
      if (!ner_sidecar.empty()) sidecar = load_sidecar_annotations(ner_sidecar);
      Input i(ner_in, in);
      Output o(ner_out, out);
      rewrite_text_stream(i.get(), o.get(), [&](const nlohmann::ordered_json& j, const std::string& text) {
        const std::vector<EntitySpan>* spans = nullptr;
        if (sidecar && j.contains("id") && j["id"].is_string()) {
          if (const auto it = sidecar->find(j["id"].get<std::string>()); it != sidecar->end()) spans = &it->second;
        }
        return anonymize_entities(text, gazetteer, spans);
      });
      o.finish();
    } else if (train->parsed()) {
      tc.seed = *train_seed;
      tc.lowercase = !no_lowercase;
      tc.feature_mode = parse_feature_mode(feature_mode);
      tc.validate();
      const auto ds = read_dataset(train_in, train_format, label_map_from(train_labels), in);
      const auto model = fit(ds, tc);
      save_model(model, fs::path(train_out));
      log->info("trained on {} documents, vocabulary {}, final loss {:.6f}", ds.size(), model.vocabulary.size(),
                model.final_loss);
    } else if (score_cmd_app->parsed()) {
      if (score_model.empty() == score_cmd.empty()) throw UsageError("exactly one of --model or --scorer-cmd is required");
      const auto scorer = open_scorer(score_model, score_cmd, score_timeout);
      Input i(score_in, in);
      Output o(score_out, out);
      const auto docs = read_doc_records(i.get());
      constexpr std::size_t kChunk = 256;
      for (std::size_t start = 0; start < docs.size(); start += kChunk) {
        const auto end = std::min(docs.size(), start + kChunk);
        std::vector<std::vector<std::string>> owned;
        for (std::size_t k = start; k < end; ++k) {
          owned.push_back(scorer->model ? document_terms(docs[k].text, scorer->model->train_config.lowercase)
                                        : tokenize(docs[k].text).surfaces());
        }
        std::vector<std::vector<std::string_view>> batch;
        for (const auto& t : owned) batch.emplace_back(t.begin(), t.end());
        const auto scores = scorer->get().score_batch(batch);
        for (std::size_t k = start; k < end; ++k) {
          nlohmann::ordered_json j;
          j["id"] = docs[k].id;
          j["p_fake"] = scores[k - start];
          j["prediction"] = label_token(predict_from_score(scores[k - start]));
          o.get() << j.dump() << '\n';
        }
      }
      o.finish();
    } else if (explain_app->parsed()) {
      if (explain_model.empty() == explain_cmd.empty()) {
        throw UsageError("exactly one of --model or --scorer-cmd is required");
      }
      if (n_perm < 2 || n_perm % 2 != 0) throw UsageError("--permutations must be even and >= 2");
      Input i(explain_in, in);
      const auto docs = read_doc_records(i.get());
      std::vector<std::vector<std::string>> tokens;
      bool needs_sampling = false;
      for (const auto& d : docs) {
        tokens.push_back(tokenize(d.text).surfaces());
        needs_sampling = needs_sampling || tokens.back().size() > exact_limit;
      }
      if (needs_sampling && !explain_seed) {
        throw UsageError(fmt::format("--seed is required: some documents exceed --exact-limit {}", exact_limit));
      }
      if (exact_limit > kDefaultExactLimit) {
        log->warn("--exact-limit {} enumerates up to {} coalitions per document", exact_limit,
                  std::size_t{1} << exact_limit);
      }
      const auto scorer = open_scorer(explain_model, explain_cmd, explain_timeout);
      std::vector<Explanation> exps(docs.size());
      detail::parallel_for(docs.size(), threads, [&](std::size_t k) {
        exps[k] = explain(scorer->get(), tokens[k], exact_limit, n_perm,
                          detail::mix_seed(explain_seed.value_or(0), k), docs[k].id);
      });
      Output o(explain_out, out);
      write_explanations(exps, o.get());
      o.finish();
    } else if (global->parsed()) {
      Input i(global_in, in);
      const auto exps = read_explanations(i.get());
      const auto g = aggregate_global(exps, global_mode == "mean" ? AggregateMode::MEAN : AggregateMode::SUM);
      Output o(global_out, out);
      write_global_csv(g, o.get());
      o.finish();
    } else if (audit->parsed()) {
      const auto& shipped = AuditLexicons::shipped();
      AuditLexicons lex{audit_gazetteer.empty() ? shipped.gazetteer : Gazetteer::load(audit_gazetteer),
                        audit_emoticons.empty() ? shipped.emoticons : EmoticonLexicon::load(audit_emoticons),
                        audit_stopwords.empty() ? shipped.stopwords : AuditLexicons::load_stopwords(audit_stopwords)};
      Input i(audit_in, in);
      const auto g = read_global_csv(i.get(), AggregateMode::SUM);
      const auto spurious = spurious_names.empty() ? default_spurious_categories() : parse_categories(spurious_names);
      const auto report_data = flag_spurious(g, top_k, spurious, lex);
      Output o(audit_out, out);
      o.get() << to_json(report_data).dump(2) << '\n';
      o.finish();
      if (!audit_md.empty()) {
        Output md(audit_md, out);
        md.get() << render_audit_markdown(report_data);
        md.finish();
      }
    } else if (experiment->parsed()) {
      const auto config = load_experiment_config(exp_config);
      RunOptions opts;
      opts.threads = threads;
      opts.explain = !no_explain;
      opts.log = [&](std::string_view msg) { log->info("{}", msg); };
      const auto run_result = run_rotation(config, opts);
      const auto files = render_report(run_result, exp_out);
      log->info("wrote {} files under {}", files.size(), exp_out);
      if (run_result.results.overall_average) {
        out << fmt::format("overall average external improvement: {:.2f}%\n", *run_result.results.overall_average);
      }
    } else if (report->parsed()) {
      const auto files = render_report(load_results(report_results), report_out);
      log->info("wrote {} files under {}", files.size(), report_out);
    } else if (gen->parsed()) {
      ConfoundSpec spec = cs;
      if (!gen_spec.empty()) {
        std::ifstream f(gen_spec);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::parse_error& e) {
          throw Error(ErrorCode::INVALID_SPEC, e.what());
        }
        spec = confound_spec_from_json(j);
      } else {
        for (const auto& e : gen_entities) {
          const auto eq = e.find('=');
          const auto colon = e.rfind(':');
          if (eq == std::string::npos || colon == std::string::npos || colon < eq) {
            throw UsageError("--entity expects NAME=fake:RATE, got '" + e + "'");
          }
          const auto label = e.substr(eq + 1, colon - eq - 1);
          if (label != "fake" && label != "real") throw UsageError("--entity label must be fake or real");
          double rate = 0.0;
          try {
            rate = std::stod(e.substr(colon + 1));
          } catch (const std::exception&) {
            throw UsageError("--entity rate is not a number in '" + e + "'");
          }
          spec.confounded_entities[e.substr(0, eq)] = {label == "fake" ? Label::FAKE : Label::REAL, rate};
        }
        spec.validate();
      }
      const auto corpus = generate_confounded_corpus(spec, *gen_seed);
      write_synthetic_corpus(corpus, spec, *gen_seed, gen_out);
      log->info("wrote {} + {} documents to {}", corpus.domain_a.size(), corpus.domain_b.size(), gen_out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: IO_ERROR: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace debias::cli
