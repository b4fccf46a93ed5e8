#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/corpus.hpp"
#include "debias/detail/random.hpp"
#include "debias/detail/utf8.hpp"
#include "debias/error.hpp"
#include "debias/textprep.hpp"

namespace debias {

// Case folding that leaves the closed placeholder set ($URL$, $PER$, ...)
// intact, so "$URL$" is one feature whatever the lowercase setting.
inline std::string normalize_term(std::string_view surface, bool lowercase = true) {
  if (!lowercase || is_special_token(surface)) return std::string(surface);
  return detail::to_lower_utf8(surface);
}

// Classifier view of a text: tokenize() surfaces, case-folded.
inline std::vector<std::string> document_terms(std::string_view text, bool lowercase = true) {
  auto seq = tokenize(text);
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (auto& t : seq.tokens) out.push_back(normalize_term(t.surface, lowercase));
  return out;
}

namespace detail {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

inline double sigmoid(double m) {
  if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

inline bool needs_folding(std::string_view s) {
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if ((u >= 'A' && u <= 'Z') || u >= 0x80) return true;
  }
  return false;
}

// -log p(y | m) for y in {0,1}, stable for large |m|.
inline double logistic_loss(double m, double y) {
  return std::log1p(std::exp(-std::abs(m))) + std::max(m, 0.0) - y * m;
}

}  // namespace detail

class Vocabulary {
 public:
  Vocabulary() = default;

  // Terms are indexed in lexicographic order; `doc_freq[i]` counts training
  // documents containing term i.
  Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> doc_freq, std::size_t total_docs)
      : terms_(std::move(terms)), doc_freq_(std::move(doc_freq)), total_docs_(total_docs) {
    if (doc_freq_.size() != terms_.size()) {
      throw Error(ErrorCode::MODEL_FORMAT, "vocabulary term/df length mismatch");
    }
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (doc_freq_[i] > total_docs_) throw Error(ErrorCode::MODEL_FORMAT, "df exceeds total_docs");
      if (!index_.emplace(terms_[i], i).second) {
        throw Error(ErrorCode::MODEL_FORMAT, "duplicate vocabulary term '" + terms_[i] + "'");
      }
    }
  }

  static Vocabulary build(const std::vector<std::vector<std::string>>& docs) {
    std::map<std::string, std::size_t> df;
    for (const auto& doc : docs) {
      std::vector<std::string_view> seen(doc.begin(), doc.end());
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      for (auto term : seen) ++df[std::string(term)];
    }
    std::vector<std::string> terms;
    std::vector<std::size_t> freq;
    terms.reserve(df.size());
    freq.reserve(df.size());
    for (auto& [term, count] : df) {
      terms.push_back(term);
      freq.push_back(count);
    }
    return Vocabulary(std::move(terms), std::move(freq), docs.size());
  }

  std::optional<std::size_t> find(std::string_view term) const {
    const auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return terms_.size(); }
  const std::string& term(std::size_t i) const { return terms_[i]; }
  const std::vector<std::string>& terms() const { return terms_; }
  std::size_t doc_freq(std::size_t i) const { return doc_freq_[i]; }
  std::size_t total_docs() const { return total_docs_; }

  // ln((1 + N) / (1 + df)) + 1
  double idf(std::size_t i) const {
    return std::log((1.0 + static_cast<double>(total_docs_)) / (1.0 + static_cast<double>(doc_freq_[i]))) + 1.0;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::size_t> doc_freq_;
  std::size_t total_docs_ = 0;
  std::unordered_map<std::string, std::size_t, detail::StringHash, std::equal_to<>> index_;
};

enum class FeatureMode { COUNTS, TFIDF };

constexpr std::string_view feature_mode_name(FeatureMode m) {
  return m == FeatureMode::COUNTS ? "counts" : "tfidf";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "counts") return FeatureMode::COUNTS;
  if (s == "tfidf") return FeatureMode::TFIDF;
  throw Error(ErrorCode::INVALID_CONFIG, "feature_mode must be counts or tfidf, got '" + std::string(s) + "'");
}

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 20;
  double l2_lambda = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool lowercase = true;
  FeatureMode feature_mode = FeatureMode::COUNTS;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorCode::INVALID_CONFIG, "learning_rate must be > 0");
    }
    if (epochs < 1) throw Error(ErrorCode::INVALID_CONFIG, "epochs must be >= 1");
    if (!(l2_lambda >= 0.0)) throw Error(ErrorCode::INVALID_CONFIG, "l2_lambda must be >= 0");
    if (batch_size < 1) throw Error(ErrorCode::INVALID_CONFIG, "batch_size must be >= 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  Vocabulary vocabulary;
  FeatureMode feature_mode = FeatureMode::COUNTS;
  TrainConfig train_config;
  double final_loss = 0.0;

  // Weight one occurrence of vocabulary term i adds to the margin.
  double occurrence_weight(std::size_t i) const {
    return feature_mode == FeatureMode::TFIDF ? weights[i] * vocabulary.idf(i) : weights[i];
  }

  // bias + sum of per-occurrence contributions; unknown terms add nothing.
  template <typename Terms>
  double margin(const Terms& terms) const {
    double m = bias;
    for (const auto& t : terms) {
      std::string_view view(t);
      std::optional<std::size_t> idx;
      if (train_config.lowercase && detail::needs_folding(view) && !is_special_token(view)) {
        idx = vocabulary.find(normalize_term(view));
      } else {
        idx = vocabulary.find(view);
      }
      if (idx) m += occurrence_weight(*idx);
    }
    return m;
  }
};

// P(FAKE) for a bag of terms.
template <typename Terms>
double score(const LinearModel& model, const Terms& terms) {
  return detail::sigmoid(model.margin(terms));
}

// FAKE iff p >= 0.5; an exact tie resolves to FAKE.
constexpr Label predict_from_score(double p_fake) { return p_fake >= 0.5 ? Label::FAKE : Label::REAL; }

template <typename Terms>
Label predict(const LinearModel& model, const Terms& terms) {
  return predict_from_score(score(model, terms));
}

// ---------------------------------------------------------------------------
// Training

using SparseRow = std::vector<std::pair<std::size_t, double>>;

// Mean logistic loss plus (lambda/2)*||w||^2; the bias is not penalized.
struct LogisticProblem {
  std::vector<SparseRow> rows;
  std::vector<double> targets;  // 1 = FAKE
  std::size_t dim = 0;
  double l2_lambda = 0.0;

  double objective(std::span<const double> w, double b) const {
    double loss = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) loss += detail::logistic_loss(row_margin(r, w, b), targets[r]);
    double reg = 0.0;
    for (double x : w) reg += x * x;
    return loss / static_cast<double>(rows.size()) + 0.5 * l2_lambda * reg;
  }

  // Full-data analytic gradient of objective().
  void gradient(std::span<const double> w, double b, std::span<double> grad_w, double& grad_b) const {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    grad_b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double residual = (detail::sigmoid(row_margin(r, w, b)) - targets[r]) * inv_n;
      for (const auto& [j, x] : rows[r]) grad_w[j] += residual * x;
      grad_b += residual;
    }
    for (std::size_t j = 0; j < dim; ++j) grad_w[j] += l2_lambda * w[j];
  }

  double row_margin(std::size_t r, std::span<const double> w, double b) const {
    double m = b;
    for (const auto& [j, x] : rows[r]) m += w[j] * x;
    return m;
  }
};

namespace detail {

inline SparseRow featurize(const std::vector<std::string>& terms, const Vocabulary& vocab, FeatureMode mode) {
  std::map<std::size_t, double> counts;
  for (const auto& t : terms) {
    if (const auto idx = vocab.find(t)) counts[*idx] += 1.0;
  }
  SparseRow row(counts.begin(), counts.end());
  if (mode == FeatureMode::TFIDF) {
    for (auto& [j, x] : row) x *= vocab.idf(j);
  }
  return row;
}

}  // namespace detail

// L2-regularized logistic regression by seeded mini-batch gradient descent.
// The L2 term is applied as a proximal shrink w <- (w - lr*g) / (1 + lr*lambda),
// which has the same fixed point as the plain penalized step and stays
// stable for any lambda. Accumulation is single-threaded and ordered, so a
// fixed (data, config) reproduces the same weights bit for bit.
inline LinearModel fit(const Dataset& train, const TrainConfig& config) {
  config.validate();
  if (!train.has_both_classes()) {
    throw Error(ErrorCode::CLASS_TOO_SMALL, "training set '" + train.name + "' needs both classes");
  }
  std::vector<std::vector<std::string>> docs;
  docs.reserve(train.size());
  for (const auto& d : train.documents) docs.push_back(document_terms(d.text, config.lowercase));

  LinearModel model;
  model.vocabulary = Vocabulary::build(docs);
  model.feature_mode = config.feature_mode;
  model.train_config = config;
  const std::size_t dim = model.vocabulary.size();

  LogisticProblem problem;
  problem.dim = dim;
  problem.l2_lambda = config.l2_lambda;
  problem.rows.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    problem.rows.push_back(detail::featurize(docs[i], model.vocabulary, config.feature_mode));
    problem.targets.push_back(train.documents[i].label == Label::FAKE ? 1.0 : 0.0);
  }

  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  std::vector<double> grad(dim, 0.0);
  std::vector<std::size_t> order(problem.rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::Rng rng(config.seed);
  const double shrink = 1.0 / (1.0 + config.learning_rate * config.l2_lambda);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double grad_b = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto r = order[k];
        const double residual = (detail::sigmoid(problem.row_margin(r, w, b)) - problem.targets[r]) * inv;
        for (const auto& [j, x] : problem.rows[r]) grad[j] += residual * x;
        grad_b += residual;
      }
      for (std::size_t j = 0; j < dim; ++j) w[j] = (w[j] - config.learning_rate * grad[j]) * shrink;
      b -= config.learning_rate * grad_b;
    }
    const double loss = problem.objective(w, b);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::NON_FINITE_LOSS, "loss diverged at epoch " + std::to_string(epoch + 1) +
                                                  "; try a lower learning rate");
    }
    model.final_loss = loss;
  }
  model.weights = std::move(w);
  model.bias = b;
  return model;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["l2_lambda"] = c.l2_lambda;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["lowercase"] = c.lowercase;
  j["feature_mode"] = feature_mode_name(c.feature_mode);
  return j;
}

// Missing "seed" is rejected: every run must declare its seed.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.contains("seed")) throw Error(ErrorCode::MISSING_SEED, "train.seed is required");
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("l2_lambda")) c.l2_lambda = j["l2_lambda"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("lowercase")) c.lowercase = j["lowercase"].get<bool>();
    if (j.contains("feature_mode")) c.feature_mode = parse_feature_mode(j["feature_mode"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::INVALID_CONFIG, std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

inline void save_model(const LinearModel& model, std::ostream& out) {
  nlohmann::ordered_json j;
  j["format"] = "debias-linear-model";
  j["format_version"] = kModelFormatVersion;
  j["feature_mode"] = feature_mode_name(model.feature_mode);
  j["bias"] = model.bias;
  j["final_loss"] = model.final_loss;
  j["total_docs"] = model.vocabulary.total_docs();
  j["train_config"] = to_json(model.train_config);
  auto terms = nlohmann::ordered_json::array();
  auto df = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < model.vocabulary.size(); ++i) {
    terms.push_back(model.vocabulary.term(i));
    df.push_back(model.vocabulary.doc_freq(i));
  }
  j["terms"] = std::move(terms);
  j["doc_freq"] = std::move(df);
  j["weights"] = model.weights;
  out << j.dump() << '\n';
}

inline void save_model(const LinearModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path.string());
  save_model(model, out);
}

inline LinearModel load_model(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MODEL_FORMAT, e.what());
  }
  if (!j.is_object() || j.value("format", "") != "debias-linear-model") {
    throw Error(ErrorCode::MODEL_FORMAT, "not a debias model file");
  }
  const int version = j.value("format_version", -1);
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::MODEL_FORMAT, "model format version " + std::to_string(version) +
                                              " unsupported (expected " +
                                              std::to_string(kModelFormatVersion) + ")");
  }
  LinearModel m;
  try {
    m.feature_mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
    m.bias = j.at("bias").get<double>();
    m.final_loss = j.at("final_loss").get<double>();
    m.train_config = train_config_from_json(j.at("train_config"));
    m.vocabulary = Vocabulary(j.at("terms").get<std::vector<std::string>>(),
                              j.at("doc_freq").get<std::vector<std::size_t>>(),
                              j.at("total_docs").get<std::size_t>());
    m.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MODEL_FORMAT, e.what());
  }
  if (m.weights.size() != m.vocabulary.size()) {
    throw Error(ErrorCode::MODEL_FORMAT, "weights/vocabulary length mismatch");
  }
  for (double w : m.weights) {
    if (!std::isfinite(w)) throw Error(ErrorCode::MODEL_FORMAT, "non-finite weight");
  }
  return m;
}

inline LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path.string());
  return load_model(in);
}

// ---------------------------------------------------------------------------
// Scorer capability

// A pure function from a token list to P(FAKE).
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual double score(std::span<const std::string_view> tokens) const = 0;

  // Pre-link score, when the model has one.
  virtual std::optional<double> margin(std::span<const std::string_view>) const { return std::nullopt; }

  // Scores several token lists; implementations may pipeline requests.
  virtual std::vector<double> score_batch(const std::vector<std::vector<std::string_view>>& batch) const {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& tokens : batch) out.push_back(score(tokens));
    return out;
  }

  double score(const std::vector<std::string>& tokens) const {
    std::vector<std::string_view> views(tokens.begin(), tokens.end());
    return score(std::span<const std::string_view>(views));
  }
};

class LinearScorer final : public Scorer {
 public:
  explicit LinearScorer(const LinearModel& model) : model_(&model) {}

  double score(std::span<const std::string_view> tokens) const override {
    return detail::sigmoid(model_->margin(tokens));
  }
  std::optional<double> margin(std::span<const std::string_view> tokens) const override {
    return model_->margin(tokens);
  }
  using Scorer::score;

 private:
  const LinearModel* model_;
};

// Adapts any callable over a token list.
class FunctionScorer final : public Scorer {
 public:
  using Fn = std::function<double(std::span<const std::string_view>)>;
  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}

  double score(std::span<const std::string_view> tokens) const override { return fn_(tokens); }
  using Scorer::score;

 private:
  Fn fn_;
};

}  // namespace debias
