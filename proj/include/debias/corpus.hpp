#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/data_files.hpp"
#include "debias/detail/random.hpp"
#include "debias/detail/utf8.hpp"
#include "debias/error.hpp"

namespace debias {

enum class Label { FAKE, REAL };

inline constexpr std::array<Label, 2> kLabels = {Label::FAKE, Label::REAL};

constexpr std::string_view label_name(Label label) {
  return label == Label::FAKE ? "FAKE" : "REAL";
}

// Lowercase form written to JSONL/CSV outputs.
constexpr std::string_view label_token(Label label) {
  return label == Label::FAKE ? "fake" : "real";
}

inline std::optional<Label> parse_label_name(std::string_view s) {
  if (s == "FAKE") return Label::FAKE;
  if (s == "REAL") return Label::REAL;
  return std::nullopt;
}

using LabelMap = std::map<std::string, Label>;

// {"fake","real","FAKE","REAL"} -> labels; matches the writer's output.
inline LabelMap default_label_map() {
  return {{"fake", Label::FAKE}, {"real", Label::REAL}, {"FAKE", Label::FAKE}, {"REAL", Label::REAL}};
}

struct Document {
  std::string id;
  std::string text;
  Label label = Label::FAKE;

  bool operator==(const Document&) const = default;
};

enum class DatasetRole { INTERNAL, EXTERNAL };

struct Dataset {
  std::string name;
  std::vector<Document> documents;
  DatasetRole role = DatasetRole::INTERNAL;
  std::map<Label, std::size_t> class_counts;

  void recount() {
    class_counts = {{Label::FAKE, 0}, {Label::REAL, 0}};
    for (const auto& d : documents) ++class_counts[d.label];
  }

  std::size_t count(Label label) const {
    const auto it = class_counts.find(label);
    return it == class_counts.end() ? 0 : it->second;
  }

  std::size_t size() const { return documents.size(); }

  bool has_both_classes() const { return count(Label::FAKE) > 0 && count(Label::REAL) > 0; }

  bool operator==(const Dataset&) const = default;
};

enum class DataFormat { JSONL, CSV };

struct LoadOptions {
  bool allow_empty = false;
};

namespace detail {

inline void add_document(Dataset& ds, std::unordered_set<std::string>& seen, Document doc,
                         std::size_t line, const LoadOptions& options) {
  if (doc.id.empty()) {
    throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": empty id");
  }
  if (doc.text.empty() && !options.allow_empty) {
    throw Error(ErrorCode::EMPTY_TEXT,
                "line " + std::to_string(line) + ": empty text for id '" + doc.id + "'");
  }
  if (!seen.insert(doc.id).second) {
    throw Error(ErrorCode::DUPLICATE_ID,
                "line " + std::to_string(line) + ": duplicate id '" + doc.id + "'");
  }
  ds.documents.push_back(std::move(doc));
}

inline Label map_label(const LabelMap& label_map, const std::string& raw, std::size_t line) {
  const auto it = label_map.find(raw);
  if (it == label_map.end()) {
    throw Error(ErrorCode::UNKNOWN_LABEL,
                "line " + std::to_string(line) + ": label '" + raw + "' not in label map");
  }
  return it->second;
}

// RFC 4180 record reader. Returns false at end of input; `line` is set to
// the 1-based physical line the record starts on.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line,
                            std::size_t& next_line) {
  fields.clear();
  line = next_line;
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++next_line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || field_was_quoted) {
        throw Error(ErrorCode::MALFORMED_RECORD,
                    "line " + std::to_string(next_line) + ": stray quote in unquoted field");
      }
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\r') {
      if (in.peek() == '\n') continue;
      field.push_back(c);
    } else if (c == '\n') {
      ++next_line;
      fields.push_back(std::move(field));
      return true;
    } else {
      if (field_was_quoted) {
        throw Error(ErrorCode::MALFORMED_RECORD,
                    "line " + std::to_string(next_line) + ": data after closing quote");
      }
      field.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": unterminated quote");
  }
  fields.push_back(std::move(field));
  return true;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline Dataset read_jsonl_dataset(std::istream& in, const LabelMap& label_map, std::string name,
                                  const LoadOptions& options = {}) {
  Dataset ds;
  ds.name = std::move(name);
  std::unordered_set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (detail::trim(raw).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": " + e.what());
    }
    if (!j.is_object()) {
      throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": not an object");
    }
    for (const char* key : {"id", "text", "label"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) +
                                                     ": missing string field '" + key + "'");
      }
    }
    Document doc{j["id"].get<std::string>(), j["text"].get<std::string>(),
                 detail::map_label(label_map, j["label"].get<std::string>(), line)};
    detail::add_document(ds, seen, std::move(doc), line, options);
  }
  ds.recount();
  return ds;
}

inline Dataset read_csv_dataset(std::istream& in, const LabelMap& label_map, std::string name,
                                const LoadOptions& options = {}) {
  Dataset ds;
  ds.name = std::move(name);
  std::vector<std::string> fields;
  std::size_t line = 0;
  std::size_t next_line = 1;
  if (!detail::read_csv_record(in, fields, line, next_line)) {
    throw Error(ErrorCode::MALFORMED_RECORD, "line 1: missing header row");
  }
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < fields.size(); ++i) column[detail::trim(fields[i])] = i;
  for (const char* key : {"id", "text", "label"}) {
    if (!column.contains(key)) {
      throw Error(ErrorCode::MALFORMED_RECORD,
                  std::string("line 1: header lacks column '") + key + "'");
    }
  }
  const std::size_t width = fields.size();
  std::unordered_set<std::string> seen;
  while (detail::read_csv_record(in, fields, line, next_line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != width) {
      throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": expected " +
                                                   std::to_string(width) + " fields, got " +
                                                   std::to_string(fields.size()));
    }
    Document doc{fields[column["id"]], fields[column["text"]],
                 detail::map_label(label_map, fields[column["label"]], line)};
    detail::add_document(ds, seen, std::move(doc), line, options);
  }
  ds.recount();
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path, DataFormat format,
                            const LabelMap& label_map, const LoadOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path.string());
  auto name = path.stem().string();
  return format == DataFormat::JSONL ? read_jsonl_dataset(in, label_map, std::move(name), options)
                                     : read_csv_dataset(in, label_map, std::move(name), options);
}

inline void write_jsonl(const Dataset& ds, std::ostream& out) {
  for (const auto& d : ds.documents) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["text"] = d.text;
    j["label"] = label_token(d.label);
    out << j.dump() << '\n';
  }
}

inline void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path.string());
  write_jsonl(ds, out);
}

inline void write_csv(const Dataset& ds, std::ostream& out) {
  out << "id,text,label\n";
  for (const auto& d : ds.documents) {
    out << detail::csv_escape(d.id) << ',' << detail::csv_escape(d.text) << ','
        << label_token(d.label) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train_fraction, val_fraction, test_fraction}) {
      if (!(f > 0.0 && f < 1.0)) {
        throw Error(ErrorCode::INVALID_SPEC, "split fractions must lie in (0,1)");
      }
    }
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
      throw Error(ErrorCode::INVALID_SPEC, "split fractions must sum to 1");
    }
  }
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

namespace detail {

// Largest-remainder rounding of `total` over `fractions`. Ties rotate with
// `tie_offset` so consecutive classes do not all round the same way.
inline std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions,
                                            std::size_t tie_offset) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ra = remainder[a], rb = remainder[b];
    if (std::abs(ra - rb) > 1e-9) return ra > rb;
    return (a + tie_offset) % 3 < (b + tie_offset) % 3;
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

}  // namespace detail

// Per-class shuffled partition; each split keeps the dataset's original order.
inline DatasetSplits stratified_split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const std::array<double, 3> fractions{spec.train_fraction, spec.val_fraction, spec.test_fraction};
  std::vector<int> assignment(dataset.size(), -1);
  std::size_t class_index = 0;
  for (Label label : kLabels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.documents[i].label == label) members.push_back(i);
    }
    for (double f : fractions) {
      if (f * static_cast<double>(members.size()) < 1.0 - 1e-9) {
        throw Error(ErrorCode::CLASS_TOO_SMALL,
                    "class " + std::string(label_name(label)) + " has " +
                        std::to_string(members.size()) + " documents in '" + dataset.name +
                        "'; too few for the requested split");
      }
    }
    detail::Rng rng(detail::mix_seed(spec.seed, class_index));
    rng.shuffle(std::span<std::size_t>(members));
    const auto counts = detail::apportion(members.size(), fractions, class_index);
    std::size_t k = 0;
    for (int part = 0; part < 3; ++part) {
      for (std::size_t c = 0; c < counts[part]; ++c) assignment[members[k++]] = part;
    }
    ++class_index;
  }
  DatasetSplits out;
  Dataset* parts[3] = {&out.train, &out.val, &out.test};
  const char* suffix[3] = {"/train", "/val", "/test"};
  for (int p = 0; p < 3; ++p) {
    parts[p]->name = dataset.name + suffix[p];
    parts[p]->role = dataset.role;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    parts[assignment[i]]->documents.push_back(dataset.documents[i]);
  }
  for (auto* p : parts) p->recount();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic confounded corpora

struct EntityConfound {
  Label label = Label::FAKE;
  double rate = 0.0;

  bool operator==(const EntityConfound&) const = default;
};

struct ConfoundSpec {
  std::size_t vocab_size = 200;
  std::size_t docs_per_class = 500;
  double signal_strength = 0.3;
  double confound_url_rate = 0.8;
  std::map<std::string, EntityConfound> confounded_entities;

  void validate() const {
    if (vocab_size < 10) throw Error(ErrorCode::INVALID_SPEC, "vocab_size must be >= 10");
    if (vocab_size > 64000) throw Error(ErrorCode::INVALID_SPEC, "vocab_size must be <= 64000");
    if (docs_per_class < 1) throw Error(ErrorCode::INVALID_SPEC, "docs_per_class must be >= 1");
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(signal_strength)) throw Error(ErrorCode::INVALID_SPEC, "signal_strength not in [0,1]");
    if (!rate_ok(confound_url_rate)) {
      throw Error(ErrorCode::INVALID_SPEC, "confound_url_rate not in [0,1]");
    }
    for (const auto& [entity, c] : confounded_entities) {
      if (entity.empty()) throw Error(ErrorCode::INVALID_SPEC, "empty confounded entity");
      if (!rate_ok(c.rate)) throw Error(ErrorCode::INVALID_SPEC, "rate for '" + entity + "' not in [0,1]");
    }
  }

  bool operator==(const ConfoundSpec&) const = default;
};

inline nlohmann::ordered_json to_json(const ConfoundSpec& spec) {
  nlohmann::ordered_json j;
  j["vocab_size"] = spec.vocab_size;
  j["docs_per_class"] = spec.docs_per_class;
  j["signal_strength"] = spec.signal_strength;
  j["confound_url_rate"] = spec.confound_url_rate;
  j["confounded_entities"] = nlohmann::ordered_json::object();
  for (const auto& [entity, c] : spec.confounded_entities) {
    j["confounded_entities"][entity] = {{"label", label_token(c.label)}, {"rate", c.rate}};
  }
  return j;
}

inline ConfoundSpec confound_spec_from_json(const nlohmann::json& j) {
  ConfoundSpec spec;
  try {
    spec.vocab_size = j.at("vocab_size").get<std::size_t>();
    spec.docs_per_class = j.at("docs_per_class").get<std::size_t>();
    spec.signal_strength = j.at("signal_strength").get<double>();
    spec.confound_url_rate = j.at("confound_url_rate").get<double>();
    if (j.contains("confounded_entities")) {
      const auto labels = default_label_map();
      for (const auto& [entity, c] : j.at("confounded_entities").items()) {
        const auto raw = c.at("label").get<std::string>();
        const auto it = labels.find(raw);
        if (it == labels.end()) throw Error(ErrorCode::INVALID_SPEC, "unknown label '" + raw + "'");
        spec.confounded_entities[entity] = {it->second, c.at("rate").get<double>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::INVALID_SPEC, e.what());
  }
  spec.validate();
  return spec;
}

// Everything that determines one domain's sampling distribution. Two domains
// with equal parameters are draws from the same process.
struct GenerativeParams {
  std::size_t vocab_size = 0;
  std::size_t docs_per_class = 0;
  double signal_strength = 0.0;
  double url_rate = 0.0;
  std::vector<std::pair<std::string, EntityConfound>> entity_insertions;

  bool operator==(const GenerativeParams&) const = default;
};

struct SyntheticCorpus {
  Dataset domain_a;
  Dataset domain_b;
  GenerativeParams params_a;
  GenerativeParams params_b;
  // domain-A entity string -> domain-B stand-in
  std::map<std::string, std::string> counterparts;
};

namespace detail {

inline constexpr std::size_t kMinDocTokens = 6;
inline constexpr std::size_t kMaxDocTokens = 12;

// Pseudo-word for vocabulary index i: three consonant-vowel syllables.
inline std::string synthetic_word(std::size_t i) {
  static constexpr std::string_view consonants = "bdgkptvz";
  static constexpr std::string_view vowels = "aeiou";
  std::string w;
  for (int s = 0; s < 3; ++s) {
    const std::size_t syl = i % 40;
    i /= 40;
    w.push_back(consonants[syl / 5]);
    w.push_back(vowels[syl % 5]);
  }
  return w;
}

// Entity strings that stand in for domain-A entities inside domain B.
inline const std::vector<std::string>& counterpart_pool() {
  static const std::vector<std::string> pool = {
      "Nicaragua", "Bolivia", "Kenya",   "Peru",     "Unicef",  "Pfizer",
      "Ecuador",   "Ghana",   "Nepal",   "Uganda",   "Oxfam",   "Moderna",
      "Zambia",    "Chile",   "Norway",  "Portugal", "Interpol", "Reuters",
      "Malawi",    "Senegal", "Finland", "Honduras", "Unesco",  "Amnesty International"};
  return pool;
}

inline std::string lower_ascii(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline Dataset generate_domain(const GenerativeParams& params, std::uint64_t seed, std::string name,
                               std::string_view id_prefix) {
  Rng rng(seed);
  const std::size_t pool = std::max<std::size_t>(1, params.vocab_size / 10);
  Dataset ds;
  ds.name = std::move(name);
  std::size_t serial = 0;
  for (std::size_t n = 0; n < params.docs_per_class; ++n) {
    for (Label label : kLabels) {
      const std::size_t own_base = label == Label::FAKE ? 0 : pool;
      const std::size_t length =
          kMinDocTokens + static_cast<std::size_t>(rng.below(kMaxDocTokens - kMinDocTokens + 1));
      std::vector<std::string> words;
      words.reserve(length + 4);
      for (std::size_t k = 0; k < length; ++k) {
        std::size_t index;
        if (rng.bernoulli(params.signal_strength)) {
          index = own_base + static_cast<std::size_t>(rng.below(pool));
        } else {
          index = static_cast<std::size_t>(rng.below(params.vocab_size));
        }
        words.push_back(synthetic_word(index));
      }
      words.front()[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(words.front()[0])));
      for (const auto& [entity, confound] : params.entity_insertions) {
        const bool insert = confound.label == label && rng.bernoulli(confound.rate);
        if (!insert) continue;
        const auto at = 1 + static_cast<std::size_t>(rng.below(words.size()));
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), entity);
      }
      std::string text;
      for (const auto& w : words) {
        if (!text.empty()) text.push_back(' ');
        text += w;
      }
      text.push_back('.');
      if (label == Label::FAKE && rng.bernoulli(params.url_rate)) {
        static constexpr std::string_view alnum =
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        text += " https://t.co/";
        for (int c = 0; c < 10; ++c) text.push_back(alnum[rng.below(alnum.size())]);
      }
      char id[32];
      std::snprintf(id, sizeof id, "%.*s-%06zu", static_cast<int>(id_prefix.size()),
                    id_prefix.data(), ++serial);
      ds.documents.push_back({id, std::move(text), label});
    }
  }
  ds.recount();
  return ds;
}

}  // namespace detail

// Two domains sharing the class-conditional keyword distribution. Domain A
// carries the label-correlated URL and entity artifacts; domain B has no URLs
// and its entity insertions use disjoint strings.
inline SyntheticCorpus generate_confounded_corpus(const ConfoundSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticCorpus out;
  GenerativeParams base;
  base.vocab_size = spec.vocab_size;
  base.docs_per_class = spec.docs_per_class;
  base.signal_strength = spec.signal_strength;

  out.params_a = base;
  out.params_a.url_rate = spec.confound_url_rate;
  out.params_b = base;
  out.params_b.url_rate = 0.0;

  std::set<std::string> taken;
  for (const auto& [entity, c] : spec.confounded_entities) taken.insert(detail::lower_ascii(entity));
  std::size_t next = 0;
  std::size_t fallback = 0;
  for (const auto& [entity, c] : spec.confounded_entities) {
    out.params_a.entity_insertions.emplace_back(entity, c);
    std::string stand_in;
    const auto& pool = detail::counterpart_pool();
    while (next < pool.size() && taken.contains(detail::lower_ascii(pool[next]))) ++next;
    if (next < pool.size()) {
      stand_in = pool[next++];
    } else {
      do {
        stand_in = "Zentoria" + std::to_string(++fallback);
      } while (taken.contains(detail::lower_ascii(stand_in)));
    }
    taken.insert(detail::lower_ascii(stand_in));
    out.counterparts[entity] = stand_in;
    out.params_b.entity_insertions.emplace_back(stand_in, c);
  }

  out.domain_a = detail::generate_domain(out.params_a, detail::mix_seed(seed, 1), "domain_a", "a");
  out.domain_b = detail::generate_domain(out.params_b, detail::mix_seed(seed, 2), "domain_b", "b");
  out.domain_b.role = DatasetRole::EXTERNAL;
  return out;
}

// Writes domain_a.jsonl, domain_b.jsonl and a meta JSON sidecar for each.
inline void write_synthetic_corpus(const SyntheticCorpus& corpus, const ConfoundSpec& spec,
                                   std::uint64_t seed, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto params_json = [](const GenerativeParams& p) {
    nlohmann::ordered_json j;
    j["vocab_size"] = p.vocab_size;
    j["docs_per_class"] = p.docs_per_class;
    j["signal_strength"] = p.signal_strength;
    j["url_rate"] = p.url_rate;
    j["entity_insertions"] = nlohmann::ordered_json::array();
    for (const auto& [entity, c] : p.entity_insertions) {
      j["entity_insertions"].push_back(
          {{"entity", entity}, {"label", label_token(c.label)}, {"rate", c.rate}});
    }
    return j;
  };
  const std::pair<const Dataset*, const GenerativeParams*> domains[2] = {
      {&corpus.domain_a, &corpus.params_a}, {&corpus.domain_b, &corpus.params_b}};
  for (const auto& [ds, params] : domains) {
    write_jsonl(*ds, out_dir / (ds->name + ".jsonl"));
    nlohmann::ordered_json meta;
    meta["spec"] = to_json(spec);
    meta["seed"] = seed;
    meta["domain"] = ds->name;
    meta["params"] = params_json(*params);
    meta["counterparts"] = corpus.counterparts;
    std::ofstream out(out_dir / (ds->name + ".meta.json"), std::ios::binary);
    if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write meta for " + ds->name);
    out << meta.dump(2) << '\n';
  }
}

}  // namespace debias
