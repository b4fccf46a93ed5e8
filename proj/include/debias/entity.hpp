#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "debias/data_files.hpp"
#include "debias/detail/utf8.hpp"
#include "debias/error.hpp"
#include "debias/textprep.hpp"

namespace debias {

// Declaration order is the tie-break precedence: PER > ORG > LOC > MISC.
enum class EntityCategory { PER, ORG, LOC, MISC };

constexpr std::string_view category_name(EntityCategory c) {
  switch (c) {
    case EntityCategory::PER: return "PER";
    case EntityCategory::ORG: return "ORG";
    case EntityCategory::LOC: return "LOC";
    case EntityCategory::MISC: return "MISC";
  }
  return "MISC";
}

constexpr std::string_view category_token(EntityCategory c) {
  switch (c) {
    case EntityCategory::PER: return "$PER$";
    case EntityCategory::ORG: return "$ORG$";
    case EntityCategory::LOC: return "$LOC$";
    case EntityCategory::MISC: return "$MISC$";
  }
  return "$MISC$";
}

inline std::optional<EntityCategory> parse_category(std::string_view s) {
  if (s == "PER") return EntityCategory::PER;
  if (s == "ORG") return EntityCategory::ORG;
  if (s == "LOC") return EntityCategory::LOC;
  if (s == "MISC") return EntityCategory::MISC;
  return std::nullopt;
}

enum class SpanSource { GAZETTEER, HEURISTIC, SIDECAR };

struct EntitySpan {
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // exclusive
  EntityCategory category = EntityCategory::MISC;
  std::string surface;
  SpanSource source = SpanSource::GAZETTEER;

  std::size_t length() const { return token_end - token_start; }
  bool operator==(const EntitySpan&) const = default;
};

namespace detail {

inline const std::set<std::string>& function_words() {
  static const std::set<std::string> words = {
      "a",     "an",    "the",   "and",   "or",    "but",   "nor",   "so",    "yet",
      "i",     "me",    "my",    "we",    "us",    "our",   "you",   "your",  "he",    "him",
      "his",   "she",   "her",   "it",    "its",   "they",  "them",  "their", "this",
      "that",  "these", "those", "who",   "whom",  "whose", "which", "what",  "when",
      "where", "why",   "how",   "in",    "on",    "at",    "by",    "for",   "from",
      "of",    "to",    "with",  "without", "about", "after", "before", "over", "under",
      "is",    "are",   "was",   "were",  "be",    "been",  "being", "do",    "does",
      "did",   "have",  "has",   "had",   "will",  "would", "can",   "could", "should",
      "may",   "might", "must",  "not",   "no",    "yes",   "if",    "then",  "than",
      "as",    "all",   "any",   "some",  "every", "each",  "there", "here",  "also",
      "just",  "only",  "very",  "more",  "most",  "new",   "now",   "ok",    "mr",
      "mrs",   "ms",    "dr"};
  return words;
}

}  // namespace detail

class Gazetteer {
 public:
  // Phrase is matched case-insensitively on token boundaries; a phrase listed
  // under several categories keeps the highest-precedence one. A phrase whose
  // folded form is a function word ("WHO", "US") matches only as listed.
  void add(std::string_view phrase, EntityCategory category) {
    const auto key = normalize(phrase);
    if (key.empty()) throw Error(ErrorCode::MALFORMED_GAZETTEER, "empty phrase");
    const auto len = static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ') + 1);
    max_phrase_len_ = std::max(max_phrase_len_, len);
    auto [it, inserted] = entries_.emplace(key, category);
    if (!inserted && category < it->second) it->second = category;
    if (detail::function_words().contains(key)) exact_case_[key] = tokenize(phrase).joined();
  }

  std::optional<EntityCategory> lookup(std::string_view phrase) const {
    return find(normalize(phrase), tokenize(phrase).joined());
  }

  // `key` is the folded phrase, `surface` the same tokens as written.
  std::optional<EntityCategory> find(const std::string& key, std::string_view surface) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    if (const auto cased = exact_case_.find(key); cased != exact_case_.end() && cased->second != surface) {
      return std::nullopt;
    }
    return it->second;
  }

  std::size_t max_phrase_len() const { return max_phrase_len_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, EntityCategory>& entries() const { return entries_; }

  // UTF-8 TSV: phrase<TAB>category, '#' comment lines.
  static Gazetteer load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path.string());
    Gazetteer g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto tab = t.find('\t');
      if (tab == std::string::npos) {
        throw Error(ErrorCode::MALFORMED_GAZETTEER,
                    path.filename().string() + ":" + std::to_string(lineno) + ": missing TAB");
      }
      const auto category = parse_category(detail::trim(t.substr(tab + 1)));
      if (!category) {
        throw Error(ErrorCode::MALFORMED_GAZETTEER, path.filename().string() + ":" +
                                                         std::to_string(lineno) + ": bad category");
      }
      g.add(t.substr(0, tab), *category);
    }
    return g;
  }

  static const Gazetteer& shipped() {
    static const Gazetteer g = load(data_path("gazetteer.tsv"));
    return g;
  }

  // Lowercased token surfaces joined by single spaces.
  static std::string normalize(std::string_view phrase) {
    return tokenize(detail::to_lower_utf8(phrase)).joined();
  }

 private:
  std::map<std::string, EntityCategory> entries_;
  std::map<std::string, std::string> exact_case_;
  std::size_t max_phrase_len_ = 0;
};

namespace detail {


inline bool is_sentence_initial(const TokenSequence& tokens, std::size_t i) {
  if (i == 0) return true;
  const auto& prev = tokens.tokens[i - 1].surface;
  return prev == "." || prev == "!" || prev == "?";
}

inline bool is_capitalized_word(const Token& t) {
  if (t.kind != TokenKind::WORD || t.surface.empty()) return false;
  return is_upper_cp(decode_utf8(t.surface, 0).cp);
}

inline bool heuristic_candidate(const TokenSequence& tokens, std::size_t i) {
  const auto& t = tokens.tokens[i];
  return is_capitalized_word(t) && !function_words().contains(to_lower_utf8(t.surface));
}

inline std::string span_surface(const TokenSequence& tokens, std::size_t start, std::size_t end) {
  std::string s;
  for (std::size_t k = start; k < end; ++k) {
    if (k > start) s.push_back(' ');
    s += tokens.tokens[k].surface;
  }
  return s;
}

// Longest gazetteer phrase starting at token i, as (length, category).
inline std::optional<std::pair<std::size_t, EntityCategory>> gazetteer_match(
    const TokenSequence& tokens, std::size_t i, const Gazetteer& gazetteer) {
  const std::size_t n = tokens.size();
  const std::size_t max_len = std::min(gazetteer.max_phrase_len(), n - i);
  std::string key;
  std::string surface;
  std::vector<std::pair<std::string, std::string>> keys;
  keys.reserve(max_len);
  for (std::size_t len = 1; len <= max_len; ++len) {
    const auto& t = tokens.tokens[i + len - 1];
    if (t.kind == TokenKind::SPECIAL_TOKEN) break;
    if (len > 1) {
      key.push_back(' ');
      surface.push_back(' ');
    }
    key += to_lower_utf8(t.surface);
    surface += t.surface;
    keys.emplace_back(key, surface);
  }
  for (std::size_t len = keys.size(); len >= 1; --len) {
    if (const auto c = gazetteer.find(keys[len - 1].first, keys[len - 1].second)) return std::make_pair(len, *c);
  }
  return std::nullopt;
}

}  // namespace detail

// Left-to-right, longest-match-first gazetteer tagging; leftover capitalized
// words that are neither sentence-initial nor function words become MISC
// (consecutive ones merge into one span).
inline std::vector<EntitySpan> tag_entities(const TokenSequence& tokens, const Gazetteer& gazetteer) {
  std::vector<EntitySpan> spans;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    if (tokens.tokens[i].kind == TokenKind::SPECIAL_TOKEN) {
      ++i;
      continue;
    }
    if (const auto match = detail::gazetteer_match(tokens, i, gazetteer)) {
      const auto [len, category] = *match;
      spans.push_back({i, i + len, category, detail::span_surface(tokens, i, i + len),
                       SpanSource::GAZETTEER});
      i += len;
      continue;
    }
    if (!detail::is_sentence_initial(tokens, i) && detail::heuristic_candidate(tokens, i)) {
      std::size_t end = i + 1;
      while (end < n && detail::heuristic_candidate(tokens, end) &&
             !detail::gazetteer_match(tokens, end, gazetteer)) {
        ++end;
      }
      spans.push_back({i, end, EntityCategory::MISC, detail::span_surface(tokens, i, end),
                       SpanSource::HEURISTIC});
      i = end;
      continue;
    }
    ++i;
  }
  return spans;
}

// Collapses each span into its $CATEGORY$ token. The result's source is the
// input text with each span's extent rewritten; offsets point into it.
inline TokenSequence replace_entities(const TokenSequence& tokens, std::vector<EntitySpan> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.token_start < b.token_start; });
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& s = spans[k];
    if (s.token_start >= s.token_end || s.token_end > tokens.size()) {
      throw Error(ErrorCode::SPAN_OUT_OF_RANGE,
                  "span [" + std::to_string(s.token_start) + "," + std::to_string(s.token_end) +
                      ") outside " + std::to_string(tokens.size()) + " tokens");
    }
    if (k > 0 && spans[k - 1].token_end > s.token_start) {
      throw Error(ErrorCode::OVERLAPPING_SPANS,
                  "spans starting at " + std::to_string(spans[k - 1].token_start) + " and " +
                      std::to_string(s.token_start) + " overlap");
    }
  }
  // Text between tokens is copied from the source so untouched regions keep
  // their original spacing and punctuation.
  TokenSequence out;
  std::size_t copied = 0;
  const auto copy_gap = [&](std::size_t until) {
    if (until > copied) out.source.append(tokens.source, copied, until - copied);
  };
  const auto emit = [&](std::size_t src_start, std::size_t src_end, std::string_view surface, TokenKind kind) {
    copy_gap(src_start);
    Token t;
    t.surface = std::string(surface);
    t.kind = kind;
    t.byte_start = out.source.size();
    t.char_start = detail::count_code_points(out.source);
    out.source += surface;
    t.byte_end = out.source.size();
    t.char_end = t.char_start + detail::count_code_points(surface);
    out.tokens.push_back(std::move(t));
    copied = src_end;
  };
  std::size_t next_span = 0;
  for (std::size_t i = 0; i < tokens.size();) {
    if (next_span < spans.size() && spans[next_span].token_start == i) {
      const auto& s = spans[next_span++];
      emit(tokens.tokens[s.token_start].byte_start, tokens.tokens[s.token_end - 1].byte_end,
           category_token(s.category), TokenKind::SPECIAL_TOKEN);
      i = s.token_end;
    } else {
      const auto& t = tokens.tokens[i++];
      emit(t.byte_start, t.byte_end, t.surface, t.kind);
    }
  }
  copy_gap(tokens.source.size());
  return out;
}

using SidecarAnnotations = std::map<std::string, std::vector<EntitySpan>>;

// JSONL of {"id", "spans":[{"start","end","cat"}]}; token indices refer to
// tokenize() over the document's cleaned text. Range checks against the
// document happen in replace_entities.
inline SidecarAnnotations read_sidecar_annotations(std::istream& in) {
  SidecarAnnotations out;
  std::string raw;
  std::size_t line = 0;
  auto fail = [&line](const std::string& why) {
    throw Error(ErrorCode::MALFORMED_ANNOTATION, "line " + std::to_string(line) + ": " + why);
  };
  while (std::getline(in, raw)) {
    ++line;
    if (detail::trim(raw).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      fail(e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("spans") ||
        !j["spans"].is_array()) {
      fail("expected {\"id\": string, \"spans\": [...]}");
    }
    std::vector<EntitySpan> spans;
    for (const auto& s : j["spans"]) {
      if (!s.is_object() || !s.contains("start") || !s.contains("end") || !s.contains("cat") ||
          !s["start"].is_number_integer() || !s["end"].is_number_integer() || !s["cat"].is_string()) {
        fail("span needs integer start/end and string cat");
      }
      const auto start = s["start"].get<long long>();
      const auto end = s["end"].get<long long>();
      const auto cat = parse_category(s["cat"].get<std::string>());
      if (!cat) fail("unknown category '" + s["cat"].get<std::string>() + "'");
      if (start < 0 || end <= start) fail("span requires 0 <= start < end");
      spans.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(end), *cat, "",
                       SpanSource::SIDECAR});
    }
    std::sort(spans.begin(), spans.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.token_start < b.token_start; });
    for (std::size_t k = 1; k < spans.size(); ++k) {
      if (spans[k - 1].token_end > spans[k].token_start) fail("overlapping spans");
    }
    const auto id = j["id"].get<std::string>();
    if (out.contains(id)) fail("duplicate id '" + id + "'");
    out.emplace(id, std::move(spans));
  }
  return out;
}

inline SidecarAnnotations load_sidecar_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path.string());
  return read_sidecar_annotations(in);
}

// tokenize -> (sidecar spans, else gazetteer+heuristic) -> replace, as text.
inline std::string anonymize_entities(std::string_view text, const Gazetteer& gazetteer,
                                      const std::vector<EntitySpan>* sidecar = nullptr) {
  const auto tokens = tokenize(text);
  auto spans = sidecar ? *sidecar : tag_entities(tokens, gazetteer);
  for (auto& s : spans) {
    if (s.surface.empty() && s.token_end <= tokens.size() && s.token_start < s.token_end) {
      s.surface = detail::span_surface(tokens, s.token_start, s.token_end);
    }
  }
  return replace_entities(tokens, std::move(spans)).source;
}

}  // namespace debias
