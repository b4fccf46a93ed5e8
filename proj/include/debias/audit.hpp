#pragma once

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "debias/data_files.hpp"
#include "debias/detail/utf8.hpp"
#include "debias/entity.hpp"
#include "debias/error.hpp"
#include "debias/shapley.hpp"
#include "debias/textprep.hpp"

namespace debias {

enum class TokenCategory {
  URL_ARTIFACT,
  SPECIAL_SYMBOL,
  MENTION_ARTIFACT,
  HASHTAG_ARTIFACT,
  EMOJI,
  ENTITY_PER,
  ENTITY_ORG,
  ENTITY_LOC,
  ENTITY_MISC,
  NUMBER,
  STOPWORD,
  LEXICAL,
};

inline constexpr std::array<TokenCategory, 12> kAllTokenCategories = {
    TokenCategory::URL_ARTIFACT, TokenCategory::SPECIAL_SYMBOL, TokenCategory::MENTION_ARTIFACT,
    TokenCategory::HASHTAG_ARTIFACT, TokenCategory::EMOJI,       TokenCategory::ENTITY_PER,
    TokenCategory::ENTITY_ORG,   TokenCategory::ENTITY_LOC,     TokenCategory::ENTITY_MISC,
    TokenCategory::NUMBER,       TokenCategory::STOPWORD,       TokenCategory::LEXICAL};

constexpr std::string_view token_category_name(TokenCategory c) {
  switch (c) {
    case TokenCategory::URL_ARTIFACT: return "URL_ARTIFACT";
    case TokenCategory::SPECIAL_SYMBOL: return "SPECIAL_SYMBOL";
    case TokenCategory::MENTION_ARTIFACT: return "MENTION_ARTIFACT";
    case TokenCategory::HASHTAG_ARTIFACT: return "HASHTAG_ARTIFACT";
    case TokenCategory::EMOJI: return "EMOJI";
    case TokenCategory::ENTITY_PER: return "ENTITY_PER";
    case TokenCategory::ENTITY_ORG: return "ENTITY_ORG";
    case TokenCategory::ENTITY_LOC: return "ENTITY_LOC";
    case TokenCategory::ENTITY_MISC: return "ENTITY_MISC";
    case TokenCategory::NUMBER: return "NUMBER";
    case TokenCategory::STOPWORD: return "STOPWORD";
    case TokenCategory::LEXICAL: return "LEXICAL";
  }
  return "LEXICAL";
}

inline std::optional<TokenCategory> parse_token_category(std::string_view s) {
  for (auto c : kAllTokenCategories) {
    if (token_category_name(c) == s) return c;
  }
  return std::nullopt;
}

constexpr TokenCategory entity_token_category(EntityCategory c) {
  switch (c) {
    case EntityCategory::PER: return TokenCategory::ENTITY_PER;
    case EntityCategory::ORG: return TokenCategory::ENTITY_ORG;
    case EntityCategory::LOC: return TokenCategory::ENTITY_LOC;
    case EntityCategory::MISC: return TokenCategory::ENTITY_MISC;
  }
  return TokenCategory::ENTITY_MISC;
}

// Surface artifacts plus every entity category; STOPWORD, NUMBER and LEXICAL
// are never spurious by default.
inline std::set<TokenCategory> default_spurious_categories() {
  return {TokenCategory::URL_ARTIFACT,     TokenCategory::SPECIAL_SYMBOL, TokenCategory::MENTION_ARTIFACT,
          TokenCategory::HASHTAG_ARTIFACT, TokenCategory::EMOJI,          TokenCategory::ENTITY_PER,
          TokenCategory::ENTITY_ORG,       TokenCategory::ENTITY_LOC,     TokenCategory::ENTITY_MISC};
}

inline constexpr std::size_t kDefaultTopK = 30;

// Lookup tables consulted by categorize_token.
struct AuditLexicons {
  Gazetteer gazetteer;
  EmoticonLexicon emoticons;
  std::set<std::string> stopwords;

  static std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::set<std::string> out;
    for (auto& w : detail::read_list_file(path)) out.insert(detail::to_lower_utf8(w));
    return out;
  }

  static const AuditLexicons& shipped() {
    static const AuditLexicons lex{Gazetteer::shipped(), EmoticonLexicon::shipped(),
                                   load_stopwords(data_path("stopwords.txt"))};
    return lex;
  }
};

// First match wins: placeholders -> emoji/emoticons -> leading '@'/'#' ->
// punctuation/symbols -> digit runs -> gazetteer entity -> stopword -> LEXICAL.
inline TokenCategory categorize_token(std::string_view token, const AuditLexicons& lex) {
  const auto upper_placeholder = [&] {
    std::string s(token);
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  }();
  if (upper_placeholder == "$URL$") return TokenCategory::URL_ARTIFACT;
  if (upper_placeholder == "$HASHTAG$") return TokenCategory::HASHTAG_ARTIFACT;
  if (upper_placeholder == "$PER$") return TokenCategory::ENTITY_PER;
  if (upper_placeholder == "$ORG$") return TokenCategory::ENTITY_ORG;
  if (upper_placeholder == "$LOC$") return TokenCategory::ENTITY_LOC;
  if (upper_placeholder == "$MISC$") return TokenCategory::ENTITY_MISC;
  if (token.empty()) return TokenCategory::LEXICAL;

  if (lex.emoticons.contains(token)) return TokenCategory::EMOJI;
  bool all_emoji = true;
  bool any_word = false;
  bool all_digits = true;
  for (std::size_t pos = 0; pos < token.size();) {
    const auto [cp, len] = detail::decode_utf8(token, pos);
    all_emoji = all_emoji && detail::is_emoji_cp(cp);
    any_word = any_word || detail::is_word_cp(cp);
    all_digits = all_digits && detail::is_ascii_digit(cp);
    pos += len;
  }
  if (all_emoji) return TokenCategory::EMOJI;
  // A lone '@' or '#' introduces nothing and falls through to symbols.
  if (token.size() > 1 && token.front() == '@') return TokenCategory::MENTION_ARTIFACT;
  if (token.size() > 1 && token.front() == '#') return TokenCategory::HASHTAG_ARTIFACT;
  if (!any_word) return TokenCategory::SPECIAL_SYMBOL;
  if (all_digits) return TokenCategory::NUMBER;
  if (const auto c = lex.gazetteer.lookup(token)) return entity_token_category(*c);
  if (lex.stopwords.contains(detail::to_lower_utf8(token))) return TokenCategory::STOPWORD;
  return TokenCategory::LEXICAL;
}

struct FlaggedToken {
  std::string token;
  TokenCategory category = TokenCategory::LEXICAL;
  std::size_t rank = 0;  // 1-based, by sum_abs
  double sum_abs = 0.0;
  double mean_abs = 0.0;
  double class_direction = 0.0;
};

struct AuditReport {
  std::vector<FlaggedToken> flagged;  // spurious tokens within the top_k
  std::vector<FlaggedToken> inspected;  // all top_k tokens with their category
  // Share of the top_k tokens' total sum_abs held by spurious-category tokens.
  double spurious_mass_fraction = 0.0;
  std::size_t top_k = kDefaultTopK;
  std::set<TokenCategory> spurious_categories;
};

// Inspects the top_k tokens by sum_abs and flags those whose category is in
// `spurious`.
inline AuditReport flag_spurious(const GlobalImportance& global, std::size_t top_k,
                                 const std::set<TokenCategory>& spurious, const AuditLexicons& lex) {
  if (global.empty()) throw Error(ErrorCode::EMPTY_INPUT, "global importance is empty");
  if (top_k < 1) throw Error(ErrorCode::INVALID_CONFIG, "top_k must be >= 1");
  std::vector<TokenImportance> ranked = global.entries;
  std::stable_sort(ranked.begin(), ranked.end(), [](const TokenImportance& a, const TokenImportance& b) {
    if (a.sum_abs != b.sum_abs) return a.sum_abs > b.sum_abs;
    return a.token < b.token;
  });
  AuditReport report;
  report.top_k = top_k;
  report.spurious_categories = spurious;
  double total = 0.0;
  double flagged_mass = 0.0;
  const std::size_t limit = std::min(top_k, ranked.size());
  for (std::size_t r = 0; r < limit; ++r) {
    const auto& t = ranked[r];
    FlaggedToken f{t.token, categorize_token(t.token, lex), r + 1, t.sum_abs, t.mean_abs, t.class_direction};
    total += t.sum_abs;
    if (spurious.contains(f.category)) {
      flagged_mass += t.sum_abs;
      report.flagged.push_back(f);
    }
    report.inspected.push_back(std::move(f));
  }
  report.spurious_mass_fraction = total > 0.0 ? std::clamp(flagged_mass / total, 0.0, 1.0) : 0.0;
  return report;
}

inline nlohmann::ordered_json to_json(const AuditReport& r) {
  auto entry = [](const FlaggedToken& f) {
    nlohmann::ordered_json j;
    j["token"] = f.token;
    j["category"] = token_category_name(f.category);
    j["rank"] = f.rank;
    j["sum_abs"] = f.sum_abs;
    j["mean_abs"] = f.mean_abs;
    j["class_direction"] = f.class_direction;
    return j;
  };
  nlohmann::ordered_json j;
  j["metric"] = "spurious_mass_fraction";
  j["metric_definition"] =
      "share of the top-k tokens' summed |phi| held by tokens in the spurious categories "
      "(an operational measure, not a significance test)";
  j["spurious_mass_fraction"] = r.spurious_mass_fraction;
  auto& th = j["thresholds"];
  th["top_k"] = r.top_k;
  th["ranking"] = "sum_abs";
  th["spurious_categories"] = nlohmann::ordered_json::array();
  for (auto c : r.spurious_categories) th["spurious_categories"].push_back(token_category_name(c));
  j["flagged"] = nlohmann::ordered_json::array();
  for (const auto& f : r.flagged) j["flagged"].push_back(entry(f));
  j["inspected"] = nlohmann::ordered_json::array();
  for (const auto& f : r.inspected) j["inspected"].push_back(entry(f));
  return j;
}

inline std::string render_audit_markdown(const AuditReport& r, std::string_view title = "Spurious feature audit") {
  std::ostringstream out;
  out << "# " << title << "\n\n";
  out << fmt::format("Spurious mass fraction (top {} by sum |phi|): **{:.4f}**\n\n", r.top_k, r.spurious_mass_fraction);
  out << "The fraction is an operational measure: the share of the inspected tokens' summed |phi| "
         "that falls on tokens in the spurious categories.\n\n";
  out << "| Rank | Token | Category | Sum abs | Mean abs | Direction | Flagged |\n";
  out << "|---:|---|---|---:|---:|---:|:---:|\n";
  for (const auto& f : r.inspected) {
    const bool flagged = r.spurious_categories.contains(f.category);
    std::string token = f.token;
    for (std::size_t p = 0; (p = token.find('|', p)) != std::string::npos; p += 2) token.replace(p, 1, "\\|");
    out << fmt::format("| {} | `{}` | {} | {:.6f} | {:.6f} | {:+.6f} | {} |\n", f.rank, token,
                       token_category_name(f.category), f.sum_abs, f.mean_abs, f.class_direction,
                       flagged ? "yes" : "");
  }
  return out.str();
}

}  // namespace debias
