#pragma once

#include <array>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "debias/data_files.hpp"
#include "debias/detail/utf8.hpp"

namespace debias {

enum class TokenKind { WORD, NUMBER, SPECIAL_TOKEN, SYMBOL };

constexpr std::string_view kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::WORD: return "WORD";
    case TokenKind::NUMBER: return "NUMBER";
    case TokenKind::SPECIAL_TOKEN: return "SPECIAL_TOKEN";
    case TokenKind::SYMBOL: return "SYMBOL";
  }
  return "SYMBOL";
}

inline constexpr std::string_view kUrlToken = "$URL$";
inline constexpr std::string_view kHashtagToken = "$HASHTAG$";

// The closed set of placeholder tokens the pipeline may introduce.
inline constexpr std::array<std::string_view, 6> kSpecialTokens = {
    "$URL$", "$HASHTAG$", "$PER$", "$ORG$", "$LOC$", "$MISC$"};

inline bool is_special_token(std::string_view s) {
  for (auto t : kSpecialTokens) {
    if (s == t) return true;
  }
  return false;
}

// Length of the special token starting at byte `pos`, or 0.
inline std::size_t special_token_at(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '$') return 0;
  for (auto t : kSpecialTokens) {
    if (text.substr(pos, t.size()) == t) return t.size();
  }
  return 0;
}

struct Token {
  std::string surface;
  std::size_t char_start = 0;  // code point offsets into the source
  std::size_t char_end = 0;
  std::size_t byte_start = 0;  // matching UTF-8 byte offsets
  std::size_t byte_end = 0;
  TokenKind kind = TokenKind::WORD;

  bool operator==(const Token&) const = default;
};

struct TokenSequence {
  std::string source;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  std::vector<std::string> surfaces() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
  }

  // Surfaces joined by single spaces.
  std::string joined() const {
    std::string out;
    for (const auto& t : tokens) {
      if (!out.empty()) out.push_back(' ');
      out += t.surface;
    }
    return out;
  }
};

// Whitespace/punctuation split. Closed-set special tokens are matched before
// punctuation so "$URL$" stays atomic; ASCII digit runs are NUMBER.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  seq.source = std::string(text);
  std::size_t pos = 0;
  std::size_t cp_index = 0;
  while (pos < text.size()) {
    const auto [cp, len] = detail::decode_utf8(text, pos);
    if (detail::is_space_cp(cp)) {
      pos += len;
      ++cp_index;
      continue;
    }
    Token tok;
    tok.byte_start = pos;
    tok.char_start = cp_index;
    if (const auto special = special_token_at(text, pos); special > 0) {
      pos += special;
      cp_index += special;  // special tokens are pure ASCII
      tok.kind = TokenKind::SPECIAL_TOKEN;
    } else if (detail::is_word_cp(cp)) {
      bool all_digits = true;
      while (pos < text.size()) {
        const auto d = detail::decode_utf8(text, pos);
        if (!detail::is_word_cp(d.cp)) break;
        all_digits = all_digits && detail::is_ascii_digit(d.cp);
        pos += d.len;
        ++cp_index;
      }
      tok.kind = all_digits ? TokenKind::NUMBER : TokenKind::WORD;
    } else {
      pos += len;
      ++cp_index;
      tok.kind = TokenKind::SYMBOL;
    }
    tok.byte_end = pos;
    tok.char_end = cp_index;
    tok.surface = std::string(text.substr(tok.byte_start, tok.byte_end - tok.byte_start));
    seq.tokens.push_back(std::move(tok));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Pattern detection shared by both preprocessing regimes.

namespace detail {

inline bool iequals_ascii_prefix(std::string_view text, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > text.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = text[pos + i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    if (c != prefix[i]) return false;
  }
  return true;
}

inline bool is_url_terminator(char32_t cp) {
  switch (cp) {
    case U')': case U']': case U'}': case U'>': case U'"': case U'\'':
    case 0x201D: case 0x2019: case 0xBB:
      return true;
    default:
      return is_space_cp(cp);
  }
}

// Length in bytes of the URL starting at `pos`, or 0. Recognizes http(s)://,
// scheme-less www. hosts and t.co shortlinks, also when glued to a preceding
// word; a URL runs to whitespace or a closing bracket/quote.
inline std::size_t url_at(std::string_view text, std::size_t pos) {
  std::size_t prefix = 0;
  if (iequals_ascii_prefix(text, pos, "https://")) {
    prefix = 8;
  } else if (iequals_ascii_prefix(text, pos, "http://")) {
    prefix = 7;
  } else if (iequals_ascii_prefix(text, pos, "www.") && pos + 4 < text.size() &&
             std::isalnum(static_cast<unsigned char>(text[pos + 4]))) {
    prefix = 4;
  } else if (iequals_ascii_prefix(text, pos, "t.co/")) {
    prefix = 5;
  }
  if (prefix == 0) return 0;
  std::size_t end = pos + prefix;
  while (end < text.size()) {
    const auto d = decode_utf8(text, end);
    if (is_url_terminator(d.cp)) break;
    end += d.len;
  }
  return end - pos;
}

inline constexpr std::size_t kMaxHandleLength = 15;

inline bool is_handle_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// '@' plus up to 15 handle characters, or 0 when '@' introduces nothing.
inline std::size_t mention_at(std::string_view text, std::size_t pos) {
  if (text[pos] != '@') return 0;
  std::size_t n = 0;
  while (n < kMaxHandleLength && pos + 1 + n < text.size() && is_handle_char(text[pos + 1 + n])) ++n;
  return n == 0 ? 0 : n + 1;
}

// Byte length of the word run starting at `pos`.
inline std::size_t word_run_at(std::string_view text, std::size_t pos) {
  std::size_t end = pos;
  while (end < text.size()) {
    const auto d = decode_utf8(text, end);
    if (!is_word_cp(d.cp)) break;
    end += d.len;
  }
  return end - pos;
}

// '#' plus its tag word, or 0 when '#' is not followed by a word character.
inline std::size_t hashtag_at(std::string_view text, std::size_t pos) {
  if (text[pos] != '#' || pos + 1 >= text.size()) return 0;
  const auto word = word_run_at(text, pos + 1);
  return word == 0 ? 0 : word + 1;
}

inline void push_space(std::string& out) {
  if (!out.empty() && out.back() != ' ') out.push_back(' ');
}

}  // namespace detail

// ASCII emoticons (":)", ":-(", "xD", ...) removed as whole whitespace-
// delimited chunks by extended_clean.
class EmoticonLexicon {
 public:
  EmoticonLexicon() = default;
  explicit EmoticonLexicon(std::set<std::string> entries) : entries_(std::move(entries)) {}

  static EmoticonLexicon load(const std::filesystem::path& path) {
    const auto lines = detail::read_list_file(path);
    return EmoticonLexicon(std::set<std::string>(lines.begin(), lines.end()));
  }

  // The lexicon shipped in the data directory; a small built-in core when
  // the data file cannot be found.
  static const EmoticonLexicon& shipped() {
    static const EmoticonLexicon lexicon = [] {
      try {
        return load(data_path("emoticons.txt"));
      } catch (const Error&) {
        return EmoticonLexicon({":)", ":-)", ":(", ":-(", ";)", ";-)", ":D", ":-D", "xD", "XD",
                                ":P", ":-P", ":p", ":'(", "<3", ":/", ":-/", ":o", ":O"});
      }
    }();
    return lexicon;
  }

  bool contains(std::string_view s) const { return entries_.contains(std::string(s)); }
  std::size_t size() const { return entries_.size(); }
  const std::set<std::string>& entries() const { return entries_; }

 private:
  std::set<std::string> entries_;
};

namespace detail {

inline std::string baseline_pass(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 16);
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (const auto special = special_token_at(text, pos); special > 0) {
      out.append(text.substr(pos, special));
      pos += special;
      continue;
    }
    if (const auto url = url_at(text, pos); url > 0) {
      out.append(kUrlToken);
      pos += url;
      continue;
    }
    if (hashtag_at(text, pos) > 0) {
      push_space(out);
      out.append(kHashtagToken);
      out.push_back(' ');
      ++pos;
      continue;
    }
    const auto [cp, len] = decode_utf8(text, pos);
    if (cp == 0xFFFD && len == 1) {
      out.push_back(text[pos]);
    } else {
      append_utf8(out, to_lower_cp(cp));
    }
    pos += len;
  }
  return out;
}

// Replaces every removable element by a single space, in the order
// URLs -> mentions -> hashtags -> emoji, then collapses whitespace.
inline std::string extended_pass(std::string_view text, const EmoticonLexicon& lexicon) {
  std::string stage;
  stage.reserve(text.size());
  // URLs and pre-substituted $URL$ / $HASHTAG$ placeholders.
  for (std::size_t pos = 0; pos < text.size();) {
    if (const auto url = url_at(text, pos); url > 0) {
      stage.push_back(' ');
      pos += url;
    } else if (text.substr(pos, kUrlToken.size()) == kUrlToken) {
      stage.push_back(' ');
      pos += kUrlToken.size();
    } else if (text.substr(pos, kHashtagToken.size()) == kHashtagToken) {
      stage.push_back(' ');
      pos += kHashtagToken.size();
    } else {
      stage.push_back(text[pos++]);
    }
  }
  std::string next;
  next.reserve(stage.size());
  for (std::size_t pos = 0; pos < stage.size();) {
    if (const auto m = mention_at(stage, pos); m > 0) {
      next.push_back(' ');
      pos += m;
    } else {
      next.push_back(stage[pos++]);
    }
  }
  stage.swap(next);
  next.clear();
  for (std::size_t pos = 0; pos < stage.size();) {
    if (const auto h = hashtag_at(stage, pos); h > 0) {
      next.push_back(' ');
      pos += h;
    } else {
      next.push_back(stage[pos++]);
    }
  }
  stage.swap(next);
  next.clear();
  for (std::size_t pos = 0; pos < stage.size();) {
    const auto [cp, len] = decode_utf8(stage, pos);
    if (is_emoji_cp(cp)) {
      next.push_back(' ');
    } else {
      next.append(stage, pos, len);
    }
    pos += len;
  }
  // Whitespace collapse, dropping ASCII emoticon chunks on the way.
  std::string out;
  out.reserve(next.size());
  std::size_t pos = 0;
  while (pos < next.size()) {
    auto d = decode_utf8(next, pos);
    if (is_space_cp(d.cp)) {
      pos += d.len;
      continue;
    }
    const std::size_t start = pos;
    while (pos < next.size()) {
      d = decode_utf8(next, pos);
      if (is_space_cp(d.cp)) break;
      pos += d.len;
    }
    const std::string_view chunk(next.data() + start, pos - start);
    if (lexicon.contains(chunk)) continue;
    // Glued emoticons that split off as their own token ("news,xD").
    std::string kept;
    std::size_t copied = 0;
    for (const auto& t : tokenize(chunk).tokens) {
      if (!lexicon.contains(t.surface)) continue;
      kept.append(chunk, copied, t.byte_start - copied);
      copied = t.byte_end;
    }
    kept.append(chunk, copied);
    if (kept.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(kept);
  }
  return out;
}

}  // namespace detail

// Lowercases, turns URLs into $URL$ and each '#' marker into "$HASHTAG$ "
// keeping the tag word. Closed-set special tokens pass through untouched.
inline std::string baseline_normalize(std::string_view text) {
  std::string current(text);
  for (int round = 0; round < 8; ++round) {
    auto next = detail::baseline_pass(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

// Removes URLs (and $URL$/$HASHTAG$ placeholders), @-mentions with their
// handle, hashtags with their tag word, emoji and ASCII emoticons; collapses
// whitespace. Case is preserved. Applied until nothing changes, since a
// removal can splice a new pattern together.
inline std::string extended_clean(std::string_view text,
                                  const EmoticonLexicon& lexicon = EmoticonLexicon::shipped()) {
  std::string current = detail::extended_pass(text, lexicon);
  while (true) {
    auto next = detail::extended_pass(current, lexicon);
    if (next == current) return current;
    current = std::move(next);
  }
}

}  // namespace debias
