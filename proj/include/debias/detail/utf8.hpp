#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace debias::detail {

// One decoded code point and the number of bytes it occupied.
struct Decoded {
  char32_t cp;
  std::size_t len;
};

// Invalid or truncated sequences decode to U+FFFD consuming a single byte.
inline Decoded decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (pos + len > s.size()) return {0xFFFD, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_space_cp(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Pictographic emoji plus the joiners/selectors that glue emoji sequences.
inline bool is_emoji_cp(char32_t cp) {
  return (cp >= 0x1F600 && cp <= 0x1F64F) ||  // emoticons
         (cp >= 0x1F300 && cp <= 0x1F5FF) ||  // misc symbols & pictographs
         (cp >= 0x1F680 && cp <= 0x1F6FF) ||  // transport & map
         (cp >= 0x1F900 && cp <= 0x1F9FF) ||  // supplemental symbols
         (cp >= 0x1FA70 && cp <= 0x1FAFF) ||  // symbols & pictographs ext-A
         (cp >= 0x1F1E6 && cp <= 0x1F1FF) ||  // regional indicators
         (cp >= 0x2600 && cp <= 0x26FF) ||    // misc symbols
         (cp >= 0x2700 && cp <= 0x27BF) ||    // dingbats
         (cp >= 0xFE00 && cp <= 0xFE0F) ||    // variation selectors
         (cp >= 0xE0020 && cp <= 0xE007F) ||  // tag sequences
         cp == 0x200D || cp == 0x20E3;
}

// Letters, digits, underscore and any non-ASCII code point that is not
// whitespace, punctuation-like or emoji.
inline bool is_word_cp(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
           (cp >= U'0' && cp <= U'9') || cp == U'_';
  }
  if (is_space_cp(cp) || is_emoji_cp(cp)) return false;
  if (cp >= 0x80 && cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, arrows, math
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp == 0xFFFD) return false;
  return true;
}

inline bool is_ascii_digit(char32_t cp) { return cp >= U'0' && cp <= U'9'; }

// Lowercases ASCII, Latin-1 and Latin Extended-A letters.
inline char32_t to_lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x131 &&
      cp != 0x138 && cp != 0x149 && cp != 0x17F) {
    // Latin Extended-A pairs are (even=upper, odd=lower) except one shifted run.
    const bool shifted = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    if (shifted) return (cp % 2 == 1) ? cp + 1 : cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;  // Greek
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;                 // Cyrillic
  return cp;
}

inline bool is_upper_cp(char32_t cp) { return to_lower_cp(cp) != cp; }

inline std::string to_lower_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    const auto [cp, len] = decode_utf8(s, pos);
    if (cp < 0x80) {
      out.push_back(static_cast<char>(to_lower_cp(cp)));
    } else if (cp == 0xFFFD && len == 1) {
      out.push_back(s[pos]);
    } else {
      append_utf8(out, to_lower_cp(cp));
    }
    pos += len;
  }
  return out;
}

inline std::size_t count_code_points(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < s.size(); ++n) pos += decode_utf8(s, pos).len;
  return n;
}

}  // namespace debias::detail
