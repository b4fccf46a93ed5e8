#pragma once

#include <unistd.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("debias_" + std::string(tag) + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(std::string_view name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, std::string_view content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline fs::path source_dir() { return fs::path(DEBIAS_SOURCE_DIR); }

// Set function over token lists: sigmoid(bias + sum of type weights + pair
// bonuses for co-present types + a penalty on length). Not additive.
struct RandomGame {
  std::map<std::string, double> weight;
  std::map<std::pair<std::string, std::string>, double> pair_bonus;
  double bias = 0.0;
  double length_penalty = 0.0;

  double operator()(std::span<const std::string_view> tokens) const {
    double m = bias - length_penalty * static_cast<double>(tokens.size() * tokens.size());
    std::set<std::string> present;
    for (auto t : tokens) {
      const std::string s(t);
      if (auto it = weight.find(s); it != weight.end()) m += it->second;
      present.insert(s);
    }
    for (const auto& [p, bonus] : pair_bonus) {
      if (present.contains(p.first) && present.contains(p.second)) m += bonus;
    }
    return 1.0 / (1.0 + std::exp(-m));
  }
};

inline RandomGame random_game(std::mt19937_64& gen, std::size_t alphabet) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RandomGame g;
  g.bias = normal(gen) * 0.5;
  g.length_penalty = std::uniform_real_distribution<double>(0.0, 0.05)(gen);
  for (std::size_t i = 0; i < alphabet; ++i) g.weight["t" + std::to_string(i)] = normal(gen);
  for (std::size_t i = 0; i < alphabet; ++i) {
    for (std::size_t j = i + 1; j < alphabet; ++j) {
      if (std::bernoulli_distribution(0.3)(gen)) {
        g.pair_bonus[{"t" + std::to_string(i), "t" + std::to_string(j)}] = normal(gen);
      }
    }
  }
  return g;
}

inline std::vector<std::string> random_tokens(std::mt19937_64& gen, std::size_t n, std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> pick(0, alphabet - 1);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("t" + std::to_string(pick(gen)));
  return out;
}

// Direct weighted-subset Shapley formula with lgamma weights; every coalition
// value is recomputed from scratch.
inline std::vector<double> naive_shapley(const std::function<double(std::span<const std::string_view>)>& f,
                                         const std::vector<std::string>& tokens) {
  const std::size_t n = tokens.size();
  std::vector<double> phi(n, 0.0);
  const auto value = [&](std::uint64_t members) {
    std::vector<std::string_view> sub;
    for (std::size_t k = 0; k < n; ++k) {
      if (members & (std::uint64_t{1} << k)) sub.emplace_back(tokens[k]);
    }
    return f(sub);
  };
  const double log_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
      if (s & (std::uint64_t{1} << i)) continue;
      const auto size = static_cast<double>(__builtin_popcountll(s));
      const double w = std::exp(std::lgamma(size + 1.0) + std::lgamma(static_cast<double>(n) - size) - log_n_fact);
      phi[i] += w * (value(s | (std::uint64_t{1} << i)) - value(s));
    }
  }
  return phi;
}

// Code points of a UTF-8 string (input assumed valid).
inline std::vector<char32_t> code_points(std::string_view s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (int k = 1; k < len && i + k < s.size(); ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline bool in_emoji_ranges(char32_t cp) {
  return (cp >= 0x1F600 && cp <= 0x1F64F) || (cp >= 0x1F300 && cp <= 0x1F5FF) ||
         (cp >= 0x1F680 && cp <= 0x1F6FF) || (cp >= 0x1F900 && cp <= 0x1F9FF) ||
         (cp >= 0x2700 && cp <= 0x27BF) || (cp >= 0x2600 && cp <= 0x26FF) || (cp >= 0xFE00 && cp <= 0xFE0F) ||
         cp == 0x200D;
}

inline bool is_handle_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Describes the first leftover URL, mention, hashtag or emoji, or "".
inline std::string residual_artifact(std::string_view s) {
  std::string lower(s);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (std::string_view needle : {"http://", "https://", "www.", "t.co/", "$url$", "$hashtag$"}) {
    if (lower.find(needle) != std::string::npos) return "url-like '" + std::string(needle) + "'";
  }
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] == '@' && is_handle_char(s[i + 1])) return "mention at byte " + std::to_string(i);
    if (s[i] == '#' && (is_handle_char(s[i + 1]) || static_cast<unsigned char>(s[i + 1]) >= 0x80)) {
      return "hashtag at byte " + std::to_string(i);
    }
  }
  for (char32_t cp : code_points(s)) {
    if (in_emoji_ranges(cp)) return "emoji U+" + std::to_string(static_cast<std::uint32_t>(cp));
  }
  return {};
}

// Random strings from words, URLs, hashtags, mentions, emoji and emoticons.
inline std::string fuzz_text(std::mt19937_64& gen) {
  static const std::vector<std::string> words = {"the", "Vaccine", "deaths", "1121", "Bolivia", "news,", "ok.",
                                                 "señor", "día", "$", "a-b", "x_y", "(see)", "\"quote\"",
                                                 "100%", "e-mail", "bob@example.com", "C#", "$URL$", "$PER$"};
  static const std::vector<std::string> urls = {"https://t.co/Ab3", "http://x.y/z?q=1#f", "www.site.org/p",
                                                "t.co/abc", "HTTPS://EXAMPLE.COM", "https://a.b/@x#y"};
  static const std::vector<std::string> emoji = {"😷", "🙂", "❤️", "👍🏽", "🚀", "🤔", "☀", "✅", "👨‍👩‍👧", "🌍"};
  static const std::vector<std::string> emoticons = {":)", ":-(", ";)", ":D", "xD", "<3"};
  static const std::string handle_chars = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<int> count(0, 14);
  std::uniform_int_distribution<std::size_t> hc(0, handle_chars.size() - 1);
  std::uniform_int_distribution<int> handle_len(1, 20);
  const auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(gen)];
  };
  const auto handle = [&] {
    std::string h;
    for (int i = handle_len(gen); i > 0; --i) h.push_back(handle_chars[hc(gen)]);
    return h;
  };
  std::string out;
  for (int n = count(gen); n > 0; --n) {
    std::string piece;
    switch (kind(gen)) {
      case 0: piece = pick(urls); break;
      case 1: piece = "#" + handle(); break;
      case 2: piece = "@" + handle(); break;
      case 3: piece = pick(emoji); break;
      case 4: piece = pick(emoticons); break;
      case 5: piece = "#" + pick(words); break;
      default: piece = pick(words); break;
    }
    const int glue = std::uniform_int_distribution<int>(0, 5)(gen);
    if (!out.empty()) out += glue == 0 ? "" : glue == 1 ? "  " : glue == 2 ? "\t" : " ";
    out += piece;
  }
  return out;
}

}  // namespace testing_support
