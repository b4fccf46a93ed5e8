#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "debias/classifier.hpp"
#include "debias/corpus.hpp"
#include "debias/detail/random.hpp"
#include "debias/error.hpp"

namespace debias {

enum class Estimator { EXACT, PERMUTATION };

constexpr std::string_view estimator_name(Estimator e) {
  return e == Estimator::EXACT ? "EXACT" : "PERMUTATION";
}

// Coalitions are scored on the subsequence of member tokens (original order
// kept); absent tokens are deleted. The only policy for now.
enum class MaskingPolicy { DELETE };

inline constexpr std::size_t kDefaultExactLimit = 15;
inline constexpr std::size_t kMaxExactLimit = 22;

// Per-occurrence attribution of P(FAKE): positive phi pushes toward FAKE.
struct Explanation {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<double> phi;
  double base_value = 0.0;  // f(empty)
  double full_value = 0.0;  // f(all tokens)
  Estimator estimator = Estimator::EXACT;
  std::size_t n_permutations = 0;
  std::vector<double> std_error;

  // |sum(phi) + base - full|
  double efficiency_gap() const {
    double s = 0.0;
    for (double p : phi) s += p;
    return std::abs(s + base_value - full_value);
  }
};

namespace detail {

// Scores many coalitions (given as index masks over `tokens`) in chunks so
// pipelining scorers can keep requests in flight.
class CoalitionEvaluator {
 public:
  CoalitionEvaluator(const Scorer& scorer, const std::vector<std::string>& tokens)
      : scorer_(scorer), tokens_(tokens) {}

  template <typename MemberFn>
  void evaluate(std::size_t count, MemberFn&& members_of, std::vector<double>& out) {
    static constexpr std::size_t kChunk = 512;
    out.resize(count);
    std::vector<std::vector<std::string_view>> batch;
    for (std::size_t start = 0; start < count; start += kChunk) {
      const std::size_t end = std::min(count, start + kChunk);
      batch.assign(end - start, {});
      for (std::size_t k = start; k < end; ++k) {
        auto& views = batch[k - start];
        members_of(k, [&](std::size_t i) { views.emplace_back(tokens_[i]); });
      }
      const auto scores = scorer_.score_batch(batch);
      std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
    }
  }

 private:
  const Scorer& scorer_;
  const std::vector<std::string>& tokens_;
};

}  // namespace detail

// Exact Shapley values by scoring all 2^n coalitions once:
//   phi_i = sum_{S not containing i} |S|!(n-|S|-1)!/n! * (f(S+i) - f(S))
inline Explanation explain_exact(const Scorer& scorer, std::vector<std::string> tokens,
                                 std::size_t exact_limit = kDefaultExactLimit, std::string doc_id = {}) {
  if (exact_limit > kMaxExactLimit) {
    throw Error(ErrorCode::INVALID_CONFIG, "exact_limit above " + std::to_string(kMaxExactLimit));
  }
  const std::size_t n = tokens.size();
  if (n > exact_limit) {
    throw Error(ErrorCode::TOO_MANY_TOKENS, std::to_string(n) + " tokens exceed the exact limit of " +
                                                std::to_string(exact_limit) + "; use explain_sampled");
  }
  Explanation e;
  e.doc_id = std::move(doc_id);
  e.tokens = std::move(tokens);
  e.estimator = Estimator::EXACT;
  e.phi.assign(n, 0.0);
  e.std_error.assign(n, 0.0);

  const std::size_t masks = std::size_t{1} << n;
  std::vector<double> value;
  detail::CoalitionEvaluator evaluator(scorer, e.tokens);
  evaluator.evaluate(
      masks,
      [](std::size_t mask, auto&& add) {
        for (std::size_t i = 0; mask >> i; ++i) {
          if ((mask >> i) & 1U) add(i);
        }
      },
      value);
  e.base_value = value.front();
  e.full_value = value.back();
  if (n == 0) return e;

  // weight[s] = 1 / (n * C(n-1, s))
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    double binom = 1.0;
    for (std::size_t k = 1; k <= s; ++k) binom = binom * static_cast<double>(n - 1 - s + k) / static_cast<double>(k);
    weight[s] = 1.0 / (static_cast<double>(n) * binom);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < masks; ++mask) {
      if (mask & bit) continue;
      acc += weight[std::popcount(mask)] * (value[mask | bit] - value[mask]);
    }
    e.phi[i] = acc;
  }
  return e;
}

// Permutation-sampling estimate with antithetic pairs (each sampled order is
// also walked in reverse). Each walk's marginals telescope to full - base, so
// efficiency holds for the estimate itself. std_error is the per-player
// sample standard deviation of marginals over sqrt(n_permutations).
inline Explanation explain_sampled(const Scorer& scorer, std::vector<std::string> tokens,
                                   std::size_t n_permutations, std::uint64_t seed, std::string doc_id = {}) {
  if (n_permutations < 2 || n_permutations % 2 != 0) {
    throw Error(ErrorCode::INVALID_CONFIG, "n_permutations must be even and >= 2");
  }
  const std::size_t n = tokens.size();
  Explanation e;
  e.doc_id = std::move(doc_id);
  e.tokens = std::move(tokens);
  e.estimator = Estimator::PERMUTATION;
  e.n_permutations = n_permutations;
  e.phi.assign(n, 0.0);
  e.std_error.assign(n, 0.0);

  detail::CoalitionEvaluator evaluator(scorer, e.tokens);
  std::vector<double> ends;
  evaluator.evaluate(
      2,
      [n](std::size_t which, auto&& add) {
        if (which == 1) {
          for (std::size_t i = 0; i < n; ++i) add(i);
        }
      },
      ends);
  e.base_value = ends[0];
  e.full_value = ends[1];
  if (n == 0) return e;

  detail::Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::vector<double> mean(n, 0.0);
  std::vector<double> m2(n, 0.0);
  std::size_t walks = 0;
  std::vector<double> prefix_values;
  std::vector<char> member(n);

  auto walk = [&](const std::vector<std::size_t>& perm) {
    // Intermediate prefixes of length 1..n-1; the ends are shared.
    evaluator.evaluate(
        n - 1,
        [&](std::size_t k, auto&& add) {
          std::fill(member.begin(), member.end(), 0);
          for (std::size_t p = 0; p <= k; ++p) member[perm[p]] = 1;
          for (std::size_t i = 0; i < n; ++i) {
            if (member[i]) add(i);
          }
        },
        prefix_values);
    ++walks;
    double previous = e.base_value;
    for (std::size_t k = 0; k < n; ++k) {
      const double current = k + 1 < n ? prefix_values[k] : e.full_value;
      const double marginal = current - previous;
      previous = current;
      const auto player = perm[k];
      const double delta = marginal - mean[player];
      mean[player] += delta / static_cast<double>(walks);
      m2[player] += delta * (marginal - mean[player]);
    }
  };

  for (std::size_t p = 0; p < n_permutations / 2; ++p) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    walk(order);
    std::reverse(order.begin(), order.end());
    walk(order);
  }
  const double count = static_cast<double>(walks);
  for (std::size_t i = 0; i < n; ++i) {
    e.phi[i] = mean[i];
    e.std_error[i] = std::sqrt(m2[i] / (count - 1.0)) / std::sqrt(count);
  }
  return e;
}

// Exact when the token count is within `exact_limit`, sampled otherwise.
inline Explanation explain(const Scorer& scorer, std::vector<std::string> tokens, std::size_t exact_limit,
                           std::size_t n_permutations, std::uint64_t seed, std::string doc_id = {}) {
  if (tokens.size() <= exact_limit) return explain_exact(scorer, std::move(tokens), exact_limit, std::move(doc_id));
  return explain_sampled(scorer, std::move(tokens), n_permutations, seed, std::move(doc_id));
}

// ---------------------------------------------------------------------------
// Global aggregation

enum class AggregateMode { MEAN, SUM };

constexpr std::string_view aggregate_mode_name(AggregateMode m) { return m == AggregateMode::MEAN ? "mean" : "sum"; }

struct TokenImportance {
  std::string token;
  std::size_t count = 0;
  double mean_abs = 0.0;
  double sum_abs = 0.0;
  double class_direction = 0.0;  // mean signed phi

  bool operator==(const TokenImportance&) const = default;
};

struct GlobalImportance {
  AggregateMode mode = AggregateMode::SUM;
  std::vector<TokenImportance> entries;  // sorted by the mode, descending

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

// Groups occurrences by case-folded surface (placeholders kept verbatim) and
// ranks by mean or sum of |phi|; ties fall back to lexicographic order.
inline GlobalImportance aggregate_global(const std::vector<Explanation>& explanations, AggregateMode mode) {
  if (explanations.empty()) throw Error(ErrorCode::EMPTY_INPUT, "no explanations to aggregate");
  struct Acc {
    std::size_t count = 0;
    double sum_abs = 0.0;
    double sum = 0.0;
  };
  std::map<std::string, Acc> groups;
  for (const auto& e : explanations) {
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      auto& a = groups[normalize_term(e.tokens[i])];
      ++a.count;
      a.sum_abs += std::abs(e.phi[i]);
      a.sum += e.phi[i];
    }
  }
  GlobalImportance g;
  g.mode = mode;
  g.entries.reserve(groups.size());
  for (const auto& [token, a] : groups) {
    const double n = static_cast<double>(a.count);
    g.entries.push_back({token, a.count, a.sum_abs / n, a.sum_abs, a.sum / n});
  }
  std::stable_sort(g.entries.begin(), g.entries.end(), [mode](const TokenImportance& x, const TokenImportance& y) {
    const double kx = mode == AggregateMode::MEAN ? x.mean_abs : x.sum_abs;
    const double ky = mode == AggregateMode::MEAN ? y.mean_abs : y.sum_abs;
    if (kx != ky) return kx > ky;
    return x.token < y.token;
  });
  return g;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const Explanation& e) {
  nlohmann::ordered_json j;
  j["id"] = e.doc_id;
  j["tokens"] = e.tokens;
  j["phi"] = e.phi;
  j["base_value"] = e.base_value;
  j["full_value"] = e.full_value;
  j["estimator"] = estimator_name(e.estimator);
  j["n_permutations"] = e.n_permutations;
  j["std_error"] = e.std_error;
  return j;
}

inline Explanation explanation_from_json(const nlohmann::json& j) {
  Explanation e;
  try {
    e.doc_id = j.at("id").get<std::string>();
    e.tokens = j.at("tokens").get<std::vector<std::string>>();
    e.phi = j.at("phi").get<std::vector<double>>();
    e.base_value = j.at("base_value").get<double>();
    e.full_value = j.at("full_value").get<double>();
    const auto est = j.at("estimator").get<std::string>();
    if (est != "EXACT" && est != "PERMUTATION") throw Error(ErrorCode::MALFORMED_RECORD, "bad estimator " + est);
    e.estimator = est == "EXACT" ? Estimator::EXACT : Estimator::PERMUTATION;
    e.n_permutations = j.at("n_permutations").get<std::size_t>();
    e.std_error = j.at("std_error").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::MALFORMED_RECORD, ex.what());
  }
  if (e.phi.size() != e.tokens.size() || e.std_error.size() != e.tokens.size()) {
    throw Error(ErrorCode::MALFORMED_RECORD, "explanation '" + e.doc_id + "' has mismatched lengths");
  }
  return e;
}

inline void write_explanations(const std::vector<Explanation>& explanations, std::ostream& out) {
  for (const auto& e : explanations) out << to_json(e).dump() << '\n';
}

inline std::vector<Explanation> read_explanations(std::istream& in) {
  std::vector<Explanation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(explanation_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(lineno) + ": " + e.detail());
    }
  }
  return out;
}

inline void write_global_csv(const GlobalImportance& g, std::ostream& out) {
  out << "token,count,mean_abs,sum_abs,class_direction\n";
  for (const auto& t : g.entries) {
    out << detail::csv_escape(t.token) << ',' << t.count << ',' << fmt::format("{}", t.mean_abs) << ','
        << fmt::format("{}", t.sum_abs) << ',' << fmt::format("{}", t.class_direction) << '\n';
  }
}

// Reads the CSV written above; entries are re-sorted for `mode`.
inline GlobalImportance read_global_csv(std::istream& in, AggregateMode mode = AggregateMode::SUM) {
  std::vector<std::string> fields;
  std::size_t line = 0;
  std::size_t next_line = 1;
  if (!detail::read_csv_record(in, fields, line, next_line) ||
      fields != std::vector<std::string>{"token", "count", "mean_abs", "sum_abs", "class_direction"}) {
    throw Error(ErrorCode::MALFORMED_RECORD, "line 1: expected header token,count,mean_abs,sum_abs,class_direction");
  }
  GlobalImportance g;
  g.mode = mode;
  while (detail::read_csv_record(in, fields, line, next_line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 5) throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": need 5 fields");
    try {
      g.entries.push_back({fields[0], std::stoull(fields[1]), std::stod(fields[2]), std::stod(fields[3]),
                           std::stod(fields[4])});
    } catch (const std::exception&) {
      throw Error(ErrorCode::MALFORMED_RECORD, "line " + std::to_string(line) + ": bad number");
    }
  }
  std::stable_sort(g.entries.begin(), g.entries.end(), [mode](const TokenImportance& x, const TokenImportance& y) {
    const double kx = mode == AggregateMode::MEAN ? x.mean_abs : x.sum_abs;
    const double ky = mode == AggregateMode::MEAN ? y.mean_abs : y.sum_abs;
    if (kx != ky) return kx > ky;
    return x.token < y.token;
  });
  return g;
}

}  // namespace debias
