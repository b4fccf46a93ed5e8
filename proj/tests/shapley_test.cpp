#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "debias/shapley.hpp"
#include "support.hpp"

namespace {

using namespace debias;
using testing_support::RandomGame;

// Worst |sampled - exact| / std_error for the seeded eight-token game below.
constexpr double kEightTokenWorstZ = 0.62530952554227093;

// f(S) = sum of w[token] over S, with w keyed by token surface.
FunctionScorer additive(std::map<std::string, double> w) {
  return FunctionScorer([w](std::span<const std::string_view> tokens) {
    double s = 0.0;
    for (auto t : tokens) s += w.at(std::string(t));
    return s;
  });
}

TEST(ExplainExact, ConstantScorerIsAllDummies) {
  const FunctionScorer constant([](std::span<const std::string_view>) { return 0.5; });
  const auto e = explain_exact(constant, {"a", "b", "c"});
  EXPECT_EQ(e.phi, (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(e.base_value, 0.5);
  EXPECT_EQ(e.full_value, 0.5);
  EXPECT_EQ(e.estimator, Estimator::EXACT);
  EXPECT_EQ(e.n_permutations, 0U);
  EXPECT_EQ(e.std_error, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(ExplainExact, SymmetricTwoPlayerGame) {
  const FunctionScorer game([](std::span<const std::string_view> s) { return 0.5 * static_cast<double>(s.size()); });
  const auto e = explain_exact(game, {"x", "y"});
  EXPECT_DOUBLE_EQ(e.phi[0], 0.5);
  EXPECT_DOUBLE_EQ(e.phi[1], 0.5);
}

TEST(ExplainExact, AdditiveScorerRecoversWeights) {
  const auto f = additive({{"a", 0.2}, {"b", -0.1}, {"c", 0.4}});
  const auto e = explain_exact(f, {"a", "b", "c"});
  EXPECT_NEAR(e.phi[0], 0.2, 1e-12);
  EXPECT_NEAR(e.phi[1], -0.1, 1e-12);
  EXPECT_NEAR(e.phi[2], 0.4, 1e-12);
}

TEST(ExplainExact, TooManyTokens) {
  const auto f = additive({{"a", 1.0}});
  try {
    explain_exact(f, std::vector<std::string>(16, "a"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TOO_MANY_TOKENS);
    EXPECT_NE(std::string(e.what()).find("explain_sampled"), std::string::npos);
  }
  EXPECT_NO_THROW(explain_exact(f, std::vector<std::string>(16, "a"), 16));
}

TEST(ExplainExact, EmptyInput) {
  const auto f = additive({});
  const auto e = explain_exact(f, {});
  EXPECT_TRUE(e.phi.empty());
  EXPECT_EQ(e.base_value, 0.0);
}

TEST(ExplainExact, DeletionMaskingScoresOrderedSubsequences) {
  std::vector<std::string> seen;
  const FunctionScorer spy([&](std::span<const std::string_view> tokens) {
    std::string s;
    for (auto t : tokens) s += t;
    seen.push_back(s);
    return 0.0;
  });
  explain_exact(spy, {"a", "b", "c"});
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, (std::vector<std::string>{"", "a", "ab", "abc", "ac", "b", "bc", "c"}));
}

TEST(ExplainExact, MatchesNaiveOracle) {
  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 40; ++trial) {
    const auto game = testing_support::random_game(gen, 6);
    const auto tokens = testing_support::random_tokens(gen, 1 + trial % 9, 6);
    const FunctionScorer f(game);
    const auto e = explain_exact(f, tokens);
    const auto oracle = testing_support::naive_shapley(game, tokens);
    for (std::size_t i = 0; i < tokens.size(); ++i) EXPECT_NEAR(e.phi[i], oracle[i], 1e-9);
    EXPECT_LE(e.efficiency_gap(), 1e-9);
  }
}

TEST(ExplainSampled, ConstantScorerGivesExactZeros) {
  const FunctionScorer constant([](std::span<const std::string_view>) { return 0.3; });
  const auto e = explain_sampled(constant, {"a", "b", "c", "d"}, 10, 5);
  for (double p : e.phi) EXPECT_EQ(p, 0.0);
  EXPECT_EQ(e.estimator, Estimator::PERMUTATION);
  EXPECT_EQ(e.n_permutations, 10U);
}

TEST(ExplainSampled, AdditiveScorerExactWithTwoPermutations) {
  const auto f = additive({{"a", 0.2}, {"b", -0.1}, {"c", 0.4}});
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto e = explain_sampled(f, {"a", "b", "c"}, 2, seed);
    EXPECT_NEAR(e.phi[0], 0.2, 1e-12);
    EXPECT_NEAR(e.phi[1], -0.1, 1e-12);
    EXPECT_NEAR(e.phi[2], 0.4, 1e-12);
  }
}

TEST(ExplainSampled, RejectsOddOrTooFewPermutations) {
  const auto f = additive({{"a", 1.0}});
  for (std::size_t n : {0U, 1U, 3U}) {
    try {
      explain_sampled(f, {"a"}, n, 1);
      FAIL() << n;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::INVALID_CONFIG);
    }
  }
}

TEST(ExplainSampled, DeterministicForSeed) {
  std::mt19937_64 gen(8);
  const FunctionScorer f(testing_support::random_game(gen, 5));
  const auto tokens = testing_support::random_tokens(gen, 9, 5);
  const auto a = explain_sampled(f, tokens, 50, 3);
  const auto b = explain_sampled(f, tokens, 50, 3);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_NE(explain_sampled(f, tokens, 50, 4).phi, a.phi);
}

// Seeded 8-token non-additive game: 2,000 permutations with seed 7 stay
// within 3 standard errors of the exact values on every coordinate.
TEST(ExplainSampled, EightTokenGameWithinThreeStandardErrors) {
  std::mt19937_64 gen(7);
  const FunctionScorer f(testing_support::random_game(gen, 8));
  const auto tokens = testing_support::random_tokens(gen, 8, 8);
  const auto exact = explain_exact(f, tokens);
  const auto sampled = explain_sampled(f, tokens, 2000, 7);
  double worst = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    ASSERT_GT(sampled.std_error[i], 0.0);
    worst = std::max(worst, std::abs(sampled.phi[i] - exact.phi[i]) / sampled.std_error[i]);
  }
  EXPECT_LE(worst, 3.0);
  EXPECT_NEAR(worst, kEightTokenWorstZ, 1e-6);
}

TEST(Explain, DispatchesOnLimit) {
  const auto f = additive({{"a", 1.0}});
  EXPECT_EQ(explain(f, {"a", "a"}, 2, 4, 1).estimator, Estimator::EXACT);
  EXPECT_EQ(explain(f, {"a", "a", "a"}, 2, 4, 1).estimator, Estimator::PERMUTATION);
}

TEST(AggregateGlobal, ArithmeticExample) {
  Explanation e;
  e.tokens = {"a", "b", "a"};
  e.phi = {0.1, -0.2, 0.3};
  e.std_error = {0, 0, 0};
  const auto g = aggregate_global({e}, AggregateMode::SUM);
  ASSERT_EQ(g.size(), 2U);
  EXPECT_EQ(g.entries[0].token, "a");
  EXPECT_NEAR(g.entries[0].sum_abs, 0.4, 1e-12);
  EXPECT_NEAR(g.entries[0].mean_abs, 0.2, 1e-12);
  EXPECT_EQ(g.entries[0].count, 2U);
  EXPECT_NEAR(g.entries[0].class_direction, 0.2, 1e-12);
  EXPECT_EQ(g.entries[1].token, "b");
  EXPECT_NEAR(g.entries[1].sum_abs, 0.2, 1e-12);
  EXPECT_NEAR(g.entries[1].mean_abs, 0.2, 1e-12);
  EXPECT_EQ(g.entries[1].count, 1U);
}

TEST(AggregateGlobal, ZeroPhiSortsLexicographically) {
  Explanation e;
  e.tokens = {"zeta", "Alpha", "mid", "$URL$"};
  e.phi = {0, 0, 0, 0};
  e.std_error = e.phi;
  const auto g = aggregate_global({e}, AggregateMode::MEAN);
  std::vector<std::string> order;
  for (const auto& t : g.entries) order.push_back(t.token);
  EXPECT_EQ(order, (std::vector<std::string>{"$URL$", "alpha", "mid", "zeta"}));
}

TEST(AggregateGlobal, EmptyInput) {
  try {
    aggregate_global({}, AggregateMode::SUM);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EMPTY_INPUT);
  }
}

TEST(AggregateGlobal, SumEqualsMeanTimesCount) {
  std::mt19937_64 gen(1);
  std::vector<Explanation> exps;
  for (int d = 0; d < 20; ++d) {
    const FunctionScorer f(testing_support::random_game(gen, 6));
    exps.push_back(explain_exact(f, testing_support::random_tokens(gen, 6, 6)));
  }
  for (auto mode : {AggregateMode::MEAN, AggregateMode::SUM}) {
    const auto g = aggregate_global(exps, mode);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& t = g.entries[i];
      EXPECT_GE(t.count, 1U);
      EXPECT_NEAR(t.sum_abs, t.mean_abs * static_cast<double>(t.count), 1e-12);
      if (i > 0) {
        const auto& p = g.entries[i - 1];
        EXPECT_GE(mode == AggregateMode::SUM ? p.sum_abs : p.mean_abs,
                  mode == AggregateMode::SUM ? t.sum_abs : t.mean_abs);
      }
    }
  }
}

TEST(Serialization, ExplanationJsonlRoundTrip) {
  std::mt19937_64 gen(2);
  const FunctionScorer f(testing_support::random_game(gen, 4));
  std::vector<Explanation> exps{explain_exact(f, {"t0", "t1"}, 15, "d1"),
                                explain_sampled(f, {"t2", "t3", "t1"}, 6, 9, "d2")};
  std::stringstream buf;
  write_explanations(exps, buf);
  const auto line = buf.str().substr(0, buf.str().find('\n'));
  for (const char* key : {"\"id\"", "\"tokens\"", "\"phi\"", "\"base_value\"", "\"full_value\"", "\"estimator\"",
                          "\"n_permutations\"", "\"std_error\""}) {
    EXPECT_NE(line.find(key), std::string::npos) << key;
  }
  const auto back = read_explanations(buf);
  ASSERT_EQ(back.size(), 2U);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].doc_id, exps[i].doc_id);
    EXPECT_EQ(back[i].phi, exps[i].phi);
    EXPECT_EQ(back[i].std_error, exps[i].std_error);
    EXPECT_EQ(back[i].estimator, exps[i].estimator);
  }
}

TEST(Serialization, GlobalCsvRoundTrip) {
  Explanation e;
  e.tokens = {"a,b", "c", "a,b"};
  e.phi = {0.125, -0.3, 1.0 / 3.0};
  e.std_error = {0, 0, 0};
  const auto g = aggregate_global({e}, AggregateMode::SUM);
  std::stringstream buf;
  write_global_csv(g, buf);
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), "token,count,mean_abs,sum_abs,class_direction");
  const auto back = read_global_csv(buf, AggregateMode::SUM);
  ASSERT_EQ(back.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back.entries[i], g.entries[i]);
}

}  // namespace
