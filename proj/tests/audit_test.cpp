#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "debias/audit.hpp"
#include "debias/textprep.hpp"
#include "support.hpp"

namespace {

using namespace debias;

const AuditLexicons& lex() { return AuditLexicons::shipped(); }

GlobalImportance global_of(std::vector<std::pair<std::string, double>> sums) {
  GlobalImportance g;
  for (auto& [token, s] : sums) g.entries.push_back({token, 1, s, s, 0.0});
  return g;
}

TEST(CategorizeToken, Examples) {
  EXPECT_EQ(categorize_token("$URL$", lex()), TokenCategory::URL_ARTIFACT);
  EXPECT_EQ(categorize_token("rwanda", lex()), TokenCategory::ENTITY_LOC);
  EXPECT_EQ(categorize_token("reported", lex()), TokenCategory::LEXICAL);
}

TEST(CategorizeToken, PrecedenceOrder) {
  EXPECT_EQ(categorize_token("$HASHTAG$", lex()), TokenCategory::HASHTAG_ARTIFACT);
  EXPECT_EQ(categorize_token("$per$", lex()), TokenCategory::ENTITY_PER);
  EXPECT_EQ(categorize_token("$ORG$", lex()), TokenCategory::ENTITY_ORG);
  EXPECT_EQ(categorize_token("$LOC$", lex()), TokenCategory::ENTITY_LOC);
  EXPECT_EQ(categorize_token("$MISC$", lex()), TokenCategory::ENTITY_MISC);
  EXPECT_EQ(categorize_token("😷", lex()), TokenCategory::EMOJI);
  EXPECT_EQ(categorize_token(":)", lex()), TokenCategory::EMOJI);
  EXPECT_EQ(categorize_token("@who", lex()), TokenCategory::MENTION_ARTIFACT);
  EXPECT_EQ(categorize_token("#covid", lex()), TokenCategory::HASHTAG_ARTIFACT);
  EXPECT_EQ(categorize_token("$", lex()), TokenCategory::SPECIAL_SYMBOL);
  EXPECT_EQ(categorize_token("#", lex()), TokenCategory::SPECIAL_SYMBOL);
  EXPECT_EQ(categorize_token("...", lex()), TokenCategory::SPECIAL_SYMBOL);
  EXPECT_EQ(categorize_token("99031", lex()), TokenCategory::NUMBER);
  EXPECT_EQ(categorize_token("netflix", lex()), TokenCategory::ENTITY_ORG);
  EXPECT_EQ(categorize_token("the", lex()), TokenCategory::STOPWORD);
  EXPECT_EQ(categorize_token("who", lex()), TokenCategory::STOPWORD);
  EXPECT_EQ(categorize_token("WHO", lex()), TokenCategory::ENTITY_ORG);
}

TEST(CategorizeToken, TotalOverFuzzedTokens) {
  std::mt19937_64 gen(4);
  const std::set<TokenCategory> all(kAllTokenCategories.begin(), kAllTokenCategories.end());
  for (int i = 0; i < 500; ++i) {
    for (const auto& t : tokenize(testing_support::fuzz_text(gen)).tokens) {
      const auto c = categorize_token(t.surface, lex());
      EXPECT_TRUE(all.contains(c));
      EXPECT_EQ(categorize_token(t.surface, lex()), c);
    }
  }
}

TEST(FlagSpurious, MassFractionExample) {
  const auto g = global_of({{"$URL$", 5}, {"cdc", 3}, {"deaths", 2}});
  const auto r = flag_spurious(g, 3, {TokenCategory::URL_ARTIFACT, TokenCategory::ENTITY_ORG}, lex());
  ASSERT_EQ(r.flagged.size(), 2U);
  EXPECT_EQ(r.flagged[0].token, "$URL$");
  EXPECT_EQ(r.flagged[0].rank, 1U);
  EXPECT_EQ(r.flagged[1].token, "cdc");
  EXPECT_EQ(r.flagged[1].category, TokenCategory::ENTITY_ORG);
  EXPECT_DOUBLE_EQ(r.spurious_mass_fraction, 0.8);
  EXPECT_EQ(r.inspected.size(), 3U);
}

TEST(FlagSpurious, OnlyLexicalTokens) {
  const auto g = global_of({{"reported", 3}, {"deaths", 2}, {"vaccine", 1}});
  const auto r = flag_spurious(g, 3, default_spurious_categories(), lex());
  EXPECT_TRUE(r.flagged.empty());
  EXPECT_EQ(r.spurious_mass_fraction, 0.0);
}

TEST(FlagSpurious, StopwordsNotSpuriousByDefault) {
  const auto g = global_of({{"the", 9}, {"$URL$", 1}});
  const auto r = flag_spurious(g, 2, default_spurious_categories(), lex());
  EXPECT_DOUBLE_EQ(r.spurious_mass_fraction, 0.1);
}

TEST(FlagSpurious, Errors) {
  try {
    flag_spurious(GlobalImportance{}, 3, default_spurious_categories(), lex());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EMPTY_INPUT);
  }
  try {
    flag_spurious(global_of({{"a", 1}}), 0, default_spurious_categories(), lex());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::INVALID_CONFIG);
  }
}

TEST(FlagSpurious, MonotoneInTopK) {
  std::mt19937_64 gen(12);
  std::vector<std::pair<std::string, double>> sums;
  const std::vector<std::string> pool = {"$URL$", "cdc", "rwanda", "the", "deaths", "1121", "$", "@x", "#y",
                                         "vaccine", "netflix", "😷", "$PER$", "news", "bolivia", "of"};
  for (const auto& t : pool) sums.emplace_back(t, std::uniform_real_distribution<double>(0, 1)(gen));
  const auto g = global_of(sums);
  std::set<std::string> previous;
  for (std::size_t k = 1; k <= pool.size() + 2; ++k) {
    const auto r = flag_spurious(g, k, default_spurious_categories(), lex());
    std::set<std::string> now;
    for (const auto& f : r.flagged) now.insert(f.token);
    EXPECT_TRUE(std::includes(now.begin(), now.end(), previous.begin(), previous.end())) << k;
    EXPECT_GE(r.spurious_mass_fraction, 0.0);
    EXPECT_LE(r.spurious_mass_fraction, 1.0);
    for (std::size_t i = 1; i < r.flagged.size(); ++i) EXPECT_LT(r.flagged[i - 1].rank, r.flagged[i].rank);
    previous = now;
  }
}

TEST(FlagSpurious, CleanedTextHasNoSurfaceArtifacts) {
  std::mt19937_64 gen(21);
  for (int i = 0; i < 1000; ++i) {
    const auto cleaned = extended_clean(testing_support::fuzz_text(gen));
    for (const auto& t : tokenize(cleaned).tokens) {
      const auto c = categorize_token(t.surface, lex());
      EXPECT_NE(c, TokenCategory::URL_ARTIFACT) << t.surface;
      EXPECT_NE(c, TokenCategory::MENTION_ARTIFACT) << t.surface;
      EXPECT_NE(c, TokenCategory::HASHTAG_ARTIFACT) << t.surface;
      EXPECT_NE(c, TokenCategory::EMOJI) << t.surface;
    }
  }
}

TEST(AuditReport, JsonCarriesThresholdsAndMarkdownRenders) {
  const auto r = flag_spurious(global_of({{"$URL$", 5}, {"cdc", 3}, {"deaths", 2}}), 3,
                               default_spurious_categories(), lex());
  const auto j = to_json(r);
  EXPECT_EQ(j["thresholds"]["top_k"], 3);
  EXPECT_TRUE(j.contains("spurious_mass_fraction"));
  EXPECT_TRUE(j.contains("metric_definition"));
  const auto md = render_audit_markdown(r);
  EXPECT_NE(md.find("$URL$"), std::string::npos);
  EXPECT_NE(md.find("URL_ARTIFACT"), std::string::npos);
}

}  // namespace
