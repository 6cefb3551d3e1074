#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lamp/evalstats.hpp"
#include "lamp/spanmetrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace lamp;
using evalstats::Condition;
using spanmetrics::LabeledSpan;

namespace {

const EditCategory kCliche = EditCategory::Kind::Cliche;
const EditCategory kExposition = EditCategory::Kind::UnnecessaryRedundantExposition;

/// Character masks: fraction of predicted characters that are also gold,
/// and of those whose covering gold span has the same category.
std::pair<double, double> mask_precision(const std::vector<LabeledSpan>& pred, const std::vector<LabeledSpan>& gold,
                                         std::size_t n) {
  std::vector<int> gold_cat(n, -1);
  for (const auto& g : gold) {
    for (std::size_t i = g.start; i < g.end; ++i) gold_cat[i] = static_cast<int>(g.category.kind());
  }
  std::size_t total = 0, hit = 0, same = 0;
  for (const auto& p : pred) {
    for (std::size_t i = p.start; i < p.end; ++i) {
      ++total;
      if (gold_cat[i] >= 0) ++hit;
      if (gold_cat[i] == static_cast<int>(p.category.kind())) ++same;
    }
  }
  if (total == 0) return {1.0, 1.0};
  return {static_cast<double>(hit) / static_cast<double>(total), static_cast<double>(same) / static_cast<double>(total)};
}

std::vector<LabeledSpan> random_spans(std::mt19937_64& rng, std::size_t n) {
  std::vector<LabeledSpan> out;
  std::size_t pos = rng() % 5;
  while (pos + 1 < n) {
    std::size_t len = 1 + rng() % 8;
    std::size_t end = std::min(n, pos + len);
    out.push_back({pos, end, rng() % 2 ? kCliche : kExposition});
    pos = end + rng() % 6;
  }
  return out;
}

}  // namespace

// ---- span precision ---------------------------------------------------------------

TEST(SpanMetrics, WorkedExampleTwoSystems) {
  auto gold = load_corpus((fixtures::data_dir() / "worked_example/gold.jsonl").string());
  auto s1 = load_corpus((fixtures::data_dir() / "worked_example/system1.jsonl").string());
  auto s2 = load_corpus((fixtures::data_dir() / "worked_example/system2.jsonl").string());
  auto r1 = spanmetrics::corpus_precision(s1, gold);
  auto r2 = spanmetrics::corpus_precision(s2, gold);
  EXPECT_DOUBLE_EQ(r1.mean_general, 58.0 / 85.0);
  EXPECT_DOUBLE_EQ(r1.mean_categorical, 21.0 / 85.0);
  EXPECT_DOUBLE_EQ(r2.mean_general, 1.0);
  EXPECT_DOUBLE_EQ(r2.mean_categorical, 11.0 / 48.0);
  // Published two-decimal figures.
  EXPECT_NEAR(r1.mean_general, 0.68, 0.005);
  EXPECT_NEAR(r1.mean_categorical, 0.25, 0.005);
  EXPECT_NEAR(r2.mean_categorical, 0.23, 0.005);
}

TEST(SpanMetrics, MatchesCharacterMaskOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 10 + rng() % 60;
    auto pred = random_spans(rng, n);
    auto gold = random_spans(rng, n);
    auto r = spanmetrics::precision(pred, gold, n);
    auto [g, c] = mask_precision(pred, gold, n);
    EXPECT_DOUBLE_EQ(r.general, g);
    EXPECT_DOUBLE_EQ(r.categorical, c);
  }
}

TEST(SpanMetrics, EmptyPredictionIsVacuouslyPrecise) {
  auto r = spanmetrics::precision({}, {{0, 4, kCliche}}, 10);
  EXPECT_EQ(r.general, 1.0);
  EXPECT_EQ(r.predicted_chars, 0u);
}

TEST(SpanMetrics, RejectsInvalidSpans) {
  EXPECT_THROW(spanmetrics::precision({{3, 3, kCliche}}, {}, 10), spanmetrics::SpanError);
  EXPECT_THROW(spanmetrics::precision({{3, 11, kCliche}}, {}, 10), spanmetrics::SpanError);
  EXPECT_THROW(spanmetrics::precision({}, {{0, 5, kCliche}, {4, 6, kCliche}}, 10), spanmetrics::SpanError);
}

TEST(SpanMetrics, PairwiseAgreementAveragesOrderedPairs) {
  std::map<std::string, std::vector<LabeledSpan>> ann = {{"a", {{0, 10, kCliche}}}, {"b", {{5, 10, kCliche}}}};
  auto r = spanmetrics::pairwise_agreement(ann, 20);
  // a as prediction: 5/10; b as prediction: 5/5.
  EXPECT_DOUBLE_EQ(r.general, 0.75);
  EXPECT_EQ(r.ordered_pairs, 2u);
  EXPECT_THROW(spanmetrics::pairwise_agreement({{"a", {}}}, 20), spanmetrics::SpanError);
}

TEST(SpanMetrics, CorpusPrecisionNeedsMatchingGold) {
  auto gold = load_corpus((fixtures::data_dir() / "worked_example/gold.jsonl").string());
  auto other = gold;
  other[0].record.id = "elsewhere";
  EXPECT_THROW(spanmetrics::corpus_precision(other, gold), spanmetrics::SpanError);
}

// ---- Kendall's W ----------------------------------------------------------------------

TEST(EvalStats, KendallsWKnownValues) {
  EXPECT_DOUBLE_EQ(evalstats::kendalls_w({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}), 1.0);
  EXPECT_DOUBLE_EQ(evalstats::kendalls_w({{1, 2, 3}, {3, 2, 1}}), 0.0);
  EXPECT_DOUBLE_EQ(evalstats::kendalls_w({{1, 2, 3}, {2, 3, 1}, {3, 1, 2}}), 0.0);
  // Rank sums 5, 6, 7: S = 2, W = 24/216.
  EXPECT_DOUBLE_EQ(evalstats::kendalls_w({{1, 2, 3}, {1, 2, 3}, {3, 2, 1}}), 24.0 / 216.0);
  // Rank sums 4, 5, 9: S = 14, W = 12*14 / (9*24) = 7/9.
  EXPECT_DOUBLE_EQ(evalstats::kendalls_w({{1, 2, 3}, {1, 2, 3}, {2, 1, 3}}), 7.0 / 9.0);
  EXPECT_THROW(evalstats::kendalls_w({{1, 1, 3}, {1, 2, 3}}), evalstats::StatsError);
  EXPECT_THROW(evalstats::kendalls_w({{1, 2, 3}}), evalstats::StatsError);
}

TEST(EvalStats, KendallsWMatchesSpearmanOracleOnEveryThreeJudgeMatrix) {
  std::vector<std::vector<int>> perms;
  std::vector<int> p = {1, 2, 3};
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  for (const auto& a : perms) {
    for (const auto& b : perms) {
      for (const auto& c : perms) {
        std::vector<std::vector<int>> m = {a, b, c};
        ASSERT_NEAR(evalstats::kendalls_w(m), oracle::kendalls_w(m), 1e-12);
      }
    }
  }
}

TEST(EvalStats, MeanAgreementIsPerTriplet) {
  auto js = fixtures::ranked_judgments();
  auto rep = evalstats::mean_agreement(js);
  EXPECT_EQ(rep.per_triplet_w.size(), 200u);
  EXPECT_EQ(rep.n_judgments, 600u);
  double sum = 0.0;
  for (const auto& [tid, w] : rep.per_triplet_w) sum += w;
  EXPECT_DOUBLE_EQ(rep.mean_w, sum / 200.0);
  EXPECT_GE(rep.mean_w, 0.0);
  EXPECT_LE(rep.mean_w, 1.0);
}

// ---- average ranks ---------------------------------------------------------------------

TEST(EvalStats, AverageRanksOnRankedFixture) {
  auto ranks = evalstats::average_ranks(fixtures::ranked_judgments());
  EXPECT_NEAR(ranks[Condition::LLMGenerated], 764.0 / 300.0, 1e-12);
  EXPECT_NEAR(ranks[Condition::WriterEdited], 440.0 / 300.0, 1e-12);
  EXPECT_NEAR(ranks[Condition::LLMEditedOracle], 596.0 / 300.0, 1e-12);
  EXPECT_NEAR(ranks[Condition::LLMEditedFull], 596.0 / 300.0, 1e-12);
  // Published figures, two decimals.
  EXPECT_NEAR(ranks[Condition::LLMGenerated], 2.55, 0.005);
  EXPECT_NEAR(ranks[Condition::WriterEdited], 1.47, 0.005);
  EXPECT_NEAR(ranks[Condition::LLMEditedOracle], 1.99, 0.005);
}

TEST(EvalStats, JudgmentValidation) {
  evalstats::PreferenceJudgment j;
  j.triplet_id = "t";
  j.judge = "j";
  j.condition_of_rank = {{1, Condition::WriterEdited}, {2, Condition::WriterEdited}, {3, Condition::LLMGenerated}};
  EXPECT_THROW(evalstats::validate(j), evalstats::StatsError);
  j.condition_of_rank = {{1, Condition::WriterEdited}, {2, Condition::LLMEditedFull}, {4, Condition::LLMGenerated}};
  EXPECT_THROW(evalstats::validate(j), evalstats::StatsError);
  j.condition_of_rank = {{1, Condition::WriterEdited}, {2, Condition::LLMEditedFull}, {3, Condition::LLMGenerated}};
  EXPECT_NO_THROW(evalstats::validate(j));
  auto back = evalstats::judgment_from_json(json::parse(evalstats::to_json(j).dump()));
  EXPECT_EQ(back, j);
}

// ---- Wilcoxon ------------------------------------------------------------------------------

TEST(EvalStats, WilcoxonAllPositiveFivePairs) {
  auto r = evalstats::wilcoxon_signed_rank({{2, 1}, {4, 2}, {6, 3}, {8, 4}, {10, 5}});
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 2.0 / 32.0);
  EXPECT_TRUE(r.exact);
}

TEST(EvalStats, WilcoxonMatchesEnumerationOracle) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::pair<double, double>> pairs;
    const std::size_t n = 1 + rng() % 14;
    for (std::size_t k = 0; k < n; ++k) {
      pairs.emplace_back(static_cast<double>(1 + rng() % 3), static_cast<double>(1 + rng() % 3));
    }
    auto r = evalstats::wilcoxon_signed_rank(pairs);
    double t = 0.0;
    double p = oracle::wilcoxon_p(pairs, &t);
    if (r.degenerate) {
      EXPECT_EQ(r.p_value, 1.0);
      continue;
    }
    EXPECT_NEAR(r.p_value, p, 1e-12);
    EXPECT_DOUBLE_EQ(r.statistic, t);
  }
}

TEST(EvalStats, WilcoxonZerosAndLargeSamples) {
  auto zero = evalstats::wilcoxon_signed_rank({{1, 1}, {2, 2}});
  EXPECT_TRUE(zero.degenerate);
  EXPECT_EQ(zero.p_value, 1.0);
  EXPECT_THROW(evalstats::wilcoxon_signed_rank({}), evalstats::StatsError);

  // Ranks from the ranked fixture: writer-edited is preferred far more often.
  auto js = fixtures::ranked_judgments();
  auto pairs = evalstats::paired_ranks(js, Condition::WriterEdited, Condition::LLMGenerated);
  ASSERT_EQ(pairs.size(), 600u);
  auto r = evalstats::wilcoxon_signed_rank(pairs);
  EXPECT_FALSE(r.exact);
  EXPECT_LT(r.p_value, 1e-6);
  // Swapping the sides leaves a two-sided p unchanged.
  for (auto& [a, b] : pairs) std::swap(a, b);
  EXPECT_DOUBLE_EQ(evalstats::wilcoxon_signed_rank(pairs).p_value, r.p_value);
}

TEST(EvalStats, PearsonR) {
  EXPECT_DOUBLE_EQ(evalstats::pearson_r({1, 2, 3}, {2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(evalstats::pearson_r({1, 2, 3}, {3, 2, 1}), -1.0);
  // Hand value: x = 1..4, y = (1, 3, 2, 4): sxy = 4, sxx = syy = 5.
  EXPECT_DOUBLE_EQ(evalstats::pearson_r({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8);
  EXPECT_THROW(evalstats::pearson_r({1, 1}, {2, 3}), evalstats::StatsError);
}
