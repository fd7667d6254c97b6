#include "triage/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace triage {
namespace {

using B = BinaryLabel;

std::vector<B> bin(const std::vector<int>& v) {
  std::vector<B> out;
  for (int x : v) out.push_back(static_cast<B>(x));
  return out;
}

TEST(MacroF1, PerfectPrediction) {
  const std::vector<int> y = {1, 2, 3, 3, 1};
  EXPECT_EQ(macro_f1(y, y, level_space()), 1.0);
}

TEST(MacroF1, HandFixtureIsSevenNinths) {
  EXPECT_EQ(macro_f1(std::vector<int>{1, 1, 2, 3}, std::vector<int>{1, 2, 2, 3}, level_space()),
            (2.0 / 3 + 2.0 / 3 + 1.0) / 3);
  EXPECT_NEAR(macro_f1(std::vector<int>{1, 1, 2, 3}, std::vector<int>{1, 2, 2, 3}, level_space()), 7.0 / 9, 1e-15);
}

TEST(MacroF1, AbsentClassesCountAsZero) {
  const std::vector<int> y = {1, 1};
  EXPECT_EQ(macro_f1(y, y, level_space()), 1.0 / 3);
  const auto cm = confusion_matrix(y, y, level_space());
  const auto scores = per_class_scores(cm);
  EXPECT_FALSE(scores[0].zero_division);
  EXPECT_TRUE(scores[1].zero_division);
  EXPECT_TRUE(scores[2].zero_division);
}

TEST(MacroF1, ErrorsOnBadInput) {
  EXPECT_THROW(macro_f1(std::vector<int>{1, 2}, std::vector<int>{1}, level_space()), InvalidArgument);
  EXPECT_THROW(macro_f1(std::vector<int>{1, 4}, std::vector<int>{1, 1}, level_space()), InvalidArgument);
}

TEST(BinaryF1, HandFixtures) {
  EXPECT_EQ(binary_f1(bin({1, 1, 0, 0}), bin({1, 0, 1, 0})).f1, 0.5);
  EXPECT_EQ(binary_f1(bin({1, 0, 1}), bin({1, 0, 1})).f1, 1.0);
  const auto none = binary_f1(bin({0, 0}), bin({0, 0}));
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_TRUE(none.zero_support);
  EXPECT_THROW(binary_f1(bin({0, 1}), bin({0})), InvalidArgument);
}

TEST(RocAuc, HandFixtures) {
  EXPECT_EQ(roc_auc(bin({1, 0, 1, 0}), std::vector<double>{0.9, 0.8, 0.7, 0.3}), 0.75);
  EXPECT_EQ(roc_auc(bin({1, 0}), std::vector<double>{0.5, 0.5}), 0.5);
  EXPECT_EQ(roc_auc(bin({1, 1, 0}), std::vector<double>{0.9, 0.8, 0.1}), 1.0);
  EXPECT_THROW(roc_auc(bin({1, 1}), std::vector<double>{0.1, 0.2}), InvalidArgument);
}

TEST(AucPr, HandFixtures) {
  EXPECT_EQ(auc_pr(bin({1, 0, 1}), std::vector<double>{0.9, 0.8, 0.7}), 0.5 * 1 + 0.5 * (2.0 / 3));
  EXPECT_NEAR(auc_pr(bin({1, 0, 1}), std::vector<double>{0.9, 0.8, 0.7}), 5.0 / 6, 1e-15);
  EXPECT_EQ(auc_pr(bin({1, 1, 0}), std::vector<double>{0.9, 0.8, 0.1}), 1.0);
  EXPECT_THROW(auc_pr(bin({0, 0}), std::vector<double>{0.1, 0.2}), InvalidArgument);
}

struct Instance {
  std::vector<int> truth, pred;
  std::vector<double> scores;
};

// n <= 12, scores drawn from a small grid so ties are common.
Instance random_instance(std::mt19937_64& gen, int classes, bool both_classes) {
  for (;;) {
    Instance in;
    const std::size_t n = 1 + gen() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      in.truth.push_back(static_cast<int>(gen() % classes));
      in.pred.push_back(static_cast<int>(gen() % classes));
      in.scores.push_back(static_cast<double>(gen() % 7) / 6.0);
    }
    const bool has0 = std::count(in.truth.begin(), in.truth.end(), 0) > 0;
    const bool has1 = std::count(in.truth.begin(), in.truth.end(), 1) > 0;
    if (!both_classes || (has0 && has1)) return in;
  }
}

TEST(OracleEquivalence, MacroF1) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 1000; ++trial) {
    auto in = random_instance(gen, 3, false);
    for (auto& v : in.truth) ++v;
    for (auto& v : in.pred) ++v;
    EXPECT_NEAR(macro_f1(in.truth, in.pred, level_space()), oracle::macro_f1(in.truth, in.pred, {1, 2, 3}), 1e-9);
  }
}

TEST(OracleEquivalence, BinaryF1) {
  std::mt19937_64 gen(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_instance(gen, 2, false);
    EXPECT_NEAR(binary_f1(bin(in.truth), bin(in.pred)).f1, oracle::binary_f1(in.truth, in.pred), 1e-9);
  }
}

TEST(OracleEquivalence, RocAucAndAveragePrecision) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_instance(gen, 2, true);
    EXPECT_NEAR(roc_auc(bin(in.truth), in.scores), oracle::roc_auc(in.truth, in.scores), 1e-9);
    EXPECT_NEAR(auc_pr(bin(in.truth), in.scores), oracle::average_precision(in.truth, in.scores), 1e-9);
  }
}

TEST(Invariance, JointPermutation) {
  std::mt19937_64 gen(24);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = random_instance(gen, 2, true);
    std::vector<std::size_t> order(in.truth.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    Instance p;
    for (auto i : order) {
      p.truth.push_back(in.truth[i]);
      p.pred.push_back(in.pred[i]);
      p.scores.push_back(in.scores[i]);
    }
    EXPECT_NEAR(macro_f1(p.truth, p.pred, binary_space()), macro_f1(in.truth, in.pred, binary_space()), 1e-12);
    EXPECT_NEAR(binary_f1(bin(p.truth), bin(p.pred)).f1, binary_f1(bin(in.truth), bin(in.pred)).f1, 1e-12);
    EXPECT_EQ(roc_auc(bin(p.truth), p.scores), roc_auc(bin(in.truth), in.scores));
    EXPECT_NEAR(auc_pr(bin(p.truth), p.scores), auc_pr(bin(in.truth), in.scores), 1e-12);
  }
}

TEST(Invariance, RocAucUnderMonotoneTransformAndNegation) {
  std::mt19937_64 gen(25);
  for (int trial = 0; trial < 300; ++trial) {
    auto in = random_instance(gen, 2, true);
    std::vector<double> warped, negated;
    for (double s : in.scores) warped.push_back(std::exp(3 * s) - 7);
    const double auc = roc_auc(bin(in.truth), in.scores);
    EXPECT_EQ(roc_auc(bin(in.truth), warped), auc);

    // Tie-free scores for the complement identity.
    for (std::size_t i = 0; i < in.scores.size(); ++i) in.scores[i] = static_cast<double>(gen() % 1000000) + i * 1e-3;
    for (double s : in.scores) negated.push_back(-s);
    EXPECT_NEAR(roc_auc(bin(in.truth), in.scores) + roc_auc(bin(in.truth), negated), 1.0, 1e-12);
  }
}

TEST(Evaluate, MulticlassHasNoRankingMetrics) {
  const std::vector<int> t = {1, 1, 2, 3}, p = {1, 2, 2, 3};
  const auto r = evaluate(t, p, level_space(), EvalMode::kMulticlass);
  EXPECT_FALSE(r.binary.has_value());
  EXPECT_EQ(r.macro_f1, macro_f1(t, p, level_space()));
  EXPECT_EQ(r.confusion.at(0, 1), 1u);
  EXPECT_EQ(r.per_class.size(), 3u);
}

TEST(Evaluate, BinaryFillsRankingMetrics) {
  const std::vector<int> t = {1, 0, 1, 0}, p = {1, 1, 0, 0};
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.3};
  const auto r = evaluate(t, p, binary_space(), EvalMode::kBinary, s);
  ASSERT_TRUE(r.binary.has_value());
  EXPECT_EQ(r.binary->roc_auc, 0.75);
  EXPECT_EQ(r.binary->f1, 0.5);
  EXPECT_THROW(evaluate(t, p, binary_space(), EvalMode::kBinary), InvalidArgument);
}

}  // namespace
}  // namespace triage
