#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "scl/eval.hpp"

namespace scl {
namespace {

using oracle::random_tensor;

TEST(Confusion, CountsMatchDirectTally) {
  Rng rng(1);
  const std::size_t n = 200, k = 5;
  auto logits = random_tensor<float>(rng, {n, k}, -2, 2);
  std::vector<Label> y(n);
  for (auto& v : y) v = static_cast<Label>(rng.index(k));
  const auto r = confusion_and_accuracy(logits, y);

  std::vector<std::vector<std::uint64_t>> tally(k, std::vector<std::uint64_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    ++tally[y[i]][best];
    correct += best == y[i];
  }
  EXPECT_EQ(r.confusion, tally);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / n);
  double recall = 0;
  for (std::size_t c = 0; c < k; ++c)
    recall += static_cast<double>(tally[c][c]) / std::accumulate(tally[c].begin(), tally[c].end(), 0.0);
  EXPECT_NEAR(r.macro_recall, recall / k, 1e-15);
  EXPECT_EQ(r.n_samples, n);
}

TEST(Confusion, TiesGoToLowestIndex) {
  Tensor<float> logits(Shape{2, 3}, {1, 1, 0, 0, 2, 2});
  const std::vector<Label> y{0, 1};
  const auto r = confusion_and_accuracy(logits, y);
  EXPECT_EQ(r.confusion[0][0], 1u);
  EXPECT_EQ(r.confusion[1][1], 1u);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
}

TEST(Confusion, ConstantPredictorOnBalancedData) {
  const std::size_t k = 4, per = 25;
  Tensor<float> logits(Shape{k * per, k});
  std::vector<Label> y;
  for (std::size_t i = 0; i < k * per; ++i) {
    logits.at(i, 2) = 5.0f;
    y.push_back(static_cast<Label>(i / per));
  }
  const auto r = confusion_and_accuracy(logits, y);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.25);
  EXPECT_DOUBLE_EQ(r.macro_recall, 0.25);
  EXPECT_DOUBLE_EQ(*r.per_class_recall[2], 1.0);
  EXPECT_DOUBLE_EQ(*r.per_class_recall[0], 0.0);
  EXPECT_DOUBLE_EQ(macro_ovr_auc(logits, y), 0.5);
}

TEST(Confusion, MissingClassIsExcludedFromMacroRecall) {
  Tensor<float> logits(Shape{3, 3}, {1, 0, 0, 1, 0, 0, 0, 1, 0});
  const std::vector<Label> y{0, 1, 1};
  const auto r = confusion_and_accuracy(logits, y);
  EXPECT_FALSE(r.per_class_recall[2].has_value());
  EXPECT_DOUBLE_EQ(r.macro_recall, (1.0 + 0.5) / 2.0);
}

TEST(Confusion, BadLabelsAreContractErrors) {
  Tensor<float> logits(Shape{2, 2});
  const std::vector<Label> out_of_range{0, 2};
  EXPECT_THROW(confusion_and_accuracy(logits, out_of_range), ContractError);
  const std::vector<Label> short_labels{0};
  EXPECT_THROW(confusion_and_accuracy(logits, short_labels), ContractError);
}

TEST(Auc, MatchesPairCountingOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 60, k = 4;
    auto scores = random_tensor<double>(rng, {n, k});
    // Coarse rounding creates ties.
    for (auto& v : scores.data()) v = std::round(v * 4) / 4;
    std::vector<Label> y(n);
    for (auto& v : y) v = static_cast<Label>(rng.index(k));
    EXPECT_NEAR(macro_ovr_auc(scores, y), oracle::macro_auc_pairs(oracle::to_matrix(scores), y), 1e-12);
  }
}

TEST(Auc, PerfectAndReversedScores) {
  const std::size_t n = 12, k = 3;
  Tensor<double> good(Shape{n, k}), bad(Shape{n, k});
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<Label>(i % k);
    for (std::size_t c = 0; c < k; ++c) {
      good.at(i, c) = c == y[i] ? 1.0 : 0.0;
      bad.at(i, c) = c == y[i] ? 0.0 : 1.0;
    }
  }
  EXPECT_DOUBLE_EQ(macro_ovr_auc(good, y), 1.0);
  EXPECT_DOUBLE_EQ(macro_ovr_auc(bad, y), 0.0);
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng(3);
  auto scores = random_tensor<double>(rng, {80, 3}, -3, 3);
  std::vector<Label> y(80);
  for (auto& v : y) v = static_cast<Label>(rng.index(3));
  auto mapped = scores.clone();
  for (auto& v : mapped.data()) v = std::exp(2.0 * v) + 5.0;
  EXPECT_DOUBLE_EQ(macro_ovr_auc(scores, y), macro_ovr_auc(mapped, y));
}

TEST(Metrics, InvariantUnderConsistentLabelPermutation) {
  Rng rng(4);
  const std::size_t n = 90, k = 3;
  auto logits = random_tensor<double>(rng, {n, k});
  std::vector<Label> y(n);
  for (auto& v : y) v = static_cast<Label>(rng.index(k));
  const std::vector<std::size_t> perm{2, 0, 1};
  Tensor<double> permuted(Shape{n, k});
  std::vector<Label> py(n);
  for (std::size_t i = 0; i < n; ++i) {
    py[i] = static_cast<Label>(perm[y[i]]);
    for (std::size_t c = 0; c < k; ++c) permuted.at(i, perm[c]) = logits.at(i, c);
  }
  const auto a = confusion_and_accuracy(logits, y);
  const auto b = confusion_and_accuracy(permuted, py);
  EXPECT_DOUBLE_EQ(a.accuracy, b.accuracy);
  EXPECT_NEAR(a.macro_recall, b.macro_recall, 1e-15);
  EXPECT_NEAR(macro_ovr_auc(logits, y), macro_ovr_auc(permuted, py), 1e-15);
}

TEST(Auc, SingleClassLabelsAreContractError) {
  Tensor<double> s(Shape{3, 2});
  const std::vector<Label> y{0, 0, 0};
  // Class 1 has only negatives and class 0 only positives.
  EXPECT_THROW(macro_ovr_auc(s, y), ContractError);
}

TEST(Separation, OrthogonalClassesGiveGapOne) {
  Tensor<double> e(Shape{6, 3});
  std::vector<Label> y{0, 0, 1, 1, 2, 2};
  for (std::size_t i = 0; i < 6; ++i) e.at(i, y[i]) = 1.0 + static_cast<double>(i);
  const auto s = embedding_separation(e, y);
  EXPECT_NEAR(s.mean_intra_cos, 1.0, 1e-9);
  EXPECT_NEAR(s.mean_inter_cos, 0.0, 1e-12);
  EXPECT_NEAR(s.separation_gap, 1.0, 1e-9);
  EXPECT_EQ(s.intra_pairs, 3u);
  EXPECT_EQ(s.inter_pairs, 12u);
}

TEST(Separation, IdenticalEmbeddingsGiveGapZero) {
  Tensor<double> e(Shape{5, 2});
  for (std::size_t i = 0; i < 5; ++i) e.at(i, 0) = 1.0;
  const std::vector<Label> y{0, 1, 0, 1, 1};
  EXPECT_NEAR(embedding_separation(e, y).separation_gap, 0.0, 1e-12);
}

TEST(Separation, MatchesPairwiseOracle) {
  Rng rng(5);
  auto e = random_tensor<double>(rng, {40, 6});
  std::vector<Label> y(40);
  for (auto& v : y) v = static_cast<Label>(rng.index(4));
  const auto m = oracle::to_matrix(e);
  double intra = 0, inter = 0;
  int ni = 0, ne = 0;
  for (std::size_t a = 0; a < 40; ++a)
    for (std::size_t b = 0; b < 40; ++b) {
      if (a == b) continue;
      const double c = oracle::cosine(m[a], m[b]);
      if (y[a] == y[b]) intra += c, ++ni;
      else inter += c, ++ne;
    }
  const auto s = embedding_separation(e, y);
  EXPECT_NEAR(s.mean_intra_cos, intra / ni, 1e-10);
  EXPECT_NEAR(s.mean_inter_cos, inter / ne, 1e-10);
}

TEST(Separation, LargeInputsAreSampledDeterministically) {
  Rng rng(6);
  const std::size_t n = 2500;
  auto e = random_tensor<float>(rng, {n, 4});
  std::vector<Label> y(n);
  for (auto& v : y) v = static_cast<Label>(rng.index(3));
  const auto a = embedding_separation(e, y, 7);
  const auto b = embedding_separation(e, y, 7);
  EXPECT_EQ(a.intra_pairs + a.inter_pairs, 2'000'000u);
  EXPECT_EQ(a.mean_intra_cos, b.mean_intra_cos);
  EXPECT_EQ(a.mean_inter_cos, b.mean_inter_cos);
}

TEST(Separation, NeedsBothPairKinds) {
  Tensor<double> e(Shape{3, 2}, {1, 0, 0, 1, 1, 1});
  const std::vector<Label> y{0, 0, 0};
  EXPECT_THROW(embedding_separation(e, y), ContractError);
}

TEST(Pca, AxisAlignedVariancesAreRecovered) {
  Rng rng(8);
  const std::size_t n = 400, d = 4;
  Tensor<double> e(Shape{n, d});
  const double sd[] = {0.5, 3.0, 0.1, 1.5};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) e.at(i, j) = sd[j] * rng.normal() + 2.0;
  const auto p = pca_project_2d(e);

  // Oracle: the sample covariance in this setup is close to diagonal, so the
  // first axis is column 1 and the second column 3, up to sign.
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += e.at(i, j) / n;
  double total = 0;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) var[j] += std::pow(e.at(i, j) - mean[j], 2) / (n - 1);
    total += var[j];
  }
  EXPECT_NEAR(p.explained[0], var[1] / total, 0.01);
  EXPECT_NEAR(p.explained[1], var[3] / total, 0.01);
  double corr = 0, ss_a = 0, ss_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = p.points.at(i, 0), b = e.at(i, 1) - mean[1];
    corr += a * b;
    ss_a += a * a;
    ss_b += b * b;
  }
  EXPECT_GT(std::abs(corr) / std::sqrt(ss_a * ss_b), 0.999);
}

TEST(Pca, ProjectionHasZeroMeanAndOrderedVariance) {
  Rng rng(9);
  auto e = random_tensor<double>(rng, {100, 6});
  for (std::size_t i = 0; i < 100; ++i) e.at(i, 2) *= 4.0;
  const auto p = pca_project_2d(e);
  double m0 = 0, m1 = 0, v0 = 0, v1 = 0, cross = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    m0 += p.points.at(i, 0);
    m1 += p.points.at(i, 1);
    v0 += p.points.at(i, 0) * p.points.at(i, 0);
    v1 += p.points.at(i, 1) * p.points.at(i, 1);
    cross += p.points.at(i, 0) * p.points.at(i, 1);
  }
  EXPECT_NEAR(m0, 0.0, 1e-9);
  EXPECT_NEAR(m1, 0.0, 1e-9);
  EXPECT_GE(v0, v1);
  EXPECT_NEAR(cross / std::sqrt(v0 * v1), 0.0, 1e-6);
  EXPECT_GE(p.explained[0], p.explained[1]);
  EXPECT_LE(p.explained[0] + p.explained[1], 1.0 + 1e-12);
}

TEST(Pca, RankOneDataHasEmptySecondAxis) {
  Tensor<double> e(Shape{5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    e.at(i, 0) = static_cast<double>(i);
    e.at(i, 1) = 2.0 * static_cast<double>(i);
  }
  const auto p = pca_project_2d(e);
  EXPECT_NEAR(p.explained[0], 1.0, 1e-9);
  EXPECT_EQ(p.explained[1], 0.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p.points.at(i, 1), 0.0);
}

TEST(Pca, ConstantDataProjectsToOrigin) {
  Tensor<double> e(Shape{4, 3});
  for (auto& v : e.data()) v = 0.7;
  const auto p = pca_project_2d(e);
  for (double v : p.points.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.explained[0], 0.0);
}

TEST(Pca, TooFewRowsIsContractError) {
  EXPECT_THROW(pca_project_2d(Tensor<double>(Shape{2, 3})), ContractError);
}

TEST(MetricsJson, CarriesAllFields) {
  Tensor<float> logits(Shape{4, 2}, {1, 0, 0, 1, 1, 0, 1, 0});
  const std::vector<Label> y{0, 1, 1, 0};
  auto r = confusion_and_accuracy(logits, y);
  r.macro_ovr_auc = macro_ovr_auc(logits, y);
  const auto j = metrics_to_json(r);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.75);
  EXPECT_EQ(j["confusion"], nlohmann::json::parse("[[2,0],[1,1]]"));
  EXPECT_EQ(j["n_samples"].get<int>(), 4);
  EXPECT_TRUE(j.contains("macro_ovr_auc"));
  EXPECT_FALSE(j.contains("separation"));
}

}  // namespace
}  // namespace scl
