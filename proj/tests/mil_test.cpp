// Copyright 2026 The foodmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "foodmil/mil.hpp"
#include "oracles.hpp"

namespace foodmil {
namespace {

Matrix rows(std::initializer_list<std::vector<double>> rs) {
  Matrix h(rs.size(), rs.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rs) std::copy(r.begin(), r.end(), h.row(i++).begin());
  return h;
}

TEST(AttentionScores, SingleInstanceGetsAllWeight) {
  std::mt19937_64 rng(1);
  const auto model = oracle::random_model(3, 4, rng);
  const auto a = attention_scores(rows({{0.3, -1.0, 2.0}}), model);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], 1.0);
}

TEST(AttentionScores, IdenticalRowsShareEvenly) {
  std::mt19937_64 rng(2);
  const auto model = oracle::random_model(2, 3, rng);
  const auto a = attention_scores(rows({{0.5, 0.25}, {0.5, 0.25}}), model);
  EXPECT_EQ(a[0], 0.5);
  EXPECT_EQ(a[1], 0.5);
}

TEST(AttentionScores, ScalarGateMatchesHighPrecisionValue) {
  auto model = GatedAttentionModel::zeros(1, 1);
  model.V(0, 0) = 1.0;
  model.U(0, 0) = 1.0;
  model.w_attn[0] = 1.0;
  const auto a = attention_scores(rows({{0.0}, {10.0}}), model);
  // 40-digit reference: score_2 = tanh(10) sigmoid(10) = 0.99995459800917747...
  EXPECT_NEAR(a[0], 0.26895034803682758853, 1e-3);
  EXPECT_NEAR(a[1], 0.73104965196317241147, 1e-3);
  EXPECT_NEAR(a[1], 0.73104965196317241147, 1e-14);
}

TEST(AttentionScores, LargeScoresDoNotOverflow) {
  auto model = GatedAttentionModel::zeros(1, 1);
  model.V(0, 0) = 1.0;
  model.U(0, 0) = 1.0;
  model.w_attn[0] = 2000.0;
  const auto a = attention_scores(rows({{-5.0}, {5.0}}), model);
  EXPECT_TRUE(std::isfinite(a[0]) && std::isfinite(a[1]));
  EXPECT_NEAR(a[1], 1.0, 1e-12);
  EXPECT_GE(a[0], 0.0);
}

TEST(AttentionScores, ShapeAndNumericErrors) {
  const auto model = GatedAttentionModel::zeros(2, 2);
  EXPECT_THROW(attention_scores(rows({{1.0, 2.0, 3.0}}), model), ShapeError);
  EXPECT_THROW(attention_scores(Matrix(0, 2), model), ShapeError);
  EXPECT_THROW(attention_scores(rows({{1.0, NAN}}), model), NumericError);
}

TEST(AttentionScores, WeightsAlwaysNormalised) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> kd(1, 40), md(1, 12), ld(1, 10);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = kd(rng), m = md(rng), l = ld(rng);
    const auto model = oracle::random_model(m, l, rng, 3.0);
    const auto bag = oracle::random_bag(k, m, rng, 5.0);
    const auto a = attention_scores(bag_matrix(bag), model);
    const double total = std::accumulate(a.begin(), a.end(), 0.0);
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (double w : a) {
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
  }
}

TEST(PoolBag, Examples) {
  const std::vector<double> one{1.0};
  EXPECT_EQ(pool_bag(rows({{2, 3}}), one), (std::vector<double>{2, 3}));
  const std::vector<double> half{0.5, 0.5};
  EXPECT_EQ(pool_bag(rows({{1, 0}, {0, 1}}), half), (std::vector<double>{0.5, 0.5}));
}

TEST(PoolBag, MatchesNaiveOracle) {
  std::mt19937_64 rng(4);
  const auto bag = oracle::random_bag(5, 8, rng);
  const Matrix h = bag_matrix(bag);
  std::uniform_real_distribution<double> ud(0.1, 1.0);
  std::vector<double> a(5);
  for (auto& x : a) x = ud(rng);
  const double total = std::accumulate(a.begin(), a.end(), 0.0);
  for (auto& x : a) x /= total;
  const auto got = pool_bag(h, a);
  const auto want = oracle::naive_pool(h, a);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
}

TEST(PoolBag, RejectsBadWeights) {
  const std::vector<double> short_a{1.0};
  EXPECT_THROW(pool_bag(rows({{1, 0}, {0, 1}}), short_a), ShapeError);
  const std::vector<double> unnormalised{0.5, 0.6};
  EXPECT_THROW(pool_bag(rows({{1, 0}, {0, 1}}), unnormalised), NumericError);
}

TEST(PredictLogit, Examples) {
  auto model = GatedAttentionModel::zeros(2, 1);
  model.w_clf = {1, 2};
  model.b = 1;
  EXPECT_EQ(predict_logit(std::vector<double>{3, 4}, model), 12.0);
  const auto zero = GatedAttentionModel::zeros(2, 1);
  EXPECT_EQ(predict_logit(std::vector<double>{-7, 9}, zero), 0.0);
  EXPECT_EQ(sigmoid(predict_logit(std::vector<double>{-7, 9}, zero)), 0.5);
}

TEST(PredictLogit, MatchesScalarLoop) {
  std::mt19937_64 rng(5);
  const auto model = oracle::random_model(16, 2, rng);
  std::normal_distribution<double> nd;
  std::vector<double> n(16);
  for (auto& x : n) x = nd(rng);
  EXPECT_NEAR(predict_logit(n, model), oracle::naive_logit(model.w_clf, n, model.b), 1e-12);
  EXPECT_THROW(predict_logit(std::vector<double>(3), model), ShapeError);
}

TEST(Forward, ZeroModelIsUniform) {
  std::mt19937_64 rng(6);
  const auto bag = oracle::random_bag(7, 5, rng);
  const auto out = forward(bag, GatedAttentionModel::zeros(5, 3));
  for (double w : out.attention) EXPECT_DOUBLE_EQ(w, 1.0 / 7.0);
  EXPECT_EQ(out.logit, 0.0);
}

TEST(Forward, SingleInstancePoolsToItself) {
  std::mt19937_64 rng(7);
  const auto bag = oracle::random_bag(1, 6, rng);
  const auto model = oracle::random_model(6, 3, rng);
  EXPECT_EQ(forward(bag, model).pooled, bag.instances[0].features);

  const auto mask = DropoutMask::sample(1, 6, 0.5, rng);
  const auto dropped = forward(bag, model, &mask).pooled;
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(dropped[j], mask.keep[j] ? bag.instances[0].features[j] * 2.0 : 0.0);
  }
}

TEST(Forward, PermutationEquivariant) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto bag = oracle::random_bag(6, 4, rng);
    const auto model = oracle::random_model(4, 3, rng);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    TractBag shuffled = bag;
    for (std::size_t i = 0; i < 6; ++i) shuffled.instances[i] = bag.instances[perm[i]];
    const auto a = forward(bag, model);
    const auto b = forward(shuffled, model);
    EXPECT_NEAR(a.logit, b.logit, 1e-12);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(b.attention[i], a.attention[perm[i]]);
  }
}

TEST(Forward, ZeroProjectionsEqualMeanPooling) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto bag = oracle::random_bag(1 + trial % 11, 6, rng);
    auto model = oracle::random_model(6, 4, rng);
    std::fill(model.V.data.begin(), model.V.data.end(), 0.0);
    std::fill(model.U.data.begin(), model.U.data.end(), 0.0);
    const auto out = forward(bag, model);
    for (std::size_t j = 0; j < 6; ++j) {
      double mean = 0.0;
      for (const auto& inst : bag.instances) mean += inst.features[j];
      mean /= static_cast<double>(bag.size());
      EXPECT_NEAR(out.pooled[j], mean, 1e-12);
    }
  }
}

TEST(Forward, RejectsEmptyAndRaggedBags) {
  const auto model = GatedAttentionModel::zeros(2, 2);
  TractBag empty;
  EXPECT_THROW(forward(empty, model), ShapeError);
  TractBag ragged;
  ragged.instances = {{"a", 0, 0, "", {1, 2}}, {"b", 0, 0, "", {1, 2, 3}}};
  EXPECT_THROW(forward(ragged, model), ShapeError);
}

TEST(Loss, Examples) {
  EXPECT_NEAR(loss(0.0, 1, {1.0, 0.0, 0.0}), 0.693147180559945, 1e-12);
  EXPECT_NEAR(loss(0.0, 1, {2.0, 0.0, 0.0}), 1.386294361119891, 1e-12);
  EXPECT_NEAR(loss(0.0, 1, {1.0, 0.1, 0.0}), std::log(2.0), 1e-12);
}

TEST(Loss, MatchesTextbookCrossEntropy) {
  for (double z = -30.0; z <= 30.0; z += 0.125) {
    for (int y : {0, 1}) EXPECT_NEAR(loss(z, y, {}), oracle::textbook_bce(z, y), 1e-10) << z << " " << y;
  }
}

TEST(Loss, StableAtExtremeLogits) {
  for (double z : {-1e4, 1e4}) {
    for (int y : {0, 1}) {
      const double v = loss(z, y, {2.5, 0.1, 0.0});
      EXPECT_TRUE(std::isfinite(v));
    }
  }
  EXPECT_NEAR(loss(1e4, 0, {}), 1e4, 1e-6);
  EXPECT_NEAR(loss(1e4, 1, {}), 0.0, 1e-12);
}

TEST(Loss, RejectsInvalidConfig) {
  EXPECT_THROW(loss(0.0, 1, {0.0, 0.0, 0.0}), ConfigError);
  EXPECT_THROW(loss(0.0, 1, {1.0, 0.5, 0.0}), ConfigError);
  EXPECT_THROW(loss(0.0, 2, {}), ConfigError);
}

TEST(Backward, BiasGradientAtZeroLogit) {
  std::mt19937_64 rng(10);
  const auto bag = oracle::random_bag(4, 3, rng);
  auto model = oracle::random_model(3, 2, rng);
  std::fill(model.w_clf.begin(), model.w_clf.end(), 0.0);
  model.b = 0.0;
  for (double eps : {0.0, 0.1}) {
    for (int y : {0, 1}) {
      const auto r = backward(bag, y, model, {1.0, eps, 0.0});
      EXPECT_NEAR(r.grads.db, 0.5 - smoothed_target(y, eps), 1e-15);
    }
  }
}

TEST(Backward, SingleInstanceHasNoAttentionGradient) {
  std::mt19937_64 rng(11);
  const auto bag = oracle::random_bag(1, 5, rng);
  const auto model = oracle::random_model(5, 3, rng);
  const auto r = backward(bag, 1, model, {2.0, 0.1, 0.0});
  for (double g : r.grads.dV.data) EXPECT_EQ(g, 0.0);
  for (double g : r.grads.dU.data) EXPECT_EQ(g, 0.0);
  for (double g : r.grads.dw_attn) EXPECT_EQ(g, 0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> kd(1, 8), md(2, 16), ld(2, 8);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t k = kd(rng), m = md(rng), l = ld(rng);
    const auto bag = oracle::random_bag(k, m, rng);
    const auto model = oracle::random_model(m, l, rng);
    const LossConfig cfg{trial % 2 ? 2.57 : 1.0, trial % 3 ? 0.1 : 0.0, trial % 4 == 0 ? 0.3 : 0.0};
    std::optional<DropoutMask> mask;
    if (cfg.dropout_rate > 0.0) mask = DropoutMask::sample(k, m, cfg.dropout_rate, rng);
    const auto check = oracle::check_gradients(bag, trial % 5 ? 1 : 0, model, cfg, mask ? &*mask : nullptr);
    EXPECT_LT(check.worst, 1e-5) << "trial " << trial << " K=" << k << " M=" << m << " L=" << l;
  }
}

TEST(Dropout, InvertedScalingIsUnbiased) {
  std::mt19937_64 rng(13);
  const auto bag = oracle::random_bag(5, 6, rng);
  auto model = oracle::random_model(6, 2, rng);
  std::fill(model.V.data.begin(), model.V.data.end(), 0.0);
  std::fill(model.U.data.begin(), model.U.data.end(), 0.0);
  const double exact = forward(bag, model).logit;

  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto mask = DropoutMask::sample(5, 6, 0.5, rng);
    const double z = forward(bag, model, &mask).logit;
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - exact), 3.0 * se);
}

}  // namespace
}  // namespace foodmil
