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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foodmil/error.hpp"
#include "foodmil/fusion.hpp"
#include "foodmil/linalg.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

struct ForwardResult {
  double logit = 0.0;
  std::vector<double> attention;  // K weights, summing to 1
  std::vector<double> pooled;     // M-vector
};

struct BackwardResult {
  double loss = 0.0;
  double logit = 0.0;
  GradientSet grads;
};

/// Stacks a bag's embeddings into a K x M matrix. When a mask is given the
/// dropped entries are zeroed and survivors scaled by 1 / (1 - rate).
inline Matrix bag_matrix(const TractBag& bag, const DropoutMask* mask = nullptr) {
  if (bag.instances.empty()) throw ShapeError("tract " + bag.tract_id + " has an empty bag");
  const std::size_t k = bag.instances.size();
  const std::size_t m = bag.instances.front().features.size();
  Matrix h(k, m);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& f = bag.instances[i].features;
    if (f.size() != m) throw ShapeError("tract " + bag.tract_id + ": ragged embedding dimensions");
    if (!all_finite(f)) throw NumericError("image " + bag.instances[i].image_id + " has non-finite features");
    std::copy(f.begin(), f.end(), h.row(i).begin());
  }
  if (mask) {
    if (mask->rows != k || mask->cols != m) throw ShapeError("dropout mask shape differs from bag");
    const double scale = 1.0 / (1.0 - mask->rate);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] = mask->keep[i] ? h.data[i] * scale : 0.0;
  }
  return h;
}

namespace detail {

// Intermediates of the gated scoring pass, kept for the backward pass.
struct AttentionCache {
  Matrix tanh_v;   // K x L
  Matrix gate_u;   // K x L, sigmoid(U h)
  std::vector<double> scores;
  std::vector<double> weights;
};

inline AttentionCache attention_pass(const Matrix& h, const GatedAttentionModel& model) {
  if (h.rows == 0) throw ShapeError("attention over an empty bag");
  if (h.cols != model.m) {
    throw ShapeError("instance dimension " + std::to_string(h.cols) + " differs from model M " +
                     std::to_string(model.m));
  }
  if (!all_finite(h.data)) throw NumericError("non-finite instance features");

  const std::size_t k = h.rows;
  const std::size_t l = model.l;
  AttentionCache c{Matrix(k, l), Matrix(k, l), std::vector<double>(k), std::vector<double>(k)};
  for (std::size_t i = 0; i < k; ++i) {
    matvec(model.V, h.row(i), c.tanh_v.row(i));
    matvec(model.U, h.row(i), c.gate_u.row(i));
    double score = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      const double t = std::tanh(c.tanh_v(i, j));
      const double s = sigmoid(c.gate_u(i, j));
      c.tanh_v(i, j) = t;
      c.gate_u(i, j) = s;
      score += model.w_attn[j] * (t * s);
    }
    c.scores[i] = score;
  }

  const double top = *std::max_element(c.scores.begin(), c.scores.end());
  for (std::size_t i = 0; i < k; ++i) c.weights[i] = std::exp(c.scores[i] - top);
  // Summed in sorted order so the normaliser, and hence every weight, does
  // not depend on instance order.
  std::vector<double> sorted = c.weights;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double e : sorted) total += e;
  for (double& w : c.weights) w /= total;
  return c;
}

}  // namespace detail

/// Gated attention weights over the rows of `h`:
///   a_k = softmax_k( w_attn . (tanh(V h_k) * sigmoid(U h_k)) )
inline std::vector<double> attention_scores(const Matrix& h, const GatedAttentionModel& model) {
  return detail::attention_pass(h, model).weights;
}

/// Attention-weighted average of the instance rows.
inline std::vector<double> pool_bag(const Matrix& h, std::span<const double> weights) {
  if (weights.size() != h.rows) throw ShapeError("attention length differs from bag size");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(std::abs(total - 1.0) <= 1e-9)) throw NumericError("attention weights do not sum to 1");

  std::vector<double> pooled(h.cols, 0.0);
  for (std::size_t i = 0; i < h.rows; ++i) {
    const auto row = h.row(i);
    for (std::size_t j = 0; j < h.cols; ++j) pooled[j] += weights[i] * row[j];
  }
  return pooled;
}

/// Image-only tract logit w_clf . n + b.
inline double predict_logit(std::span<const double> pooled, const GatedAttentionModel& model) {
  if (pooled.size() != model.m) throw ShapeError("pooled vector length differs from model M");
  if (!all_finite(pooled)) throw NumericError("pooled vector is not finite");
  return dot(model.w_clf, pooled) + model.b;
}

/// Full bag forward pass. Models carrying a fusion block add the income
/// term using the bag's income.
inline ForwardResult forward(const TractBag& bag, const GatedAttentionModel& model,
                             const DropoutMask* mask = nullptr) {
  const Matrix h = bag_matrix(bag, mask);
  ForwardResult out;
  out.attention = attention_scores(h, model);
  out.pooled = pool_bag(h, out.attention);
  out.logit = model.fusion ? fused_logit(out.pooled, bag.income, model) : predict_logit(out.pooled, model);
  return out;
}

inline double smoothed_target(int label, double smoothing) {
  return static_cast<double>(label) * (1.0 - smoothing) + smoothing / 2.0;
}

inline void check_label(int label) {
  if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1, got " + std::to_string(label));
}

/// Weighted, label-smoothed binary cross-entropy on a logit:
///   w_pos * y~ * softplus(-z) + (1 - y~) * softplus(z)
/// which equals -[w_pos y~ log sigma(z) + (1 - y~) log(1 - sigma(z))].
inline double loss(double logit, int label, const LossConfig& cfg) {
  cfg.validate();
  check_label(label);
  const double y = smoothed_target(label, cfg.label_smoothing);
  return cfg.pos_weight * y * softplus(-logit) + (1.0 - y) * softplus(logit);
}

/// d loss / d logit.
inline double loss_gradient(double logit, int label, const LossConfig& cfg) {
  cfg.validate();
  check_label(label);
  const double y = smoothed_target(label, cfg.label_smoothing);
  return -cfg.pos_weight * y * sigmoid(-logit) + (1.0 - y) * sigmoid(logit);
}

/// Loss and exact gradients for one labelled bag. Weight decay is the
/// optimiser's job and is not included.
inline BackwardResult backward(const TractBag& bag, int label, const GatedAttentionModel& model,
                               const LossConfig& cfg, const DropoutMask* mask = nullptr) {
  const Matrix h = bag_matrix(bag, mask);
  const auto cache = detail::attention_pass(h, model);
  const auto pooled = pool_bag(h, cache.weights);

  BackwardResult out;
  out.logit = model.fusion ? fused_logit(pooled, bag.income, model) : predict_logit(pooled, model);
  out.loss = loss(out.logit, label, cfg);
  const double dz = loss_gradient(out.logit, label, cfg);

  const std::size_t k = h.rows;
  const std::size_t m = model.m;
  const std::size_t l = model.l;
  GradientSet& g = out.grads;
  g = GradientSet::zeros_like(model);

  g.db = dz;
  for (std::size_t j = 0; j < m; ++j) g.dw_clf[j] = dz * pooled[j];
  if (model.fusion) g.dw_inc = dz * income_zscore(bag.income, *model.fusion);

  // d loss / d a_k = dz * w_clf . h_k, then through the softmax.
  std::vector<double> da(k);
  double expected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    da[i] = dz * dot(model.w_clf, h.row(i));
    expected += cache.weights[i] * da[i];
  }

  std::vector<double> du(l);
  std::vector<double> dg(l);
  for (std::size_t i = 0; i < k; ++i) {
    const double dscore = cache.weights[i] * (da[i] - expected);
    if (dscore == 0.0) continue;
    const auto t = cache.tanh_v.row(i);
    const auto s = cache.gate_u.row(i);
    for (std::size_t j = 0; j < l; ++j) {
      g.dw_attn[j] += dscore * t[j] * s[j];
      const double de = dscore * model.w_attn[j];
      du[j] = de * s[j] * (1.0 - t[j] * t[j]);
      dg[j] = de * t[j] * s[j] * (1.0 - s[j]);
    }
    const auto hi = h.row(i);
    for (std::size_t j = 0; j < l; ++j) {
      double* dv_row = g.dV.data.data() + j * m;
      double* du_row = g.dU.data.data() + j * m;
      for (std::size_t c = 0; c < m; ++c) {
        dv_row[c] += du[j] * hi[c];
        du_row[c] += dg[j] * hi[c];
      }
    }
  }
  return out;
}

}  // namespace foodmil
