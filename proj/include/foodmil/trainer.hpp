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
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "foodmil/error.hpp"
#include "foodmil/fusion.hpp"
#include "foodmil/metrics.hpp"
#include "foodmil/mil.hpp"
#include "foodmil/parallel.hpp"
#include "foodmil/split.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1e-4;
  double dropout_rate = 0.9;
  std::size_t batch_size = 64;
  double label_smoothing = 0.1;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::optional<double> pos_weight;  // empty means N0 / N1 on the training partition
  std::size_t l_dim = 128;
  double threshold = 0.5;
  bool use_income = false;           // late fusion with the income covariate
  bool freeze_income_weight = false; // keep w_inc at 0 (fusion ablation)
  bool mean_pool = false;            // keep V = U = 0 (mean-pooling ablation)

  void validate() const {
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("rates must be non-negative");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) throw ConfigError("label smoothing must lie in [0, 0.5)");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max epochs must be at least 1");
    if (l_dim < 1) throw ConfigError("attention dimension must be at least 1");
    if (pos_weight && !(*pos_weight > 0.0)) throw ConfigError("pos_weight must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"dropout_rate", c.dropout_rate},
          {"batch_size", c.batch_size},
          {"label_smoothing", c.label_smoothing},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"pos_weight", c.pos_weight ? nlohmann::json(*c.pos_weight) : nlohmann::json("auto")},
          {"l_dim", c.l_dim},
          {"threshold", c.threshold},
          {"use_income", c.use_income},
          {"freeze_income_weight", c.freeze_income_weight},
          {"mean_pool", c.mean_pool}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("pos_weight") && j["pos_weight"].is_number()) c.pos_weight = j["pos_weight"].get<double>();
  c.l_dim = j.value("l_dim", c.l_dim);
  c.threshold = j.value("threshold", c.threshold);
  c.use_income = j.value("use_income", c.use_income);
  c.freeze_income_weight = j.value("freeze_income_weight", c.freeze_income_weight);
  c.mean_pool = j.value("mean_pool", c.mean_pool);
  return c;
}

/// N0 / N1 over the given (training) bags; unlabeled bags are ignored.
inline double compute_pos_weight(std::span<const TractBag> bags) {
  std::size_t n0 = 0, n1 = 0;
  for (const auto& bag : bags) {
    if (!bag.label) continue;
    (*bag.label == 1 ? n1 : n0) += 1;
  }
  if (n1 == 0) throw DegenerateError("no positive (food insecure) tracts in the training partition");
  if (n0 == 0) throw DegenerateError("no negative (food secure) tracts in the training partition");
  return static_cast<double>(n0) / static_cast<double>(n1);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  GradientSet first;
  GradientSet second;
  std::uint64_t t = 0;

  static AdamState zeros_like(const GatedAttentionModel& model) {
    return {GradientSet::zeros_like(model), GradientSet::zeros_like(model), 0};
  }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Which parameter groups the optimiser may move.
struct TrainableMask {
  bool attention_projections = true;  // V and U
  bool income_weight = true;

  static TrainableMask from(const TrainConfig& cfg) { return {!cfg.mean_pool, !cfg.freeze_income_weight}; }
};

namespace detail {

inline void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m1,
                        std::span<double> m2, double decay, double lr, double c1, double c2, const AdamHyper& h) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] + decay * theta[i];
    m1[i] = h.beta1 * m1[i] + (1.0 - h.beta1) * g;
    m2[i] = h.beta2 * m2[i] + (1.0 - h.beta2) * g * g;
    const double mhat = m1[i] / c1;
    const double vhat = m2[i] / c2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

}  // namespace detail

/// One Adam step with coupled L2 decay (decay * theta added to the gradient)
/// on V, U, w_attn and w_clf. The bias and the income weight are not decayed.
/// Throws NumericError, leaving model and state untouched, on a non-finite
/// gradient.
inline void adam_step(GatedAttentionModel& model, const GradientSet& grads, AdamState& state, double learning_rate,
                      double weight_decay, TrainableMask trainable = {}, const AdamHyper& hyper = {}) {
  if (!grads.finite()) throw NumericError("non-finite gradient; optimiser step aborted");
  if (!grads.dV.same_shape(model.V) || !grads.dU.same_shape(model.U) || grads.dw_attn.size() != model.l ||
      grads.dw_clf.size() != model.m || grads.dw_inc.has_value() != model.fusion.has_value()) {
    throw ShapeError("gradient shapes differ from model");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  const double lr = learning_rate;

  if (trainable.attention_projections) {
    detail::adam_update(model.V.data, grads.dV.data, state.first.dV.data, state.second.dV.data, weight_decay, lr, c1,
                        c2, hyper);
    detail::adam_update(model.U.data, grads.dU.data, state.first.dU.data, state.second.dU.data, weight_decay, lr, c1,
                        c2, hyper);
  }
  detail::adam_update(model.w_attn, grads.dw_attn, state.first.dw_attn, state.second.dw_attn, weight_decay, lr, c1, c2,
                      hyper);
  detail::adam_update(model.w_clf, grads.dw_clf, state.first.dw_clf, state.second.dw_clf, weight_decay, lr, c1, c2,
                      hyper);
  detail::adam_update({&model.b, 1}, {&grads.db, 1}, {&state.first.db, 1}, {&state.second.db, 1}, 0.0, lr, c1, c2,
                      hyper);
  if (model.fusion && trainable.income_weight) {
    detail::adam_update({&model.fusion->w_inc, 1}, {&*grads.dw_inc, 1}, {&*state.first.dw_inc, 1},
                        {&*state.second.dw_inc, 1}, 0.0, lr, c1, c2, hyper);
  }
}

inline void adam_step(GatedAttentionModel& model, const GradientSet& grads, AdamState& state, const TrainConfig& cfg) {
  adam_step(model, grads, state, cfg.learning_rate, cfg.weight_decay, TrainableMask::from(cfg));
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
  GatedAttentionModel model;  // parameters of the best validation epoch
  TrainHistory history;
  std::size_t best_epoch = 0;
  double pos_weight = 1.0;
};

inline nlohmann::json to_json(const TrainHistory& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"train_accuracy", r.train_accuracy},
                   {"val_accuracy", r.val_accuracy},
                   {"val_macro_f1", r.val_macro_f1}});
  }
  return out;
}

struct BatchResult {
  double loss = 0.0;  // mean over the batch
  GradientSet grads;  // mean over the batch
  std::vector<double> bag_losses;
  std::vector<double> logits;
};

/// Mean loss and exact mean gradient over a batch of labelled bags. Bags are
/// processed in parallel and reduced in ascending index order. `masks` is
/// either empty (no dropout) or holds one mask per bag.
inline BatchResult batch_backward(std::span<const TractBag* const> batch, const GatedAttentionModel& model,
                                  const LossConfig& lcfg, std::span<const DropoutMask> masks = {},
                                  unsigned threads = 1) {
  if (batch.empty()) throw ShapeError("empty batch");
  if (!masks.empty() && masks.size() != batch.size()) throw ShapeError("one dropout mask per bag expected");
  std::vector<BackwardResult> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const TractBag& bag = *batch[i];
    if (!bag.label) throw ConfigError("unlabeled tract " + bag.tract_id + " in a training batch");
    parts[i] = backward(bag, *bag.label, model, lcfg, masks.empty() ? nullptr : &masks[i]);
    if (!std::isfinite(parts[i].loss)) throw NumericError("non-finite loss on tract " + bag.tract_id);
    if (!parts[i].grads.finite()) throw NumericError("non-finite gradient on tract " + bag.tract_id);
  });
  BatchResult total;
  total.grads = GradientSet::zeros_like(model);
  for (const auto& p : parts) {
    total.loss += p.loss;
    total.grads += p.grads;
    total.bag_losses.push_back(p.loss);
    total.logits.push_back(p.logit);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.loss *= inv;
  total.grads *= inv;
  return total;
}

/// Trains a fresh model on split.train, selecting the epoch with the highest
/// validation macro-F1 (earliest on ties) and stopping after `patience`
/// epochs without improvement. All randomness (initialisation, shuffles,
/// dropout masks) comes from one generator seeded with cfg.seed and is drawn
/// on the calling thread, so `threads` never changes the result.
inline TrainResult train(std::span<const TractBag> bags, const SplitPlan& split, const TrainConfig& cfg,
                         unsigned threads = 1) {
  cfg.validate();
  split.validate();
  const auto train_bags = select_bags(bags, split.train);
  const auto val_bags = select_bags(bags, split.validation);
  if (train_bags.empty()) throw DegenerateError("training partition is empty");
  if (val_bags.empty()) throw DegenerateError("validation partition is empty");
  for (const auto* part : {&train_bags, &val_bags}) {
    for (const auto& bag : *part) {
      if (!bag.label) throw DegenerateError("split places unlabeled tract " + bag.tract_id + " in train/validation");
    }
  }

  TrainResult result;
  result.pos_weight = cfg.pos_weight ? *cfg.pos_weight : compute_pos_weight(train_bags);
  compute_pos_weight(train_bags);  // both classes must be present even with an explicit weight
  const LossConfig lcfg{result.pos_weight, cfg.label_smoothing, cfg.dropout_rate};

  const std::size_t m = train_bags.front().dim();
  for (const auto* part : {&train_bags, &val_bags}) {
    for (const auto& bag : *part) {
      if (bag.dim() != m) throw ShapeError("tract " + bag.tract_id + " has embedding dimension " +
                                           std::to_string(bag.dim()) + ", expected " + std::to_string(m));
    }
  }

  std::mt19937_64 rng(cfg.seed);
  GatedAttentionModel model = GatedAttentionModel::glorot(m, cfg.l_dim, rng);
  if (cfg.mean_pool) {
    std::fill(model.V.data.begin(), model.V.data.end(), 0.0);
    std::fill(model.U.data.begin(), model.U.data.end(), 0.0);
  }
  if (cfg.use_income) enable_fusion(model, fit_income_stats(train_bags));

  AdamState state = AdamState::zeros_like(model);
  const TrainableMask trainable = TrainableMask::from(cfg);

  std::vector<std::size_t> order(train_bags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::optional<double> best_f1;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TractBag*> batch;
      std::vector<DropoutMask> masks;
      for (std::size_t i = start; i < stop; ++i) {
        const TractBag& bag = train_bags[order[i]];
        batch.push_back(&bag);
        if (cfg.dropout_rate > 0.0) masks.push_back(DropoutMask::sample(bag.size(), m, cfg.dropout_rate, rng));
      }

      const BatchResult br = batch_backward(batch, model, lcfg, masks, threads);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        loss_sum += br.bag_losses[i];
        const int predicted = sigmoid(br.logits[i]) >= cfg.threshold ? 1 : 0;
        if (predicted == *batch[i]->label) ++correct;
      }
      adam_step(model, br.grads, state, cfg.learning_rate, cfg.weight_decay, trainable);
    }

    const EvalReport val = evaluate(model, val_bags, cfg.threshold, threads);
    const double n = static_cast<double>(train_bags.size());
    result.history.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n, val.accuracy, val.f1_average});

    if (!best_f1 || val.f1_average > *best_f1) {
      best_f1 = val.f1_average;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace foodmil
