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

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "foodmil/error.hpp"
#include "foodmil/linalg.hpp"

namespace foodmil {

/// One geolocated street-level image reduced to its embedding vector.
struct InstanceEmbedding {
  std::string image_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string city;
  std::vector<double> features;
};

/// A census tract and every image that fell inside it. `label` is 1 for
/// food insecure, 0 for food secure, and empty for inference-only tracts.
struct TractBag {
  std::string tract_id;
  std::vector<InstanceEmbedding> instances;
  std::optional<int> label;
  std::optional<double> income;
  std::string city;

  std::size_t size() const { return instances.size(); }
  std::size_t dim() const { return instances.empty() ? 0 : instances.front().features.size(); }
};

/// Late-fusion parameters: the income weight and the training-set
/// normalisation statistics it was fit against.
struct FusionBlock {
  double w_inc = 0.0;
  double income_mean = 0.0;
  double income_std = 1.0;

  friend bool operator==(const FusionBlock&, const FusionBlock&) = default;
};

struct GatedAttentionModel {
  std::size_t m = 0;  // embedding dimension
  std::size_t l = 0;  // attention hidden dimension
  Matrix V;           // tanh branch, L x M
  Matrix U;           // sigmoid gate, L x M
  std::vector<double> w_attn;
  std::vector<double> w_clf;
  double b = 0.0;
  std::optional<FusionBlock> fusion;

  static GatedAttentionModel zeros(std::size_t m, std::size_t l) {
    if (m == 0 || l == 0) throw ShapeError("model dimensions must be positive");
    GatedAttentionModel model;
    model.m = m;
    model.l = l;
    model.V = Matrix(l, m);
    model.U = Matrix(l, m);
    model.w_attn.assign(l, 0.0);
    model.w_clf.assign(m, 0.0);
    return model;
  }

  /// Glorot-uniform weights for V, U, w_attn and w_clf; zero bias. Draw
  /// order is V, U, w_attn, w_clf, row-major.
  template <typename Rng>
  static GatedAttentionModel glorot(std::size_t m, std::size_t l, Rng& rng) {
    GatedAttentionModel model = zeros(m, l);
    auto fill = [&rng](std::span<double> out, std::size_t fan_in, std::size_t fan_out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& x : out) x = dist(rng);
    };
    fill(model.V.data, m, l);
    fill(model.U.data, m, l);
    fill(model.w_attn, l, 1);
    fill(model.w_clf, m, 1);
    return model;
  }

  void validate() const {
    if (m == 0 || l == 0) throw ShapeError("model dimensions must be positive");
    if (V.rows != l || V.cols != m) throw ShapeError("V must be L x M");
    if (U.rows != l || U.cols != m) throw ShapeError("U must be L x M");
    if (w_attn.size() != l) throw ShapeError("w_attn must have length L");
    if (w_clf.size() != m) throw ShapeError("w_clf must have length M");
    if (!all_finite(V.data) || !all_finite(U.data) || !all_finite(w_attn) || !all_finite(w_clf) ||
        !std::isfinite(b)) {
      throw NumericError("model parameters must be finite");
    }
    if (fusion) {
      if (!std::isfinite(fusion->w_inc) || !std::isfinite(fusion->income_mean) ||
          !std::isfinite(fusion->income_std)) {
        throw NumericError("fusion parameters must be finite");
      }
      if (!(fusion->income_std > 0.0)) throw DegenerateError("fusion income_std must be positive");
    }
  }

  friend bool operator==(const GatedAttentionModel&, const GatedAttentionModel&) = default;
};

struct LossConfig {
  double pos_weight = 1.0;
  double label_smoothing = 0.0;
  double dropout_rate = 0.0;

  void validate() const {
    if (!(pos_weight > 0.0) || !std::isfinite(pos_weight)) throw ConfigError("pos_weight must be positive");
    if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) {
      throw ConfigError("label_smoothing must lie in [0, 0.5)");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  }
};

/// Partial derivatives of the loss, one entry per model parameter.
struct GradientSet {
  Matrix dV;
  Matrix dU;
  std::vector<double> dw_attn;
  std::vector<double> dw_clf;
  double db = 0.0;
  std::optional<double> dw_inc;

  static GradientSet zeros_like(const GatedAttentionModel& model) {
    GradientSet g;
    g.dV = Matrix(model.l, model.m);
    g.dU = Matrix(model.l, model.m);
    g.dw_attn.assign(model.l, 0.0);
    g.dw_clf.assign(model.m, 0.0);
    if (model.fusion) g.dw_inc = 0.0;
    return g;
  }

  GradientSet& operator+=(const GradientSet& other) {
    if (!dV.same_shape(other.dV) || !dU.same_shape(other.dU) || dw_attn.size() != other.dw_attn.size() ||
        dw_clf.size() != other.dw_clf.size() || dw_inc.has_value() != other.dw_inc.has_value()) {
      throw ShapeError("gradient shapes differ");
    }
    for (std::size_t i = 0; i < dV.data.size(); ++i) dV.data[i] += other.dV.data[i];
    for (std::size_t i = 0; i < dU.data.size(); ++i) dU.data[i] += other.dU.data[i];
    for (std::size_t i = 0; i < dw_attn.size(); ++i) dw_attn[i] += other.dw_attn[i];
    for (std::size_t i = 0; i < dw_clf.size(); ++i) dw_clf[i] += other.dw_clf[i];
    db += other.db;
    if (dw_inc) *dw_inc += *other.dw_inc;
    return *this;
  }

  GradientSet& operator*=(double s) {
    for (double& x : dV.data) x *= s;
    for (double& x : dU.data) x *= s;
    for (double& x : dw_attn) x *= s;
    for (double& x : dw_clf) x *= s;
    db *= s;
    if (dw_inc) *dw_inc *= s;
    return *this;
  }

  bool finite() const {
    return all_finite(dV.data) && all_finite(dU.data) && all_finite(dw_attn) && all_finite(dw_clf) &&
           std::isfinite(db) && (!dw_inc || std::isfinite(*dw_inc));
  }
};

/// Per-entry keep flags for inverted dropout over a K x M instance matrix.
struct DropoutMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double rate = 0.0;
  std::vector<unsigned char> keep;

  template <typename Rng>
  static DropoutMask sample(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    DropoutMask mask{rows, cols, rate, std::vector<unsigned char>(rows * cols, 1)};
    std::bernoulli_distribution survive(1.0 - rate);
    for (auto& k : mask.keep) k = survive(rng) ? 1 : 0;
    return mask;
  }
};

}  // namespace foodmil
