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
#include <optional>
#include <span>
#include <vector>

#include "foodmil/error.hpp"
#include "foodmil/linalg.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

/// Median-household-income normalisation statistics (population moments
/// over the training partition).
struct IncomeStats {
  double mean = 0.0;
  double std = 1.0;
};

inline IncomeStats fit_income_stats(std::span<const TractBag> training_bags) {
  std::vector<double> known;
  for (const auto& bag : training_bags) {
    if (bag.income) {
      if (!std::isfinite(*bag.income)) throw NumericError("income of tract " + bag.tract_id + " is not finite");
      known.push_back(*bag.income);
    }
  }
  if (known.empty()) throw ConfigError("fusion unavailable: no training tract has a known income");
  if (known.size() < 2) throw ConfigError("fusion needs at least 2 training tracts with known income");

  double sum = 0.0;
  for (double x : known) sum += x;
  const double mean = sum / static_cast<double>(known.size());
  double ss = 0.0;
  for (double x : known) ss += (x - mean) * (x - mean);
  const double std = std::sqrt(ss / static_cast<double>(known.size()));
  if (!(std > 0.0)) throw DegenerateError("income standard deviation is zero");
  return {mean, std};
}

/// Attaches a fusion block with w_inc = 0, so the fused model starts out
/// computing exactly the image-only logit.
inline void enable_fusion(GatedAttentionModel& model, const IncomeStats& stats) {
  model.fusion = FusionBlock{0.0, stats.mean, stats.std};
}

/// z-score of an income under the model's statistics; missing income maps
/// to 0, i.e. the training mean.
inline double income_zscore(std::optional<double> income, const FusionBlock& block) {
  if (!income) return 0.0;
  return (*income - block.income_mean) / block.income_std;
}

inline double fused_logit(std::span<const double> pooled, std::optional<double> income,
                          const GatedAttentionModel& model) {
  if (!model.fusion) throw ConfigError("model has no fusion block");
  if (pooled.size() != model.m) throw ShapeError("pooled vector length differs from model M");
  const double image_part = dot(model.w_clf, pooled) + model.b;
  return image_part + model.fusion->w_inc * income_zscore(income, *model.fusion);
}

}  // namespace foodmil
