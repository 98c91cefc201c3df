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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "foodmil/error.hpp"
#include "foodmil/mil.hpp"
#include "foodmil/parallel.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

/// Confusion counts with class 1 (food insecure) as the positive class.
struct EvalReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  double accuracy = 0.0;
  double f1_insecure = 0.0;
  double f1_secure = 0.0;
  double f1_average = 0.0;  // unweighted mean of the two per-class scores

  std::size_t total() const { return tp + fp + fn + tn; }
};

/// TP / (TP + (FP + FN) / 2), defined as 0 when the denominator is 0.
inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn);
  if (denom == 0.0) return 0.0;
  return static_cast<double>(tp) / denom;
}

inline EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  EvalReport r{tp, fp, fn, tn};
  const std::size_t n = r.total();
  r.accuracy = n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
  r.f1_insecure = f1_score(tp, fp, fn);
  // Class 0 as positive: its true positives are our true negatives.
  r.f1_secure = f1_score(tn, fn, fp);
  r.f1_average = (r.f1_insecure + r.f1_secure) / 2.0;
  return r;
}

struct BagPrediction {
  std::string tract_id;
  double logit = 0.0;
  double probability = 0.0;
  int predicted = 0;
  std::optional<int> label;
};

/// Dropout-free predictions, one per bag, in input order.
inline std::vector<BagPrediction> predict_bags(const GatedAttentionModel& model, std::span<const TractBag> bags,
                                               double threshold = 0.5, unsigned threads = 1) {
  std::vector<BagPrediction> out(bags.size());
  parallel_for(bags.size(), threads, [&](std::size_t i) {
    const double z = forward(bags[i], model).logit;
    const double p = sigmoid(z);
    out[i] = {bags[i].tract_id, z, p, p >= threshold ? 1 : 0, bags[i].label};
  });
  return out;
}

inline EvalReport evaluate_predictions(std::span<const BagPrediction> preds) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& p : preds) {
    if (!p.label) throw ConfigError("cannot evaluate unlabeled tract " + p.tract_id);
    const int y = *p.label;
    if (p.predicted == 1 && y == 1) ++tp;
    else if (p.predicted == 1 && y == 0) ++fp;
    else if (p.predicted == 0 && y == 1) ++fn;
    else ++tn;
  }
  return report_from_counts(tp, fp, fn, tn);
}

inline EvalReport evaluate(const GatedAttentionModel& model, std::span<const TractBag> bags,
                           double threshold = 0.5, unsigned threads = 1) {
  for (const auto& bag : bags) {
    if (!bag.label) throw ConfigError("cannot evaluate unlabeled tract " + bag.tract_id);
  }
  const auto preds = predict_bags(model, bags, threshold, threads);
  return evaluate_predictions(preds);
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"n", r.total()},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"tn", r.tn},
          {"accuracy", r.accuracy},
          {"f1_insecure", r.f1_insecure},
          {"f1_secure", r.f1_secure},
          {"f1_average", r.f1_average}};
}

}  // namespace foodmil
