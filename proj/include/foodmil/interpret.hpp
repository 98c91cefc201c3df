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
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "foodmil/error.hpp"
#include "foodmil/geodata.hpp"
#include "foodmil/geometry.hpp"
#include "foodmil/log.hpp"
#include "foodmil/mil.hpp"
#include "foodmil/parallel.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

struct AttentionRecord {
  std::string tract_id;
  std::string image_id;
  double weight = 0.0;
  std::size_t rank = 0;  // 1 = most attended
};

/// Instance indices of one bag ordered by attention, highest first; ties keep
/// input order.
inline std::vector<std::size_t> attention_order(std::span<const double> weights) {
  std::vector<std::size_t> idx(weights.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  return idx;
}

/// Dropout-free attention weights for every bag, ranked within each tract.
inline std::vector<AttentionRecord> dump_attention(const GatedAttentionModel& model, std::span<const TractBag> bags,
                                                   std::optional<std::size_t> top_k = std::nullopt,
                                                   unsigned threads = 1) {
  std::vector<std::vector<AttentionRecord>> per_bag(bags.size());
  parallel_for(bags.size(), threads, [&](std::size_t b) {
    const auto fw = forward(bags[b], model);
    const auto order = attention_order(fw.attention);
    const std::size_t keep = top_k ? std::min(*top_k, order.size()) : order.size();
    for (std::size_t r = 0; r < keep; ++r) {
      const std::size_t i = order[r];
      per_bag[b].push_back({bags[b].tract_id, bags[b].instances[i].image_id, fw.attention[i], r + 1});
    }
  });
  std::vector<AttentionRecord> out;
  for (auto& recs : per_bag) out.insert(out.end(), recs.begin(), recs.end());
  return out;
}

inline void write_attention_csv(const std::string& path, std::span<const AttentionRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "tract_id,image_id,weight,rank\n";
  for (const auto& r : records) out << r.tract_id << ',' << r.image_id << ',' << r.weight << ',' << r.rank << '\n';
}

struct MapSummary {
  std::size_t features = 0;
  std::size_t skipped = 0;  // bags without a boundary
};

inline double round6(double x) { return std::round(x * 1e6) / 1e6; }

/// GeoJSON FeatureCollection with one feature per bag that has a boundary.
inline nlohmann::json prediction_map(const GatedAttentionModel& model, std::span<const TractBag> bags,
                                     std::span<const TractBoundary> boundaries, double threshold = 0.5,
                                     MapSummary* summary = nullptr) {
  std::unordered_map<std::string, const TractBoundary*> by_id;
  for (const auto& b : boundaries) by_id.emplace(b.tract_id, &b);

  MapSummary s;
  nlohmann::json features = nlohmann::json::array();
  for (const auto& bag : bags) {
    const auto it = by_id.find(bag.tract_id);
    if (it == by_id.end()) {
      ++s.skipped;
      continue;
    }
    const auto fw = forward(bag, model);
    const double p = sigmoid(fw.logit);
    const auto order = attention_order(fw.attention);
    nlohmann::json top = nlohmann::json::array();
    for (std::size_t r = 0; r < std::min<std::size_t>(3, order.size()); ++r) {
      top.push_back(bag.instances[order[r]].image_id);
    }
    features.push_back({{"type", "Feature"},
                        {"properties",
                         {{"geoid", bag.tract_id},
                          {"p_insecure", round6(p)},
                          {"predicted", p >= threshold ? 1 : 0},
                          {"label", bag.label ? nlohmann::json(*bag.label) : nlohmann::json(nullptr)},
                          {"top_image_ids", top}}},
                        {"geometry", geometry_to_json(*it->second)}});
    ++s.features;
  }
  if (s.skipped > 0) warn(std::to_string(s.skipped) + " tracts have no boundary and were left off the map");
  if (summary) *summary = s;
  return {{"type", "FeatureCollection"}, {"features", features}};
}

inline MapSummary emit_prediction_map(const GatedAttentionModel& model, std::span<const TractBag> bags,
                                      std::span<const TractBoundary> boundaries, const std::string& path,
                                      double threshold = 0.5) {
  MapSummary s;
  const auto doc = prediction_map(model, bags, boundaries, threshold, &s);
  std::ofstream out(path);
  if (!out) throw Error("cannot write prediction map " + path);
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing prediction map " + path);
  return s;
}

}  // namespace foodmil
