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
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "foodmil/error.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

/// Disjoint assignment of tract ids to train / validation / test. Each list
/// follows the order in which the tracts appear in the bag list.
struct SplitPlan {
  std::string method;  // "stratified" or "city-holdout"
  std::uint64_t seed = 0;
  std::string city;    // held-out city, city-holdout only
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  void validate() const {
    std::unordered_set<std::string> seen;
    for (const auto* part : {&train, &validation, &test}) {
      for (const auto& id : *part) {
        if (!seen.insert(id).second) throw ConfigError("split plan lists tract " + id + " more than once");
      }
    }
    if (method != "stratified" && method != "city-holdout") throw ConfigError("unknown split method '" + method + "'");
  }

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

namespace detail {

inline std::size_t floor_share(std::size_t n, double ratio) {
  // The epsilon keeps exact products such as 30 * 0.2 from landing on 5.999...
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

// Largest-remainder apportionment of n items over the three ratios: floor
// every share, then hand the leftovers out by descending fractional part,
// train first on ties. Each count stays within one item of n * ratio.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    counts[p] = floor_share(n, ratios[p]);
    frac[p] = static_cast<double>(n) * ratios[p] - static_cast<double>(counts[p]);
    used += counts[p];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++counts[order[i % 3]];
  return counts;
}

// Reorders each partition to follow bag order.
inline void order_like_bags(SplitPlan& plan, std::span<const TractBag> bags) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < bags.size(); ++i) pos.emplace(bags[i].tract_id, i);
  for (auto* part : {&plan.train, &plan.validation, &plan.test}) {
    std::sort(part->begin(), part->end(), [&](const auto& a, const auto& b) { return pos.at(a) < pos.at(b); });
  }
}

inline std::array<std::vector<std::string>, 2> ids_by_class(std::span<const TractBag> bags) {
  std::array<std::vector<std::string>, 2> out;
  for (const auto& bag : bags) {
    if (bag.label) out[static_cast<std::size_t>(*bag.label)].push_back(bag.tract_id);
  }
  return out;
}

}  // namespace detail

/// Per-class shuffle, then validation, test and train cuts sized by
/// largest-remainder rounding of the ratios. Unlabeled bags are ignored.
inline SplitPlan stratified_split(std::span<const TractBag> bags, std::array<double, 3> ratios = {0.6, 0.2, 0.2},
                                  std::uint64_t seed = 0) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  auto classes = detail::ids_by_class(bags);
  for (int c = 0; c < 2; ++c) {
    if (classes[c].size() < 3) {
      throw DegenerateError("stratified split needs at least 3 tracts of class " + std::to_string(c) + ", found " +
                            std::to_string(classes[c].size()));
    }
  }

  SplitPlan plan;
  plan.method = "stratified";
  plan.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& ids : classes) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto [n_train, n_val, n_test] = detail::apportion(ids.size(), ratios);
    auto it = ids.begin();
    plan.validation.insert(plan.validation.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    plan.test.insert(plan.test.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
    it += static_cast<std::ptrdiff_t>(n_test);
    plan.train.insert(plan.train.end(), it, it + static_cast<std::ptrdiff_t>(n_train));
  }
  if (plan.train.empty() || plan.validation.empty() || plan.test.empty()) {
    throw DegenerateError("too few labeled tracts to fill every partition of a stratified split");
  }
  detail::order_like_bags(plan, bags);
  return plan;
}

/// Leave-one-city-out: every labeled tract of `city` goes to test; the rest
/// is split into train and a stratified validation slice.
inline SplitPlan holdout_city_split(std::span<const TractBag> bags, const std::string& city,
                                    double val_fraction = 0.1, std::uint64_t seed = 0) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  std::set<std::string> known;
  for (const auto& bag : bags) known.insert(bag.city);
  if (!known.contains(city)) {
    std::string list;
    for (const auto& c : known) list += (list.empty() ? "" : ", ") + c;
    throw ConfigError("unknown city '" + city + "'; known cities: " + list);
  }

  SplitPlan plan;
  plan.method = "city-holdout";
  plan.seed = seed;
  plan.city = city;
  std::array<std::vector<std::string>, 2> classes;
  for (const auto& bag : bags) {
    if (!bag.label) continue;
    if (bag.city == city) {
      plan.test.push_back(bag.tract_id);
    } else {
      classes[static_cast<std::size_t>(*bag.label)].push_back(bag.tract_id);
    }
  }
  std::mt19937_64 rng(seed);
  for (auto& ids : classes) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n_val = detail::floor_share(ids.size(), val_fraction);
    plan.validation.insert(plan.validation.end(), ids.begin(), ids.begin() + n_val);
    plan.train.insert(plan.train.end(), ids.begin() + n_val, ids.end());
  }
  if (plan.test.empty()) throw DegenerateError("city '" + city + "' has no labeled tracts");
  if (plan.train.empty() || plan.validation.empty()) {
    throw DegenerateError("too few labeled tracts outside '" + city + "' for train and validation");
  }
  detail::order_like_bags(plan, bags);
  return plan;
}

inline nlohmann::json to_json(const SplitPlan& plan) {
  nlohmann::json j = {{"method", plan.method},         {"seed", plan.seed},
                      {"train", plan.train},           {"validation", plan.validation},
                      {"test", plan.test}};
  if (!plan.city.empty()) j["city"] = plan.city;
  return j;
}

inline SplitPlan split_from_json(const nlohmann::json& j) {
  SplitPlan plan;
  try {
    plan.method = j.at("method").get<std::string>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.city = j.value("city", std::string{});
    plan.train = j.at("train").get<std::vector<std::string>>();
    plan.validation = j.at("validation").get<std::vector<std::string>>();
    plan.test = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

inline void save_split(const SplitPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write split plan " + path);
  out << to_json(plan).dump(2) << '\n';
}

inline SplitPlan load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split plan " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("split plan " + path + ": " + e.what());
  }
  return split_from_json(j);
}

/// Bags of one partition, in bag order. Every listed tract must be present.
inline std::vector<TractBag> select_bags(std::span<const TractBag> bags, const std::vector<std::string>& ids) {
  std::unordered_set<std::string> wanted(ids.begin(), ids.end());
  std::vector<TractBag> out;
  out.reserve(ids.size());
  for (const auto& bag : bags) {
    if (wanted.erase(bag.tract_id)) out.push_back(bag);
  }
  if (!wanted.empty()) {
    throw ConfigError("split plan references tract " + *std::min_element(wanted.begin(), wanted.end()) +
                      " which has no bag");
  }
  return out;
}

}  // namespace foodmil
