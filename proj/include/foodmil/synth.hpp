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
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "foodmil/error.hpp"
#include "foodmil/geodata.hpp"
#include "foodmil/geometry.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

/// Planted-witness multiple-instance dataset. Negative bags hold only
/// background draws N(0, noise_std^2 I); positive bags have ceil(witness_rate K)
/// of their instances shifted by `separation` along one hidden unit direction.
struct SynthConfig {
  std::size_t n_tracts = 600;
  std::size_t k_min = 5;
  std::size_t k_max = 20;
  std::size_t m = 32;
  double positive_rate = 0.28;
  double witness_rate = 0.2;
  double separation = 2.0;
  double noise_std = 0.6;
  std::size_t n_cities = 25;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_tracts < 1) throw ConfigError("n_tracts must be at least 1");
    if (k_min < 1 || k_min > k_max) throw ConfigError("bag sizes need 1 <= k_min <= k_max");
    if (m < 1) throw ConfigError("embedding dimension must be at least 1");
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw ConfigError("positive_rate must lie in (0, 1)");
    if (!(witness_rate > 0.0 && witness_rate <= 1.0)) throw ConfigError("witness_rate must lie in (0, 1]");
    if (!(separation >= 0.0)) throw ConfigError("separation must be non-negative");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
    if (n_cities < 1) throw ConfigError("n_cities must be at least 1");
    if (n_tracts > kMaxCols * kMaxRows) throw ConfigError("n_tracts exceeds the synthetic grid capacity");
  }

  static constexpr std::size_t kMaxCols = 340;
  static constexpr std::size_t kMaxRows = 160;
};

struct SynthDataset {
  std::vector<TractBag> bags;
  std::vector<TractBoundary> boundaries;
  std::map<std::string, std::optional<double>> incomes;
  std::unordered_set<std::string> witness_ids;
  std::vector<double> direction;
};

inline std::string synth_city_name(std::size_t i) {
  static const std::array<const char*, 25> kCities = {
      "New York",     "Los Angeles", "Chicago",     "Houston",      "Phoenix",
      "Philadelphia", "San Antonio", "San Diego",   "Dallas",       "Austin",
      "Jacksonville", "Fort Worth",  "Columbus",    "Charlotte",    "Indianapolis",
      "San Francisco", "Seattle",    "Denver",      "Washington",   "Boston",
      "Nashville",    "Detroit",     "Portland",    "Las Vegas",    "Memphis"};
  if (i < kCities.size()) return kCities[i];
  return "City " + std::to_string(i + 1);
}

inline std::string synth_geoid(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "99%09zu", i);
  return buf;
}

/// Unit grid square owned by tract i, as a closed counter-clockwise ring.
inline TractBoundary synth_square(std::size_t i, std::size_t cols) {
  const double lon0 = -170.0 + static_cast<double>(i % cols);
  const double lat0 = -80.0 + static_cast<double>(i / cols);
  Ring ring = {{lon0, lat0}, {lon0 + 1, lat0}, {lon0 + 1, lat0 + 1}, {lon0, lat0 + 1}, {lon0, lat0}};
  return {synth_geoid(i), {Polygon{{ring}}}};
}

inline SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  SynthDataset ds;

  ds.direction.resize(cfg.m);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : ds.direction) {
      x = unit_normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : ds.direction) x /= norm;

  // Exact class prior by quota.
  const auto n_pos = static_cast<std::size_t>(std::llround(cfg.positive_rate * static_cast<double>(cfg.n_tracts)));
  std::vector<std::size_t> perm(cfg.n_tracts);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> labels(cfg.n_tracts, 0);
  for (std::size_t i = 0; i < n_pos; ++i) labels[perm[i]] = 1;

  const std::size_t cols = std::max<std::size_t>(
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.n_tracts)))),
      (cfg.n_tracts + SynthConfig::kMaxRows - 1) / SynthConfig::kMaxRows);

  std::uniform_int_distribution<std::size_t> bag_size(cfg.k_min, cfg.k_max);
  std::uniform_real_distribution<double> offset(0.01, 0.99);
  std::normal_distribution<double> income_noise(55000.0, 10000.0);

  for (std::size_t t = 0; t < cfg.n_tracts; ++t) {
    TractBoundary square = synth_square(t, cols);
    const LonLat corner = square.polygons[0].rings[0][0];
    TractBag bag;
    bag.tract_id = square.tract_id;
    bag.label = labels[t];
    bag.city = synth_city_name(t % cfg.n_cities);

    const std::size_t k = bag_size(rng);
    std::vector<bool> witness(k, false);
    if (labels[t] == 1) {
      const auto n_wit = static_cast<std::size_t>(std::ceil(cfg.witness_rate * static_cast<double>(k) - 1e-9));
      std::vector<std::size_t> slots(k);
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      std::shuffle(slots.begin(), slots.end(), rng);
      for (std::size_t i = 0; i < std::min(n_wit, k); ++i) witness[slots[i]] = true;
    }
    for (std::size_t i = 0; i < k; ++i) {
      InstanceEmbedding inst;
      inst.image_id = bag.tract_id + "_" + std::to_string(i);
      inst.city = bag.city;
      inst.features.resize(cfg.m);
      for (std::size_t j = 0; j < cfg.m; ++j) {
        inst.features[j] = cfg.noise_std * unit_normal(rng) + (witness[i] ? cfg.separation * ds.direction[j] : 0.0);
      }
      inst.lon = corner.lon + offset(rng);
      inst.lat = corner.lat + offset(rng);
      if (witness[i]) ds.witness_ids.insert(inst.image_id);
      bag.instances.push_back(std::move(inst));
    }

    double income = income_noise(rng) - (labels[t] == 1 ? 15000.0 : 0.0);
    bag.income = std::max(income, 10000.0);
    ds.incomes.emplace(bag.tract_id, bag.income);
    ds.bags.push_back(std::move(bag));
    ds.boundaries.push_back(std::move(square));
  }
  return ds;
}

struct SynthFiles {
  std::string embeddings;
  std::string atlas;
  std::string boundaries;
  std::string incomes;
  std::string witnesses;
};

inline SynthFiles synth_paths(const std::filesystem::path& dir) {
  return {(dir / "embeddings.jsonl").string(), (dir / "atlas.csv").string(), (dir / "boundaries.geojson").string(),
          (dir / "incomes.csv").string(), (dir / "witnesses.txt").string()};
}

/// Writes the dataset as the four ingestion inputs plus a witness list.
/// Positive tracts get exactly one atlas flag, cycling through the columns.
inline SynthFiles write_synth(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const SynthFiles files = synth_paths(dir);

  std::vector<InstanceEmbedding> all;
  std::vector<std::string> witnesses;
  std::map<std::string, std::array<int, 4>> flags;
  for (std::size_t t = 0; t < ds.bags.size(); ++t) {
    const auto& bag = ds.bags[t];
    for (const auto& inst : bag.instances) {
      all.push_back(inst);
      if (ds.witness_ids.contains(inst.image_id)) witnesses.push_back(inst.image_id);
    }
    std::array<int, 4> f{0, 0, 0, 0};
    if (bag.label && *bag.label == 1) f[t % 4] = 1;
    flags.emplace(bag.tract_id, f);
  }
  write_embeddings(files.embeddings, all);
  write_atlas(files.atlas, flags);
  write_boundaries(files.boundaries, ds.boundaries);
  write_incomes(files.incomes, ds.incomes);

  std::ofstream w(files.witnesses);
  if (!w) throw Error("cannot write " + files.witnesses);
  for (const auto& id : witnesses) w << id << '\n';
  return files;
}

}  // namespace foodmil
