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
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "foodmil/error.hpp"
#include "foodmil/geometry.hpp"
#include "foodmil/log.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

// ---------------------------------------------------------------------------
// Small text helpers

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::optional<double> parse_double(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

/// One RFC 4180 record: commas separate, double quotes protect, "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::size_t column(const std::string& name, const std::string& path) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      std::string avail;
      for (const auto& h : header) avail += (avail.empty() ? "" : ", ") + h;
      throw ConfigError(path + ": missing column '" + name + "'; available columns: " + avail);
    }
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(table.header.size()) +
                        " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  if (table.header.empty()) throw FormatError(path + ": missing header row");
  return table;
}

}  // namespace detail

/// Canonical 11-character GEOID. Purely numeric ids that lost their leading
/// zeros (a common spreadsheet artefact) are re-padded.
inline std::string normalize_geoid(const std::string& raw) {
  std::string id = detail::trim(raw);
  const bool numeric = !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c); });
  if (numeric && id.size() < 11) id.insert(0, 11 - id.size(), '0');
  if (id.size() != 11) throw FormatError("GEOID '" + raw + "' is not 11 characters");
  return id;
}

// ---------------------------------------------------------------------------
// Embeddings: one JSON object per line

struct EmbeddingSet {
  std::vector<InstanceEmbedding> instances;
  std::size_t m = 0;
};

inline EmbeddingSet load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file " + path);
  EmbeddingSet set;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    InstanceEmbedding inst;
    try {
      const auto j = nlohmann::json::parse(line);
      inst.image_id = j.at("image_id").get<std::string>();
      inst.lat = j.at("lat").get<double>();
      inst.lon = j.at("lon").get<double>();
      inst.city = j.at("city").get<std::string>();
      inst.features = j.at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + e.what());
    }
    if (inst.features.empty()) throw FormatError(where + "empty embedding");
    if (set.m == 0) set.m = inst.features.size();
    if (inst.features.size() != set.m) {
      throw FormatError(where + "embedding has " + std::to_string(inst.features.size()) + " values, expected " +
                        std::to_string(set.m));
    }
    if (!all_finite(inst.features)) throw FormatError(where + "embedding contains non-finite values");
    if (!(inst.lat >= -90.0 && inst.lat <= 90.0) || !(inst.lon >= -180.0 && inst.lon <= 180.0)) {
      throw FormatError(where + "coordinates out of range");
    }
    if (!ids.insert(inst.image_id).second) throw FormatError(where + "duplicate image_id '" + inst.image_id + "'");
    set.instances.push_back(std::move(inst));
  }
  if (set.instances.empty()) warn("embeddings file " + path + " holds no records");
  return set;
}

inline void write_embeddings(const std::string& path, std::span<const InstanceEmbedding> instances) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& inst : instances) {
    const nlohmann::json j = {{"image_id", inst.image_id},
                              {"lat", inst.lat},
                              {"lon", inst.lon},
                              {"city", inst.city},
                              {"embedding", inst.features}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Food access atlas labels

struct AtlasOptions {
  std::string tract_column = "CensusTract";
  std::array<std::string, 4> flag_columns = {"LILATracts_1And10", "LILATracts_halfAnd10", "LILATracts_1And20",
                                             "LILATracts_Vehicle"};
};

/// Food insecure (1) when any of the four flags is set.
inline std::map<std::string, int> load_atlas(const std::string& path, const AtlasOptions& opts = {}) {
  const auto table = detail::read_csv(path);
  const std::size_t tract_col = table.column(opts.tract_column, path);
  std::array<std::size_t, 4> flag_cols{};
  for (std::size_t i = 0; i < 4; ++i) flag_cols[i] = table.column(opts.flag_columns[i], path);

  std::map<std::string, int> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(table.line_numbers[r]) + ": ";
    std::string id;
    try {
      id = normalize_geoid(row[tract_col]);
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
    int label = 0;
    for (std::size_t c : flag_cols) {
      const std::string v = detail::lower(row[c]);
      if (v == "1" || v == "true") {
        label = 1;
      } else if (!(v == "0" || v == "false" || v.empty())) {
        throw FormatError(where + "unrecognised flag value '" + row[c] + "' in column " + table.header[c]);
      }
    }
    if (!labels.emplace(id, label).second) throw FormatError(where + "duplicate tract " + id);
  }
  return labels;
}

inline void write_atlas(const std::string& path, const std::map<std::string, std::array<int, 4>>& flags,
                        const AtlasOptions& opts = {}) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << opts.tract_column;
  for (const auto& c : opts.flag_columns) out << ',' << c;
  out << '\n';
  for (const auto& [id, f] : flags) out << id << ',' << f[0] << ',' << f[1] << ',' << f[2] << ',' << f[3] << '\n';
}

// ---------------------------------------------------------------------------
// Median household income

/// GEOID -> income; empty cells and negative sentinel codes (as used in
/// census tables for suppressed estimates) become missing.
inline std::map<std::string, std::optional<double>> load_incomes(const std::string& path) {
  const auto table = detail::read_csv(path);
  const std::size_t id_col = table.column("GEOID", path);
  const std::size_t inc_col = table.column("median_household_income", path);
  std::map<std::string, std::optional<double>> incomes;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(table.line_numbers[r]) + ": ";
    std::string id;
    try {
      id = normalize_geoid(row[id_col]);
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
    std::optional<double> income;
    if (!row[inc_col].empty()) {
      income = detail::parse_double(row[inc_col]);
      if (!income || !std::isfinite(*income)) throw FormatError(where + "bad income '" + row[inc_col] + "'");
      if (*income < 0.0) income.reset();
    }
    if (!incomes.emplace(id, income).second) throw FormatError(where + "duplicate tract " + id);
  }
  return incomes;
}

inline void write_incomes(const std::string& path, const std::map<std::string, std::optional<double>>& incomes) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(17);
  out << "GEOID,median_household_income\n";
  for (const auto& [id, inc] : incomes) {
    out << id << ',';
    if (inc) out << *inc;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tract boundaries (GeoJSON FeatureCollection)

namespace detail {

inline Ring ring_from_json(const nlohmann::json& j) {
  Ring ring;
  for (const auto& pt : j) {
    if (!pt.is_array() || pt.size() < 2) throw FormatError("boundary vertex must be [lon, lat]");
    ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  return ring;
}

inline Polygon polygon_from_json(const nlohmann::json& j) {
  Polygon poly;
  for (const auto& r : j) poly.rings.push_back(ring_from_json(r));
  return poly;
}

inline nlohmann::json polygon_to_json(const Polygon& poly) {
  nlohmann::json rings = nlohmann::json::array();
  for (const auto& ring : poly.rings) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& v : ring) pts.push_back({v.lon, v.lat});
    rings.push_back(std::move(pts));
  }
  return rings;
}

}  // namespace detail

inline nlohmann::json geometry_to_json(const TractBoundary& b) {
  if (b.polygons.size() == 1) return {{"type", "Polygon"}, {"coordinates", detail::polygon_to_json(b.polygons[0])}};
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& p : b.polygons) coords.push_back(detail::polygon_to_json(p));
  return {{"type", "MultiPolygon"}, {"coordinates", coords}};
}

inline std::vector<TractBoundary> load_boundaries(const std::string& path, const std::string& geoid_property = "GEOID10") {
  std::ifstream in(path);
  if (!in) throw Error("cannot open boundaries file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") || !doc["features"].is_array()) {
    throw FormatError(path + ": expected a GeoJSON FeatureCollection");
  }

  std::vector<TractBoundary> out;
  std::unordered_set<std::string> seen;
  std::size_t index = 0;
  for (const auto& feature : doc["features"]) {
    const std::string where = path + ": feature " + std::to_string(index++) + ": ";
    TractBoundary b;
    try {
      const auto& props = feature.at("properties");
      if (!props.contains(geoid_property)) throw FormatError(where + "missing property '" + geoid_property + "'");
      const auto& id = props.at(geoid_property);
      b.tract_id = normalize_geoid(id.is_string() ? id.get<std::string>() : id.dump());
      const auto& geom = feature.at("geometry");
      const std::string type = geom.at("type").get<std::string>();
      if (type == "Polygon") {
        b.polygons.push_back(detail::polygon_from_json(geom.at("coordinates")));
      } else if (type == "MultiPolygon") {
        for (const auto& p : geom.at("coordinates")) b.polygons.push_back(detail::polygon_from_json(p));
      } else {
        throw GeometryError(where + "unsupported geometry type " + type + " for tract " + b.tract_id);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + e.what());
    }
    validate_boundary(b);
    if (!seen.insert(b.tract_id).second) throw FormatError(where + "duplicate GEOID " + b.tract_id);
    out.push_back(std::move(b));
  }
  return out;
}

inline void write_boundaries(const std::string& path, std::span<const TractBoundary> boundaries,
                             const std::string& geoid_property = "GEOID10") {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& b : boundaries) {
    features.push_back(
        {{"type", "Feature"}, {"properties", {{geoid_property, b.tract_id}}}, {"geometry", geometry_to_json(b)}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Spatial join and bag construction

struct TractAssignment {
  std::vector<std::optional<std::string>> tract_of;  // aligned with the input instances
  std::size_t unmatched = 0;
  std::size_t ambiguous = 0;  // points inside more than one boundary
};

inline TractAssignment assign_to_tracts(std::span<const InstanceEmbedding> points,
                                        std::span<const TractBoundary> boundaries, unsigned threads = 1) {
  if (boundaries.empty()) throw ConfigError("no tract boundaries to join against");
  std::vector<LonLat> coords;
  coords.reserve(points.size());
  for (const auto& p : points) coords.push_back({p.lon, p.lat});
  const auto matches = locate_points(coords, boundaries, threads);

  TractAssignment out;
  out.tract_of.resize(points.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (!matches[i].boundary) {
      ++out.unmatched;
      continue;
    }
    out.tract_of[i] = boundaries[*matches[i].boundary].tract_id;
    if (matches[i].hits > 1) {
      ++out.ambiguous;
      warn("image " + points[i].image_id + " lies in " + std::to_string(matches[i].hits) + " tracts; using " +
           *out.tract_of[i]);
    }
  }
  if (out.unmatched > 0) warn(std::to_string(out.unmatched) + " images fell outside every tract and were dropped");
  return out;
}

struct BagSet {
  std::vector<TractBag> bags;
  std::size_t labeled_without_images = 0;
};

/// Groups instances by assigned tract. Bags appear in order of their first
/// instance and keep instance input order.
inline BagSet build_bags(std::span<const InstanceEmbedding> instances, const TractAssignment& assignment,
                         const std::map<std::string, int>& labels,
                         const std::map<std::string, std::optional<double>>* incomes = nullptr) {
  if (assignment.tract_of.size() != instances.size()) throw ShapeError("assignment does not match instance list");
  BagSet out;
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!assignment.tract_of[i]) continue;
    const std::string& id = *assignment.tract_of[i];
    auto [it, fresh] = slot.emplace(id, out.bags.size());
    if (fresh) {
      TractBag bag;
      bag.tract_id = id;
      bag.city = instances[i].city;
      if (auto l = labels.find(id); l != labels.end()) bag.label = l->second;
      if (incomes) {
        if (auto inc = incomes->find(id); inc != incomes->end()) bag.income = inc->second;
      }
      out.bags.push_back(std::move(bag));
    }
    out.bags[it->second].instances.push_back(instances[i]);
  }
  for (const auto& [id, label] : labels) {
    if (!slot.contains(id)) ++out.labeled_without_images;
  }
  if (out.labeled_without_images > 0) {
    warn(std::to_string(out.labeled_without_images) + " labeled tracts have no images and were left out");
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-call ingestion

struct DataSources {
  std::string embeddings;
  std::string atlas;
  std::string boundaries;
  std::string incomes;  // optional; empty means none
  std::string geoid_property = "GEOID10";
  AtlasOptions atlas_options;
};

struct Dataset {
  std::vector<TractBag> bags;
  std::vector<TractBoundary> boundaries;
  std::size_t m = 0;
  std::size_t images = 0;
  std::size_t unmatched = 0;
};

inline Dataset ingest(const DataSources& src, unsigned threads = 1) {
  Dataset ds;
  auto emb = load_embeddings(src.embeddings);
  const auto labels = load_atlas(src.atlas, src.atlas_options);
  ds.boundaries = load_boundaries(src.boundaries, src.geoid_property);
  std::optional<std::map<std::string, std::optional<double>>> incomes;
  if (!src.incomes.empty()) incomes = load_incomes(src.incomes);

  const auto assignment = assign_to_tracts(emb.instances, ds.boundaries, threads);
  ds.bags = build_bags(emb.instances, assignment, labels, incomes ? &*incomes : nullptr).bags;
  ds.m = emb.m;
  ds.images = emb.instances.size();
  ds.unmatched = assignment.unmatched;
  return ds;
}

}  // namespace foodmil
