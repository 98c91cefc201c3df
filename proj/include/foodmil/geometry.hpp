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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foodmil/error.hpp"
#include "foodmil/parallel.hpp"

namespace foodmil {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const LonLat&, const LonLat&) = default;
};

/// Closed vertex list: first vertex repeated as the last.
using Ring = std::vector<LonLat>;

/// Outer ring followed by zero or more holes.
struct Polygon {
  std::vector<Ring> rings;
};

struct TractBoundary {
  std::string tract_id;
  std::vector<Polygon> polygons;  // more than one for multi-polygons
};

struct BoundingBox {
  double min_lon = std::numeric_limits<double>::infinity();
  double min_lat = std::numeric_limits<double>::infinity();
  double max_lon = -std::numeric_limits<double>::infinity();
  double max_lat = -std::numeric_limits<double>::infinity();

  void extend(const LonLat& p) {
    min_lon = std::min(min_lon, p.lon);
    min_lat = std::min(min_lat, p.lat);
    max_lon = std::max(max_lon, p.lon);
    max_lat = std::max(max_lat, p.lat);
  }
  bool contains(const LonLat& p) const {
    return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
  }
};

inline void validate_boundary(const TractBoundary& b) {
  if (b.polygons.empty()) throw GeometryError("tract " + b.tract_id + " has no polygons");
  for (const auto& poly : b.polygons) {
    if (poly.rings.empty()) throw GeometryError("tract " + b.tract_id + " has a polygon without rings");
    for (const auto& ring : poly.rings) {
      if (ring.size() < 4) throw GeometryError("tract " + b.tract_id + " has a ring with fewer than 4 vertices");
      if (!(ring.front() == ring.back())) throw GeometryError("tract " + b.tract_id + " has an unclosed ring");
    }
  }
}

/// Even-odd crossing test of a horizontal ray from `p` against one ring.
inline bool ray_crosses_odd(const Ring& ring, const LonLat& p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const LonLat& a = ring[i];
    const LonLat& b = ring[j];
    if ((a.lat > p.lat) != (b.lat > p.lat) &&
        p.lon < (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon) {
      inside = !inside;
    }
  }
  return inside;
}

/// Even-odd rule over all rings of the polygon, so holes exclude.
inline bool contains(const Polygon& poly, const LonLat& p) {
  bool inside = false;
  for (const auto& ring : poly.rings) {
    if (ray_crosses_odd(ring, p)) inside = !inside;
  }
  return inside;
}

inline bool contains(const TractBoundary& b, const LonLat& p) {
  return std::any_of(b.polygons.begin(), b.polygons.end(), [&](const Polygon& poly) { return contains(poly, p); });
}

inline BoundingBox bounding_box(const TractBoundary& b) {
  BoundingBox box;
  for (const auto& poly : b.polygons) {
    for (const auto& ring : poly.rings) {
      for (const auto& v : ring) box.extend(v);
    }
  }
  return box;
}

/// Result of locating one point: the first containing boundary in input
/// order, plus how many boundaries contained it in total.
struct PointMatch {
  std::optional<std::size_t> boundary;
  std::size_t hits = 0;
};

/// Uniform grid over the boundaries' joint extent. Each cell lists, in input
/// order, the boundaries whose bounding box overlaps it.
class BoundaryIndex {
 public:
  explicit BoundaryIndex(std::span<const TractBoundary> boundaries) : boundaries_(boundaries) {
    boxes_.reserve(boundaries.size());
    for (const auto& b : boundaries) {
      validate_boundary(b);
      boxes_.push_back(bounding_box(b));
      extent_.extend({boxes_.back().min_lon, boxes_.back().min_lat});
      extent_.extend({boxes_.back().max_lon, boxes_.back().max_lat});
    }
    if (boundaries.empty()) return;
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(boundaries.size()))));
    nx_ = ny_ = std::max<std::size_t>(1, side);
    cell_w_ = std::max((extent_.max_lon - extent_.min_lon) / static_cast<double>(nx_), 1e-12);
    cell_h_ = std::max((extent_.max_lat - extent_.min_lat) / static_cast<double>(ny_), 1e-12);
    cells_.resize(nx_ * ny_);
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      const auto& box = boxes_[i];
      for (std::size_t cy = cell_y(box.min_lat); cy <= cell_y(box.max_lat); ++cy) {
        for (std::size_t cx = cell_x(box.min_lon); cx <= cell_x(box.max_lon); ++cx) {
          cells_[cy * nx_ + cx].push_back(i);
        }
      }
    }
  }

  PointMatch locate(const LonLat& p) const {
    PointMatch match;
    if (cells_.empty() || !extent_.contains(p)) return match;
    for (std::size_t i : cells_[cell_y(p.lat) * nx_ + cell_x(p.lon)]) {
      if (boxes_[i].contains(p) && contains(boundaries_[i], p)) {
        if (!match.boundary) match.boundary = i;
        ++match.hits;
      }
    }
    return match;
  }

  std::size_t size() const { return boundaries_.size(); }

 private:
  std::size_t cell_x(double lon) const { return clamp_cell((lon - extent_.min_lon) / cell_w_, nx_); }
  std::size_t cell_y(double lat) const { return clamp_cell((lat - extent_.min_lat) / cell_h_, ny_); }
  static std::size_t clamp_cell(double v, std::size_t n) {
    if (!(v > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(v), n - 1);
  }

  std::span<const TractBoundary> boundaries_;
  std::vector<BoundingBox> boxes_;
  BoundingBox extent_;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  double cell_w_ = 1.0;
  double cell_h_ = 1.0;
  std::vector<std::vector<std::size_t>> cells_;
};

/// Locates every point; results are aligned with `points`.
inline std::vector<PointMatch> locate_points(std::span<const LonLat> points, std::span<const TractBoundary> boundaries,
                                             unsigned threads = 1) {
  const BoundaryIndex index(boundaries);
  std::vector<PointMatch> out(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) { out[i] = index.locate(points[i]); });
  return out;
}

}  // namespace foodmil
