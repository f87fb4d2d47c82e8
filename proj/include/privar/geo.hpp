//
// Copyright 2026 The privar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Coordinate frames. Mechanism and metric math runs on PlanarPoint (meters in
// a local east/north frame); GeoPoint only appears at file and wire
// boundaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "privar/error.hpp"

namespace privar {

inline constexpr double kEarthRadiusMeters = 6371000.0;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool IsValid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

struct PlanarPoint {
  double x = 0.0;  // meters east
  double y = 0.0;  // meters north

  friend bool operator==(const PlanarPoint&, const PlanarPoint&) = default;

  PlanarPoint operator+(const PlanarPoint& o) const { return {x + o.x, y + o.y}; }
  PlanarPoint operator-(const PlanarPoint& o) const { return {x - o.x, y - o.y}; }
};

inline bool IsFinite(const PlanarPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y);
}

inline double Distance(const PlanarPoint& a, const PlanarPoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double Norm(const PlanarPoint& p) { return std::hypot(p.x, p.y); }

// Equirectangular projection about a fixed origin, using the mean Earth
// radius. Accurate to well below GPS noise over a few kilometers.
class Projection {
 public:
  // Degrees of latitude/longitude away from the origin accepted by Project.
  static constexpr double kValidityDegrees = 1.0;
  // Planar radius accepted by Unproject: a little over one degree of arc, so
  // that a one-degree offset round-trips.
  static constexpr double kValidityMeters = 112000.0;

  Projection() = default;
  explicit Projection(GeoPoint origin) : origin_(origin) {
    if (!IsValid(origin) || std::abs(origin.lat) >= 89.0) {
      std::ostringstream msg;
      msg << "projection origin (" << origin.lat << ", " << origin.lon
          << ") is not a usable WGS84 point";
      Fail(ErrorCode::kDomain, msg.str());
    }
    cos_lat_ = std::cos(ToRadians(origin.lat));
  }

  const GeoPoint& origin() const { return origin_; }

  PlanarPoint Project(const GeoPoint& p) const {
    const double dlat = p.lat - origin_.lat;
    const double dlon = WrapLongitude(p.lon - origin_.lon);
    if (!IsValid(p) || std::abs(dlat) > kValidityDegrees ||
        std::abs(dlon) > kValidityDegrees) {
      std::ostringstream msg;
      msg << "point (" << p.lat << ", " << p.lon
          << ") lies outside the local frame around (" << origin_.lat << ", "
          << origin_.lon << ")";
      Fail(ErrorCode::kDomain, msg.str());
    }
    return {kEarthRadiusMeters * cos_lat_ * ToRadians(dlon),
            kEarthRadiusMeters * ToRadians(dlat)};
  }

  GeoPoint Unproject(const PlanarPoint& p) const {
    if (!IsFinite(p) || Norm(p) > kValidityMeters) {
      std::ostringstream msg;
      msg << "planar point (" << p.x << ", " << p.y
          << ") lies outside the local frame";
      Fail(ErrorCode::kDomain, msg.str());
    }
    const double lat = origin_.lat + ToDegrees(p.y / kEarthRadiusMeters);
    const double lon = WrapLongitude(
        origin_.lon + ToDegrees(p.x / (kEarthRadiusMeters * cos_lat_)));
    return {lat, lon};
  }

 private:
  static double ToRadians(double deg) { return deg * std::numbers::pi / 180.0; }
  static double ToDegrees(double rad) { return rad * 180.0 / std::numbers::pi; }
  static double WrapLongitude(double lon) {
    if (lon > 180.0) return lon - 360.0;
    if (lon < -180.0) return lon + 360.0;
    return lon;
  }

  GeoPoint origin_{};
  double cos_lat_ = 1.0;
};

// Haversine great-circle distance, used only to validate the projection.
inline double GreatCircleDistance(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * kRad;
  const double dlon = (b.lon - a.lon) * kRad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kRad) * std::cos(b.lat * kRad) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusMeters * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace privar
