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

// Virtual objects spawned around a released location, and the two AR
// quality-of-service measures built on visibility disks.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/rng.hpp"

namespace privar {

inline constexpr double kDenseSpacing = 50.0;
inline constexpr double kSparseSpacing = 100.0;

struct VirtualObject {
  std::string id;
  PlanarPoint point;
};

struct ObjectFieldConfig {
  double spacing = kSparseSpacing;   // lattice pitch, meters
  double field_radius = 150.0;       // generation extent around the release
  double visibility_radius = 100.0;  // interaction disk

  static ObjectFieldConfig ForDensity(std::string_view density) {
    ObjectFieldConfig cfg;
    if (density == "dense") {
      cfg.spacing = kDenseSpacing;
    } else if (density == "sparse") {
      cfg.spacing = kSparseSpacing;
    } else {
      Fail(ErrorCode::kInvalidArgument,
           "unknown density '" + std::string(density) + "' (sparse|dense)");
    }
    return cfg;
  }

  void Validate() const {
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
      Fail(ErrorCode::kInvalidArgument, "object spacing must be > 0");
    }
    if (!(visibility_radius > 0.0) || !std::isfinite(visibility_radius)) {
      Fail(ErrorCode::kInvalidArgument, "visibility radius must be > 0");
    }
    if (!(field_radius >= 0.0) || !std::isfinite(field_radius)) {
      Fail(ErrorCode::kInvalidArgument, "field radius must be >= 0");
    }
  }
};

// Square lattice of pitch `spacing` offset by `phase` from z, clipped to the
// disk of radius field_radius around z. Phase components lie in [0, spacing).
inline std::vector<VirtualObject> GenerateFieldWithPhase(
    const PlanarPoint& z, const ObjectFieldConfig& cfg, PlanarPoint phase) {
  cfg.Validate();
  std::vector<VirtualObject> out;
  const double s = cfg.spacing;
  const double r = cfg.field_radius;
  const auto lo_i = static_cast<std::int64_t>(std::floor((-r - phase.x) / s));
  const auto hi_i = static_cast<std::int64_t>(std::ceil((r - phase.x) / s));
  const auto lo_j = static_cast<std::int64_t>(std::floor((-r - phase.y) / s));
  const auto hi_j = static_cast<std::int64_t>(std::ceil((r - phase.y) / s));
  for (std::int64_t j = lo_j; j <= hi_j; ++j) {
    for (std::int64_t i = lo_i; i <= hi_i; ++i) {
      const PlanarPoint offset{phase.x + static_cast<double>(i) * s,
                               phase.y + static_cast<double>(j) * s};
      if (Norm(offset) > r) continue;
      out.push_back(VirtualObject{
          "o" + std::to_string(i) + "_" + std::to_string(j), z + offset});
    }
  }
  return out;
}

// Phase drawn uniformly per call (two uniforms).
inline std::vector<VirtualObject> GenerateField(const PlanarPoint& z,
                                                const ObjectFieldConfig& cfg,
                                                RngStream& rng) {
  cfg.Validate();
  const PlanarPoint phase{rng.Uniform01() * cfg.spacing,
                          rng.Uniform01() * cfg.spacing};
  return GenerateFieldWithPhase(z, cfg, phase);
}

// |V| and |V ∩ V^| for one step.
struct VisibilityCounts {
  std::uint64_t visible_true = 0;
  std::uint64_t visible_both = 0;
};

inline VisibilityCounts CountVisibility(const PlanarPoint& x_true,
                                        const PlanarPoint& z,
                                        std::span<const VirtualObject> objs,
                                        const ObjectFieldConfig& cfg) {
  VisibilityCounts c;
  for (const auto& o : objs) {
    if (Distance(o.point, x_true) > cfg.visibility_radius) continue;
    ++c.visible_true;
    if (Distance(o.point, z) <= cfg.visibility_radius) ++c.visible_both;
  }
  return c;
}

// Percentage of objects visible from the true location that are also visible
// from the release. nullopt when nothing is visible from the true location;
// such steps are left out of averages.
inline std::optional<double> CatchableFraction(
    const PlanarPoint& x_true, const PlanarPoint& z,
    std::span<const VirtualObject> objs, const ObjectFieldConfig& cfg) {
  const VisibilityCounts c = CountVisibility(x_true, z, objs, cfg);
  if (c.visible_true == 0) return std::nullopt;
  return 100.0 * static_cast<double>(c.visible_both) /
         static_cast<double>(c.visible_true);
}

// Sum over steps of |V_t| - |V_t ∩ V^_t|.
inline std::uint64_t AccumulatedLoss(std::span<const VisibilityCounts> steps) {
  std::uint64_t total = 0;
  for (const auto& s : steps) {
    if (s.visible_both > s.visible_true) {
      Fail(ErrorCode::kInvalidArgument,
           "step has more jointly visible objects than visible ones");
    }
    total += s.visible_true - s.visible_both;
  }
  return total;
}

}  // namespace privar
