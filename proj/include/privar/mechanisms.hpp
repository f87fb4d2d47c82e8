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

// Stateless geo-indistinguishable perturbation of a single location.
//
// Both mechanisms add isotropic planar noise z = x + r (cos t, sin t) with t
// uniform on [0, 2pi) and r drawn from a radial law:
//
//   planar Laplace:  radial density eps^2 r exp(-eps r), sampled through the
//                    lower Lambert W branch;
//   staircase:       piecewise-constant radial density over intervals of
//                    width D, f_i = (1 - e^-eps) e^-(i-1)eps / D on
//                    ((i-1)D, iD], sampled with a closed-form inverse CDF.
//
// Every sampler consumes exactly two uniforms per call, radius first and
// angle second, so a seed fully determines the output sequence.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/lambert_w.hpp"
#include "privar/rng.hpp"

namespace privar {

// Per-release privacy budget, in 1/meters.
class Epsilon {
 public:
  explicit Epsilon(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      std::ostringstream msg;
      msg << "epsilon must be a finite positive number, got " << value;
      Fail(ErrorCode::kInvalidArgument, msg.str());
    }
  }

  double value() const { return value_; }

  friend bool operator==(const Epsilon&, const Epsilon&) = default;

 private:
  double value_;
};

struct StaircaseParams {
  Epsilon epsilon{1.0};
  double delta_width = 1.0;                  // meters
  std::optional<std::uint64_t> n_intervals;  // unset: unbounded staircase

  StaircaseParams() = default;
  explicit StaircaseParams(Epsilon eps, double width = 1.0,
                           std::optional<std::uint64_t> n = std::nullopt)
      : epsilon(eps), delta_width(width), n_intervals(n) {
    Validate();
  }

  void Validate() const {
    if (!(delta_width > 0.0) || !std::isfinite(delta_width)) {
      Fail(ErrorCode::kInvalidArgument, "staircase interval width must be > 0");
    }
    if (n_intervals && *n_intervals == 0) {
      Fail(ErrorCode::kInvalidArgument, "staircase needs at least one interval");
    }
  }
};

struct RadialSample {
  double r = 0.0;      // meters
  double theta = 0.0;  // radians in [0, 2pi)
};

enum class MechanismKind { kPlm, kPsm, kTrPsm };

inline std::string_view MechanismName(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::kPlm: return "plm";
    case MechanismKind::kPsm: return "psm";
    case MechanismKind::kTrPsm: return "trpsm";
  }
  return "unknown";
}

inline MechanismKind ParseMechanism(std::string_view name) {
  if (name == "plm") return MechanismKind::kPlm;
  if (name == "psm") return MechanismKind::kPsm;
  if (name == "trpsm") return MechanismKind::kTrPsm;
  Fail(ErrorCode::kInvalidArgument,
       "unknown mechanism '" + std::string(name) + "' (plm|psm|trpsm)");
}

namespace internal {

inline constexpr double kMaxUniform = 1.0 - 0x1.0p-53;

inline void CheckUnitInterval(double u) {
  if (!(u >= 0.0 && u < 1.0)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "probability " << u << " outside [0, 1)";
    Fail(ErrorCode::kDomain, msg.str());
  }
}

inline void CheckRadius(double r) {
  if (!(r >= 0.0)) {
    std::ostringstream msg;
    msg << "radius " << r << " is negative";
    Fail(ErrorCode::kDomain, msg.str());
  }
}

inline PlanarPoint Displace(const PlanarPoint& x, const RadialSample& s) {
  return {x.x + s.r * std::cos(s.theta), x.y + s.r * std::sin(s.theta)};
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Planar Laplace.

// Planar density eps^2/(2pi) exp(-eps d(x, z)).
inline double PlmPlanarDensity(const PlanarPoint& z, const PlanarPoint& x,
                               Epsilon eps) {
  const double e = eps.value();
  return e * e / (2.0 * std::numbers::pi) * std::exp(-e * Distance(x, z));
}

inline double PlmRadialPdf(double r, Epsilon eps) {
  internal::CheckRadius(r);
  const double e = eps.value();
  return e * e * r * std::exp(-e * r);
}

inline double PlmRadialCdf(double r, Epsilon eps) {
  internal::CheckRadius(r);
  const double er = eps.value() * r;
  // 1 - (1 + er) e^-er, written to stay accurate for small er.
  return -std::expm1(-er) - er * std::exp(-er);
}

// r = -(W_{-1}((u - 1)/e) + 1) / eps.
inline double PlmRadialInverseCdf(double u, Epsilon eps) {
  internal::CheckUnitInterval(u);
  if (u == 0.0) return 0.0;
  const double w = LambertWm1((u - 1.0) / std::numbers::e);
  return std::max(0.0, -(w + 1.0) / eps.value());
}

inline double PlmRadialMean(Epsilon eps) { return 2.0 / eps.value(); }

inline RadialSample PlmRadialSample(Epsilon eps, RngStream& rng) {
  const double u = std::min(rng.Uniform01(), internal::kMaxUniform);
  RadialSample s;
  s.r = PlmRadialInverseCdf(u, eps);
  s.theta = rng.Angle();
  return s;
}

inline PlanarPoint PlmSample(const PlanarPoint& x, Epsilon eps, RngStream& rng) {
  return internal::Displace(x, PlmRadialSample(eps, rng));
}

// ---------------------------------------------------------------------------
// Planar staircase.

namespace internal {

// 1 - e^{-n eps}; the normaliser of a bounded staircase (1 when unbounded).
inline double StaircaseMass(const StaircaseParams& p) {
  if (!p.n_intervals) return 1.0;
  return -std::expm1(-static_cast<double>(*p.n_intervals) * p.epsilon.value());
}

// Interval index i with (i-1)D < r <= iD; r = 0 belongs to interval 1.
inline double StaircaseInterval(double r, double width) {
  if (r == 0.0) return 1.0;
  return std::max(1.0, std::ceil(r / width));
}

}  // namespace internal

// Height of interval i (1-based) of the staircase density.
inline double PsmIntervalDensity(double i, const StaircaseParams& p) {
  const double eps = p.epsilon.value();
  return -std::expm1(-eps) * std::exp(-(i - 1.0) * eps) /
         (internal::StaircaseMass(p) * p.delta_width);
}

inline double PsmRadialPdf(double r, const StaircaseParams& p) {
  internal::CheckRadius(r);
  const double i = internal::StaircaseInterval(r, p.delta_width);
  if (p.n_intervals && i > static_cast<double>(*p.n_intervals)) return 0.0;
  return PsmIntervalDensity(i, p);
}

// C(r) = (1 - e^{-(k-1)eps}) + f_k (r - (k-1)D), divided by the bounded mass.
inline double PsmRadialCdf(double r, const StaircaseParams& p) {
  internal::CheckRadius(r);
  const double eps = p.epsilon.value();
  const double k = internal::StaircaseInterval(r, p.delta_width);
  if (p.n_intervals && k > static_cast<double>(*p.n_intervals)) return 1.0;
  const double below = -std::expm1(-(k - 1.0) * eps);
  const double within = -std::expm1(-eps) * std::exp(-(k - 1.0) * eps) *
                        (r - (k - 1.0) * p.delta_width) / p.delta_width;
  return std::min(1.0, (below + within) / internal::StaircaseMass(p));
}

// Closed-form inverse: k = floor(-ln(1-u)/eps) + 1, then linear within the
// interval. The index is taken from log1p(-u) so that u near 1 keeps its
// precision.
inline double PsmRadialInverseCdf(double u, const StaircaseParams& p) {
  internal::CheckUnitInterval(u);
  if (u == 0.0) return 0.0;
  const double eps = p.epsilon.value();
  const double width = p.delta_width;
  const double mass = internal::StaircaseMass(p);
  // Scaled so the bounded staircase reuses the unbounded formula.
  const double v = u * mass;
  const double tail = p.n_intervals ? 1.0 - v : 1.0 - u;
  double k_minus_1 = std::floor(-std::log1p(-v) / eps);
  if (p.n_intervals) {
    k_minus_1 = std::min(k_minus_1, static_cast<double>(*p.n_intervals) - 1.0);
  }
  // Fraction of interval k covered: (e^{-(k-1)eps} - (1-v)) / f_k'.
  double frac = (1.0 - tail * std::exp(k_minus_1 * eps)) / -std::expm1(-eps);
  frac = std::clamp(frac, 0.0, 1.0);
  return (k_minus_1 + frac) * width;
}

// E[r] = D (1/(1 - e^-eps) - 1/2) for the unbounded staircase; the bounded
// case sums the finite geometric series.
inline double PsmRadialMean(const StaircaseParams& p) {
  const double eps = p.epsilon.value();
  const double q = std::exp(-eps);
  if (!p.n_intervals) return p.delta_width * (1.0 / (1.0 - q) - 0.5);
  const double n = static_cast<double>(*p.n_intervals);
  // sum_{i=1}^n (1-q) q^{i-1} (i - 1/2) / (1 - q^n)
  const double qn = std::pow(q, n);
  const double sum_i = (1.0 - (n + 1.0) * qn + n * qn * q) / (1.0 - q);
  return p.delta_width * (sum_i / (1.0 - qn) - 0.5);
}

inline RadialSample PsmRadialSample(const StaircaseParams& p, RngStream& rng) {
  const double u = std::min(rng.Uniform01(), internal::kMaxUniform);
  RadialSample s;
  s.r = PsmRadialInverseCdf(u, p);
  s.theta = rng.Angle();
  return s;
}

// Radius only; consumes a single uniform. Used for the privatized threshold.
inline double PsmRadius(const StaircaseParams& p, RngStream& rng) {
  return PsmRadialInverseCdf(std::min(rng.Uniform01(), internal::kMaxUniform),
                             p);
}

inline PlanarPoint PsmSample(const PlanarPoint& x, const StaircaseParams& p,
                             RngStream& rng) {
  return internal::Displace(x, PsmRadialSample(p, rng));
}

}  // namespace privar
