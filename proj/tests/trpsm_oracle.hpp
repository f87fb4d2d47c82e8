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


// Reference interpreter for thresholded staircase reporting, written without
// calling the library's samplers. The staircase radius is found by bisection
// on a CDF built from interval sums; the budget is recomputed from counters
// on every step instead of being decremented.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "privar/rng.hpp"

namespace privar::testing {

enum class OracleKind { kInitial, kReleased, kReused, kExhausted };

struct OracleStep {
  OracleKind kind;
  double x = 0.0;
  double y = 0.0;
  double spend = 0.0;
};

inline double OracleStaircaseCdf(double r, double eps, double width) {
  const double i = r <= 0.0 ? 1.0 : std::ceil(r / width);
  const double below = 1.0 - std::exp(-(i - 1.0) * eps);
  const double height = (1.0 - std::exp(-eps)) * std::exp(-(i - 1.0) * eps) / width;
  return below + height * (r - (i - 1.0) * width);
}

inline double OracleStaircaseRadius(double u, double eps, double width) {
  double lo = 0.0, hi = width;
  while (OracleStaircaseCdf(hi, eps, width) < u) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (OracleStaircaseCdf(mid, eps, width) < u) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

class TrPsmOracle {
 public:
  TrPsmOracle(std::uint64_t seed, double eps, double eps_total, double delta,
              double width = 1.0)
      : rng_(seed), eps_(eps), total_(eps_total), delta_(delta), width_(width) {}

  explicit TrPsmOracle(const RngStream& rng, double eps, double eps_total,
                       double delta, double width = 1.0)
      : rng_(rng), eps_(eps), total_(eps_total), delta_(delta), width_(width) {}

  OracleStep Start(double x, double y) {
    threshold_ = delta_ + Radius();
    Release(x, y);
    steps_ = 0;
    return {OracleKind::kInitial, zx_, zy_, (steps_ + 2) * eps_};
  }

  OracleStep Step(double x, double y) {
    const double d = std::sqrt((x - zx_) * (x - zx_) + (y - zy_) * (y - zy_));
    if (d < threshold_) return {OracleKind::kReused, zx_, zy_, (steps_ + 2) * eps_};
    const double left = total_ - (steps_ + 2) * eps_;
    if (left < eps_ * (1.0 - 1e-9)) {
      return {OracleKind::kExhausted, zx_, zy_, (steps_ + 2) * eps_};
    }
    Release(x, y);
    steps_ += 1;
    return {OracleKind::kReleased, zx_, zy_, (steps_ + 2) * eps_};
  }

  void TopUp(double extra) { total_ += extra; }

  double threshold() const { return threshold_; }
  double left() const { return total_ - (steps_ + 2) * eps_; }
  double releases() const { return steps_; }

 private:
  double Radius() {
    double u = rng_.Uniform01();
    if (u > 1.0 - 0x1.0p-53) u = 1.0 - 0x1.0p-53;
    return u == 0.0 ? 0.0 : OracleStaircaseRadius(u, eps_, width_);
  }

  void Release(double x, double y) {
    const double r = Radius();
    double theta = 2.0 * std::numbers::pi * rng_.Uniform01();
    if (theta >= 2.0 * std::numbers::pi) theta = 0.0;
    zx_ = x + r * std::cos(theta);
    zy_ = y + r * std::sin(theta);
  }

  RngStream rng_;
  double eps_, total_, delta_, width_;
  double threshold_ = 0.0;
  double zx_ = 0.0, zy_ = 0.0;
  double steps_ = 0.0;
};

}  // namespace privar::testing
