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

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "privar/error.hpp"

namespace privar {
namespace internal {

// Starting point for the W_{-1} iteration. Near the branch point the
// expansion in p = -sqrt(2(1 + e x)) is accurate to O(p^4); towards zero the
// asymptotic log series takes over.
inline double LambertWm1InitialGuess(double x) {
  constexpr double kE = std::numbers::e;
  if (x < -0.25) {
    const double p = -std::sqrt(std::max(0.0, 2.0 * (1.0 + kE * x)));
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)));
  }
  const double l1 = std::log(-x);
  const double l2 = std::log(-l1);
  return l1 - l2 + l2 / l1;
}

}  // namespace internal

// Lower real branch of the Lambert W function: the solution w <= -1 of
// w * exp(w) = x for x in [-1/e, 0). Halley refinement from the guess above
// converges to ~1e-15 relative in at most a handful of steps.
inline double LambertWm1(double x) {
  constexpr double kMinusInvE = -1.0 / std::numbers::e;
  if (!(x >= kMinusInvE && x < 0.0)) {
    // -1/e itself is not representable exactly; accept one ulp below it.
    if (x < kMinusInvE && x >= std::nextafter(kMinusInvE, -1.0)) return -1.0;
    std::ostringstream msg;
    msg.precision(17);
    msg << "LambertWm1 argument " << x << " outside [-1/e, 0)";
    Fail(ErrorCode::kDomain, msg.str());
  }
  if (x == kMinusInvE) return -1.0;

  double w = internal::LambertWm1InitialGuess(x);
  constexpr int kMaxIterations = 32;
  for (int i = 0; i < kMaxIterations; ++i) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    if (denom == 0.0) break;
    double next = w - f / denom;
    // The branch lives on w <= -1; keep iterates there.
    if (next > -1.0) next = 0.5 * (w - 1.0);
    const double step = next - w;
    w = next;
    if (std::abs(step) <= 1e-15 * std::abs(w)) break;
  }
  return w;
}

}  // namespace privar
