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

#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace privar {

struct RngSeed {
  std::uint64_t value = 0;
};

// SplitMix64 finalizer; used to derive independent child seeds.
inline constexpr std::uint64_t MixSeed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, stable across platforms (unlike std::hash).
inline constexpr std::uint64_t HashString(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seedable 64-bit stream. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the float conversions below are done by hand so
// that the same seed yields bit-identical samples on every platform.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(RngSeed seed = {}) : engine_(seed.value) {}
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double Uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform01(); }

  // Uniform angle on [0, 2*pi).
  double Angle() {
    const double a = 2.0 * std::numbers::pi * Uniform01();
    return a < 2.0 * std::numbers::pi ? a : 0.0;
  }

  // Uniform integer on [0, n).
  std::uint64_t Below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Full engine state as text, for session snapshots.
  std::string State() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
  }

  // Returns false (leaving the stream untouched) if `state` does not parse.
  bool SetState(const std::string& state) {
    std::istringstream in(state);
    std::mt19937_64 restored;
    in >> restored;
    if (in.fail()) return false;
    engine_ = restored;
    return true;
  }

  // Independent child stream; advances this stream by one draw.
  RngStream Split() { return RngStream(MixSeed(engine_())); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace privar
