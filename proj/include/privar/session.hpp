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

// Thresholded reporting over a location stream (TR-PSM).
//
// A session releases a fresh staircase perturbation only when the true
// location has moved at least a privatized threshold away from the last
// release, and otherwise re-emits the last release. Budget accounting:
//
//   setup:           2 eps  (threshold noise + first release)
//   each crossing:   eps
//   total after k:   (k + 2) eps, never above epsilon_total
//
// Random draws, in order: threshold noise (one uniform) and the first release
// (two uniforms) at start; two uniforms per later release; none on reuse.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/mechanisms.hpp"
#include "privar/rng.hpp"

namespace privar {

inline constexpr double kDefaultThresholdMeters = 5.0;

// Budgets are sums of identical doubles; comparisons allow this much relative
// slack so that e.g. epsilon_total = 12 * 0.1 admits exactly 10 releases.
inline constexpr double kBudgetSlack = 1e-9;

struct TrPsmConfig {
  Epsilon epsilon{0.1};
  double epsilon_total = 0.2;
  double delta = kDefaultThresholdMeters;  // meters
  double delta_width = 1.0;                // staircase interval width
  std::optional<std::uint64_t> n_intervals;

  StaircaseParams Staircase() const {
    return StaircaseParams(epsilon, delta_width, n_intervals);
  }

  void Validate() const {
    if (!std::isfinite(epsilon_total) || !(epsilon_total > 0.0)) {
      Fail(ErrorCode::kInvalidArgument, "epsilon_total must be positive");
    }
    if (!std::isfinite(delta) || delta < 0.0) {
      Fail(ErrorCode::kInvalidArgument, "threshold delta must be >= 0");
    }
    Staircase().Validate();
    if (epsilon_total < 2.0 * epsilon.value() * (1.0 - kBudgetSlack)) {
      std::ostringstream msg;
      msg << "epsilon_total " << epsilon_total << " < 2 * epsilon ("
          << 2.0 * epsilon.value() << ")";
      Fail(ErrorCode::kBudgetTooSmall, msg.str());
    }
  }
};

enum class ReleaseKind { kInitial, kReleased, kReused };

inline std::string_view ReleaseKindName(ReleaseKind kind) {
  switch (kind) {
    case ReleaseKind::kInitial: return "initial";
    case ReleaseKind::kReleased: return "released";
    case ReleaseKind::kReused: return "reused";
  }
  return "unknown";
}

inline ReleaseKind ParseReleaseKind(std::string_view name) {
  if (name == "initial") return ReleaseKind::kInitial;
  if (name == "released") return ReleaseKind::kReleased;
  if (name == "reused") return ReleaseKind::kReused;
  Fail(ErrorCode::kInvalidArgument, "unknown decision '" + std::string(name) + "'");
}

struct ReleaseDecision {
  PlanarPoint output;
  ReleaseKind kind = ReleaseKind::kReused;
  double budget_spent_this_step = 0.0;
};

// Returned instead of a decision when a crossing cannot be paid for. Nothing
// is emitted and the step is not consumed; the caller may TopUp and retry.
struct BudgetExhausted {
  double spend = 0.0;
  double epsilon_total = 0.0;
  double epsilon_left = 0.0;
  PlanarPoint z_ref;
  std::uint64_t step_index = 0;
};

using StepResult = std::variant<ReleaseDecision, BudgetExhausted>;

class TrPsmSession {
 public:
  // Draws the threshold noise, perturbs the first fix and charges 2 eps.
  static std::pair<TrPsmSession, ReleaseDecision> Start(const PlanarPoint& x1,
                                                        const TrPsmConfig& cfg,
                                                        RngStream& rng) {
    cfg.Validate();
    TrPsmSession s(cfg);
    const StaircaseParams stairs = cfg.Staircase();
    s.noisy_threshold_ = cfg.delta + PsmRadius(stairs, rng);
    s.z_ref_ = PsmSample(x1, stairs, rng);
    s.epsilon_left_ =
        std::max(0.0, cfg.epsilon_total - 2.0 * cfg.epsilon.value());
    s.step_index_ = 1;
    ReleaseDecision d{s.z_ref_, ReleaseKind::kInitial,
                      2.0 * cfg.epsilon.value()};
    return {std::move(s), d};
  }

  StepResult Step(const PlanarPoint& x, RngStream& rng) {
    const double eps = config_.epsilon.value();
    if (Distance(x, z_ref_) < noisy_threshold_) {
      ++step_index_;
      return ReleaseDecision{z_ref_, ReleaseKind::kReused, 0.0};
    }
    if (epsilon_left_ < eps * (1.0 - kBudgetSlack)) {
      return BudgetExhausted{Spend(), config_.epsilon_total, epsilon_left_,
                             z_ref_, step_index_};
    }
    z_ref_ = PsmSample(x, config_.Staircase(), rng);
    epsilon_left_ = std::max(0.0, epsilon_left_ - eps);
    ++releases_;
    ++step_index_;
    return ReleaseDecision{z_ref_, ReleaseKind::kReleased, eps};
  }

  // Adds to both the session total and the remaining budget; the threshold
  // is not resampled.
  void TopUp(double additional) {
    if (!std::isfinite(additional) || additional < 0.0) {
      Fail(ErrorCode::kInvalidArgument, "top-up amount must be >= 0");
    }
    config_.epsilon_total += additional;
    epsilon_left_ += additional;
  }

  // (k + 2) eps for k crossings after the first fix.
  double Spend() const {
    return (static_cast<double>(releases_) + 2.0) * config_.epsilon.value();
  }

  const TrPsmConfig& config() const { return config_; }
  double noisy_threshold() const { return noisy_threshold_; }
  const PlanarPoint& z_ref() const { return z_ref_; }
  double epsilon_left() const { return epsilon_left_; }
  double epsilon_total() const { return config_.epsilon_total; }
  std::uint64_t releases() const { return releases_; }
  std::uint64_t step_index() const { return step_index_; }

  // Flat key-value snapshot.
  nlohmann::json Snapshot() const {
    nlohmann::json j;
    j["noisy_threshold"] = noisy_threshold_;
    j["z_ref.x"] = z_ref_.x;
    j["z_ref.y"] = z_ref_.y;
    j["epsilon_left"] = epsilon_left_;
    j["releases"] = releases_;
    j["step_index"] = step_index_;
    j["epsilon"] = config_.epsilon.value();
    j["epsilon_total"] = config_.epsilon_total;
    j["delta"] = config_.delta;
    j["delta_width"] = config_.delta_width;
    if (config_.n_intervals) {
      j["n_intervals"] = *config_.n_intervals;
    } else {
      j["n_intervals"] = nullptr;
    }
    return j;
  }

  static TrPsmSession FromSnapshot(const nlohmann::json& j) {
    try {
      TrPsmConfig cfg;
      cfg.epsilon = Epsilon(j.at("epsilon").get<double>());
      cfg.epsilon_total = j.at("epsilon_total").get<double>();
      cfg.delta = j.at("delta").get<double>();
      cfg.delta_width = j.at("delta_width").get<double>();
      if (j.contains("n_intervals") && !j.at("n_intervals").is_null()) {
        cfg.n_intervals = j.at("n_intervals").get<std::uint64_t>();
      }
      cfg.Staircase().Validate();
      TrPsmSession s(cfg);
      s.noisy_threshold_ = j.at("noisy_threshold").get<double>();
      s.z_ref_ = {j.at("z_ref.x").get<double>(), j.at("z_ref.y").get<double>()};
      s.epsilon_left_ = j.at("epsilon_left").get<double>();
      s.releases_ = j.at("releases").get<std::uint64_t>();
      s.step_index_ = j.at("step_index").get<std::uint64_t>();
      if (s.epsilon_left_ < 0.0 || s.noisy_threshold_ < cfg.delta ||
          !IsFinite(s.z_ref_)) {
        Fail(ErrorCode::kInvalidArgument, "inconsistent session snapshot");
      }
      return s;
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kInvalidArgument,
           std::string("malformed session snapshot: ") + e.what());
    }
  }

 private:
  explicit TrPsmSession(TrPsmConfig cfg) : config_(std::move(cfg)) {}

  TrPsmConfig config_;
  double noisy_threshold_ = 0.0;
  PlanarPoint z_ref_;
  double epsilon_left_ = 0.0;
  std::uint64_t releases_ = 0;
  std::uint64_t step_index_ = 0;
};

// One perturbation strategy applied to a whole stream: PLM and PSM perturb
// every fix independently, TR-PSM runs a session.
struct MechanismConfig {
  MechanismKind kind = MechanismKind::kPsm;
  Epsilon epsilon{0.1};
  // TR-PSM only.
  double epsilon_total = 0.0;  // 0 means "enough for the whole stream"
  double delta = kDefaultThresholdMeters;
  double delta_width = 1.0;

  StaircaseParams Staircase() const {
    return StaircaseParams(epsilon, delta_width);
  }

  TrPsmConfig SessionConfig(std::size_t stream_length) const {
    TrPsmConfig cfg;
    cfg.epsilon = epsilon;
    cfg.epsilon_total =
        epsilon_total > 0.0
            ? epsilon_total
            : (static_cast<double>(stream_length) + 2.0) * epsilon.value();
    cfg.delta = delta;
    cfg.delta_width = delta_width;
    return cfg;
  }
};

// Result of perturbing a stream. With TR-PSM the stream is cut short at the
// first BudgetExhausted; `released` then has fewer entries than the input.
struct StreamRelease {
  std::vector<PlanarPoint> released;
  std::vector<ReleaseKind> kinds;
  bool exhausted = false;
  double spend = 0.0;
};

inline StreamRelease PerturbStream(std::span<const PlanarPoint> xs,
                                   const MechanismConfig& mech,
                                   RngStream& rng) {
  StreamRelease out;
  out.released.reserve(xs.size());
  out.kinds.reserve(xs.size());
  if (xs.empty()) return out;
  switch (mech.kind) {
    case MechanismKind::kPlm:
      for (const auto& x : xs) {
        out.released.push_back(PlmSample(x, mech.epsilon, rng));
        out.kinds.push_back(ReleaseKind::kReleased);
      }
      out.spend = static_cast<double>(xs.size()) * mech.epsilon.value();
      break;
    case MechanismKind::kPsm: {
      const StaircaseParams stairs = mech.Staircase();
      for (const auto& x : xs) {
        out.released.push_back(PsmSample(x, stairs, rng));
        out.kinds.push_back(ReleaseKind::kReleased);
      }
      out.spend = static_cast<double>(xs.size()) * mech.epsilon.value();
      break;
    }
    case MechanismKind::kTrPsm: {
      auto [session, first] =
          TrPsmSession::Start(xs[0], mech.SessionConfig(xs.size()), rng);
      out.released.push_back(first.output);
      out.kinds.push_back(first.kind);
      for (std::size_t t = 1; t < xs.size(); ++t) {
        StepResult r = session.Step(xs[t], rng);
        if (std::holds_alternative<BudgetExhausted>(r)) {
          out.exhausted = true;
          break;
        }
        const auto& d = std::get<ReleaseDecision>(r);
        out.released.push_back(d.output);
        out.kinds.push_back(d.kind);
      }
      out.spend = session.Spend();
      break;
    }
  }
  return out;
}

}  // namespace privar
