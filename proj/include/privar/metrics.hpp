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

// Quality-of-service and latency measurement, plus the evaluation sweep that
// crosses mechanisms, budgets and attack window lengths.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "privar/attack.hpp"
#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/ingest.hpp"
#include "privar/mechanisms.hpp"
#include "privar/rng.hpp"
#include "privar/session.hpp"

namespace privar {

struct MneResult {
  double mne = 0.0;
  std::size_t n_traces = 0;
  std::vector<double> per_trace;
};

// Mean over traces of each trace's mean displacement. Traces are weighted
// equally regardless of length.
inline MneResult Mne(std::span<const TracePair> traces) {
  if (traces.empty()) Fail(ErrorCode::kEmptyInput, "MNE needs at least one trace");
  MneResult r;
  r.per_trace.reserve(traces.size());
  for (const auto& tp : traces) {
    if (tp.truth.size() != tp.released.size()) {
      Fail(ErrorCode::kInvalidArgument, "true and released traces are misaligned");
    }
    if (tp.truth.empty()) Fail(ErrorCode::kEmptyInput, "MNE trace is empty");
    double sum = 0.0;
    for (std::size_t t = 0; t < tp.truth.size(); ++t) {
      sum += Distance(tp.truth[t], tp.released[t]);
    }
    r.per_trace.push_back(sum / static_cast<double>(tp.truth.size()));
  }
  double total = 0.0;
  for (double v : r.per_trace) total += v;
  r.n_traces = traces.size();
  r.mne = total / static_cast<double>(traces.size());
  return r;
}

// ---------------------------------------------------------------------------
// Latency.

struct LatencyReport {
  std::string mechanism;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  std::size_t n = 0;
};

inline constexpr std::size_t kMinBenchIterations = 1000;

namespace internal {

// Nearest-rank percentile of sorted data.
inline double Percentile(const std::vector<double>& sorted, double q) {
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace internal

// Times `n` single-fix perturbations after `warmup` untimed ones. Inputs are a
// seeded 8 m random walk so TR-PSM sees both reuses and releases; only the
// mechanism call sits inside the timed region.
inline LatencyReport BenchPerturb(const MechanismConfig& mech, std::size_t n,
                                  std::size_t warmup, std::uint64_t seed = 1) {
  if (n < kMinBenchIterations) {
    Fail(ErrorCode::kInvalidArgument,
         "benchmark needs at least " + std::to_string(kMinBenchIterations) +
             " iterations");
  }
  const std::size_t total = n + warmup;
  RngStream input_rng(seed);
  std::vector<PlanarPoint> inputs;
  inputs.reserve(total);
  PlanarPoint p;
  for (std::size_t i = 0; i < total; ++i) {
    inputs.push_back(p);
    const double a = input_rng.Angle();
    p = {p.x + 8.0 * std::cos(a), p.y + 8.0 * std::sin(a)};
  }
  RngStream rng(MixSeed(seed));
  const StaircaseParams stairs = mech.Staircase();
  std::vector<double> times;
  times.reserve(n);
  volatile double sink = 0.0;
  using Clock = std::chrono::steady_clock;

  std::optional<TrPsmSession> session;
  if (mech.kind == MechanismKind::kTrPsm) {
    TrPsmConfig cfg = mech.SessionConfig(total);
    auto started = TrPsmSession::Start(inputs[0], cfg, rng);
    session.emplace(std::move(started.first));
  }
  for (std::size_t i = 0; i < total; ++i) {
    const PlanarPoint& x = inputs[i];
    PlanarPoint z;
    const auto t0 = Clock::now();
    switch (mech.kind) {
      case MechanismKind::kPlm:
        z = PlmSample(x, mech.epsilon, rng);
        break;
      case MechanismKind::kPsm:
        z = PsmSample(x, stairs, rng);
        break;
      case MechanismKind::kTrPsm: {
        const StepResult r = session->Step(x, rng);
        z = std::holds_alternative<ReleaseDecision>(r)
                ? std::get<ReleaseDecision>(r).output
                : std::get<BudgetExhausted>(r).z_ref;
        break;
      }
    }
    const auto t1 = Clock::now();
    sink = sink + z.x;
    if (i >= warmup) {
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  (void)sink;

  LatencyReport rep;
  rep.mechanism = std::string(MechanismName(mech.kind));
  rep.n = times.size();
  double sum = 0.0;
  for (double t : times) sum += t;
  rep.mean_ms = sum / static_cast<double>(times.size());
  std::sort(times.begin(), times.end());
  rep.p50_ms = internal::Percentile(times, 0.50);
  rep.p95_ms = internal::Percentile(times, 0.95);
  rep.p99_ms = internal::Percentile(times, 0.99);
  return rep;
}

inline void WriteLatencyCsv(std::ostream& out,
                            std::span<const LatencyReport> reports) {
  out << "mechanism,mean_ms,p50_ms,p95_ms,p99_ms,n\n";
  out << std::setprecision(6);
  for (const auto& r : reports) {
    out << r.mechanism << ',' << r.mean_ms << ',' << r.p50_ms << ','
        << r.p95_ms << ',' << r.p99_ms << ',' << r.n << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sweep.

struct SweepRow {
  std::string mechanism;
  double epsilon = 0.0;
  double delta = 0.0;          // TR-PSM threshold; 0 for the others
  std::size_t window_len = 0;  // 0 when no attack was run
  double mne = 0.0;
  double bayes_risk = -1.0;    // -1 when no attack was run
  std::size_t n_eval = 0;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  Grid grid;
  std::uint64_t seed = 1;
  double eval_split = kDefaultEvalSplit;
  unsigned jobs = 1;
};

// Seed of one sweep cell. It depends on the mechanism kind only, so cells
// that differ in epsilon or delta see the same uniforms (common random
// numbers) and a result does not change when other axes are added.
inline std::uint64_t SweepCellSeed(std::uint64_t seed, const MechanismConfig& mech) {
  return MixSeed(MixSeed(seed) ^ HashString(MechanismName(mech.kind)));
}

// Releases every trace under one mechanism; TR-PSM streams are truncated at
// exhaustion and the truth is trimmed to match.
inline std::vector<TracePair> ReleaseTraces(
    std::span<const std::vector<PlanarPoint>> truths, const MechanismConfig& mech,
    RngStream& rng) {
  std::vector<TracePair> out;
  out.reserve(truths.size());
  for (const auto& truth : truths) {
    RngStream trace_rng = rng.Split();
    StreamRelease rel = PerturbStream(truth, mech, trace_rng);
    TracePair tp;
    tp.truth.assign(truth.begin(), truth.begin() + rel.released.size());
    tp.released = std::move(rel.released);
    if (!tp.truth.empty()) out.push_back(std::move(tp));
  }
  return out;
}

// One cell: release, MNE, then one risk estimate per window length.
inline std::vector<SweepRow> EvaluateCell(
    std::span<const std::vector<PlanarPoint>> truths, const MechanismConfig& mech,
    std::span<const std::size_t> window_lens, const SweepOptions& opts) {
  const std::uint64_t cell_seed = SweepCellSeed(opts.seed, mech);
  RngStream rng(cell_seed);
  const std::vector<TracePair> pairs = ReleaseTraces(truths, mech, rng);
  const MneResult q = Mne(pairs);
  std::vector<SweepRow> rows;
  SweepRow base;
  base.mechanism = std::string(MechanismName(mech.kind));
  base.epsilon = mech.epsilon.value();
  base.delta = mech.kind == MechanismKind::kTrPsm ? mech.delta : 0.0;
  base.mne = q.mne;
  base.seed = opts.seed;
  if (window_lens.empty()) {
    rows.push_back(base);
    return rows;
  }
  for (std::size_t len : window_lens) {
    const AttackDataset ds = BuildAttackDataset(pairs, opts.grid, len);
    RngStream risk_rng(MixSeed(cell_seed ^ len));
    const RiskEstimate risk = EstimateBayesRisk(ds.samples, opts.eval_split, risk_rng);
    SweepRow row = base;
    row.window_len = len;
    row.bayes_risk = risk.bayes_risk;
    row.n_eval = risk.n_eval;
    rows.push_back(row);
  }
  return rows;
}

// Cross product mechanisms x epsilons (x window lengths). `mechs` supply the
// kind and TR-PSM parameters; their epsilon is replaced by each sweep value.
inline std::vector<SweepRow> Sweep(std::span<const MechanismConfig> mechs,
                                   std::span<const double> epsilons,
                                   std::span<const std::vector<PlanarPoint>> truths,
                                   std::span<const std::size_t> window_lens,
                                   const SweepOptions& opts) {
  if (mechs.empty() || epsilons.empty() || truths.empty()) {
    Fail(ErrorCode::kEmptyInput, "sweep axes must be nonempty");
  }
  std::vector<MechanismConfig> cells;
  for (const auto& m : mechs) {
    for (double e : epsilons) {
      MechanismConfig c = m;
      c.epsilon = Epsilon(e);
      cells.push_back(c);
    }
  }
  std::vector<std::vector<SweepRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = EvaluateCell(truths, cells[i], window_lens, opts);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  std::vector<SweepRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  return rows;
}

inline void WriteSweepCsv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "mechanism,epsilon,delta,window_len,mne,bayes_risk,n_eval,seed\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.mechanism << ',' << r.epsilon << ',' << r.delta << ','
        << r.window_len << ',' << r.mne << ',';
    if (r.bayes_risk >= 0.0) out << r.bayes_risk;
    out << ',' << r.n_eval << ',' << r.seed << '\n';
  }
}

// Attack-only table.
inline void WriteAttackCsv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "mechanism,epsilon,window_len,bayes_risk,n_eval,seed\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    if (r.bayes_risk < 0.0) continue;
    out << r.mechanism << ',' << r.epsilon << ',' << r.window_len << ','
        << r.bayes_risk << ',' << r.n_eval << ',' << r.seed << '\n';
  }
}

}  // namespace privar
