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

// Trace-based inference attack and the empirical Bayes-risk estimate used to
// score privacy.
//
// The adversary sees windows of L consecutive released points and guesses the
// grid cell of the window's last true fix with a k-nearest-neighbour vote
// (k = round(ln T), T the training size). The held-out misclassification rate
// of that vote is the risk estimate: 0 means the attacker always wins.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/ingest.hpp"
#include "privar/rng.hpp"

namespace privar {

struct AttackSample {
  std::vector<double> features;  // x0, y0, x1, y1, ... oldest first
  CellId label;
};

// A true trace (region frame) with its released counterpart, index-aligned.
struct TracePair {
  std::vector<PlanarPoint> truth;
  std::vector<PlanarPoint> released;
};

struct AttackDataset {
  std::vector<AttackSample> samples;
  std::size_t window_len = 1;
  std::size_t skipped_traces = 0;  // shorter than the window
};

inline AttackDataset BuildAttackDataset(std::span<const TracePair> traces,
                                        const Grid& grid,
                                        std::size_t window_len) {
  if (window_len < 1) Fail(ErrorCode::kInvalidArgument, "window length must be >= 1");
  AttackDataset ds;
  ds.window_len = window_len;
  for (const auto& tp : traces) {
    if (tp.truth.size() != tp.released.size()) {
      Fail(ErrorCode::kInvalidArgument, "true and released traces are misaligned");
    }
    if (tp.truth.size() < window_len) {
      ++ds.skipped_traces;
      continue;
    }
    for (std::size_t end = window_len; end <= tp.truth.size(); ++end) {
      AttackSample s;
      s.features.reserve(2 * window_len);
      for (std::size_t i = end - window_len; i < end; ++i) {
        s.features.push_back(tp.released[i].x);
        s.features.push_back(tp.released[i].y);
      }
      s.label = ToCell(tp.truth[end - 1], grid);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

inline std::size_t DefaultNeighbourCount(std::size_t training_size) {
  if (training_size == 0) return 1;
  const double k = std::round(std::log(static_cast<double>(training_size)));
  return static_cast<std::size_t>(std::max(1.0, k));
}

// Exact kNN with two prunings that do not change the answer:
// candidates are visited in order of their last-point x coordinate outward
// from the query (stopping once that coordinate alone is too far), and
// partial distances abort as soon as they exceed the current k-th best.
class KnnModel {
 public:
  KnnModel(std::span<const AttackSample> training, std::size_t k = 0) {
    if (training.empty()) Fail(ErrorCode::kEmptyInput, "kNN needs training data");
    dim_ = training.front().features.size();
    if (dim_ == 0 || dim_ % 2 != 0) {
      Fail(ErrorCode::kInvalidArgument, "feature length must be a positive even number");
    }
    k_ = k == 0 ? DefaultNeighbourCount(training.size()) : k;
    k_ = std::min(k_, training.size());
    const std::size_t key = dim_ - 2;  // x of the most recent point
    std::vector<std::size_t> order(training.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return training[a].features[key] < training[b].features[key];
    });
    features_.reserve(training.size() * dim_);
    keys_.reserve(training.size());
    original_index_.reserve(training.size());
    label_by_original_.reserve(training.size());
    for (const auto& s : training) label_by_original_.push_back(s.label.index);
    for (std::size_t idx : order) {
      const auto& s = training[idx];
      if (s.features.size() != dim_) {
        Fail(ErrorCode::kInvalidArgument, "training features have mixed lengths");
      }
      features_.insert(features_.end(), s.features.begin(), s.features.end());
      keys_.push_back(s.features[key]);
      original_index_.push_back(idx);
    }
  }

  std::size_t k() const { return k_; }
  std::size_t size() const { return keys_.size(); }
  std::size_t dim() const { return dim_; }

  CellId Predict(std::span<const double> query) const {
    if (query.size() != dim_) {
      Fail(ErrorCode::kInvalidArgument, "query feature length mismatch");
    }
    // k smallest distances so far (max-heap) and every candidate that was
    // within the running k-th distance when seen.
    std::vector<double> best;
    best.reserve(k_ + 1);
    std::vector<std::pair<double, std::size_t>> cands;
    auto worst = [&]() {
      return best.size() < k_ ? std::numeric_limits<double>::infinity()
                              : best.front();
    };
    auto consider = [&](std::size_t pos) {
      const double bound = worst();
      const double* f = &features_[pos * dim_];
      double d = 0.0;
      // Most recent point first; it carries the most information.
      for (std::size_t c = dim_; c-- > 0;) {
        const double diff = f[c] - query[c];
        d += diff * diff;
        if (d > bound) return;
      }
      cands.emplace_back(d, original_index_[pos]);
      if (best.size() < k_) {
        best.push_back(d);
        std::push_heap(best.begin(), best.end());
      } else if (d < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = d;
        std::push_heap(best.begin(), best.end());
      }
      if (cands.size() > 4 * k_ + 64) Prune(cands, worst());
    };
    const double qkey = query[dim_ - 2];
    const auto start = static_cast<std::size_t>(
        std::lower_bound(keys_.begin(), keys_.end(), qkey) - keys_.begin());
    std::size_t up = start;
    std::size_t down = start;  // next candidate below is down - 1
    bool up_open = up < keys_.size();
    bool down_open = down > 0;
    while (up_open || down_open) {
      if (up_open) {
        const double gap = keys_[up] - qkey;
        if (gap * gap > worst()) {
          up_open = false;
        } else {
          consider(up++);
          up_open = up < keys_.size();
        }
      }
      if (down_open) {
        const double gap = qkey - keys_[down - 1];
        if (gap * gap > worst()) {
          down_open = false;
        } else {
          consider(--down);
          down_open = down > 0;
        }
      }
    }
    Prune(cands, worst());
    return Vote(cands);
  }

 private:
  static void Prune(std::vector<std::pair<double, std::size_t>>& cands, double bound) {
    std::erase_if(cands, [bound](const auto& c) { return c.first > bound; });
  }

  // Neighbours tied with the k-th distance all vote. The label with the most
  // votes wins; equal counts go to the label owning the nearest neighbour.
  CellId Vote(std::vector<std::pair<double, std::size_t>>& cands) const {
    std::sort(cands.begin(), cands.end());
    // label -> (votes, rank of its nearest member)
    std::unordered_map<std::int64_t, std::pair<std::size_t, std::size_t>> tally;
    for (std::size_t rank = 0; rank < cands.size(); ++rank) {
      const std::int64_t label = label_by_original_[cands[rank].second];
      auto [it, inserted] = tally.try_emplace(label, 0, rank);
      ++it->second.first;
    }
    std::int64_t winner = 0;
    std::size_t best_votes = 0;
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (const auto& [label, vr] : tally) {
      if (vr.first > best_votes || (vr.first == best_votes && vr.second < best_rank)) {
        winner = label;
        best_votes = vr.first;
        best_rank = vr.second;
      }
    }
    return CellId{winner};
  }

  std::size_t dim_ = 0;
  std::size_t k_ = 1;
  std::vector<double> features_;  // sorted by key, row-major
  std::vector<double> keys_;
  std::vector<std::size_t> original_index_;
  std::vector<std::int64_t> label_by_original_;
};

struct RiskEstimate {
  double bayes_risk = 0.0;
  std::size_t n_eval = 0;
  std::size_t n_train = 0;
  std::size_t k = 1;
};

inline constexpr double kDefaultEvalSplit = 0.25;

// Random train/eval split (fraction `split` held out), kNN fit on the train
// part, misclassification rate on the held-out part.
inline RiskEstimate EstimateBayesRisk(std::span<const AttackSample> samples,
                                      double split, RngStream& rng,
                                      unsigned jobs = 1) {
  if (samples.size() < 10) {
    Fail(ErrorCode::kEmptyInput, "Bayes-risk estimate needs at least 10 samples");
  }
  if (!(split > 0.0 && split < 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "eval split must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.Below(i + 1)]);
  }
  auto n_eval = static_cast<std::size_t>(
      std::round(split * static_cast<double>(samples.size())));
  n_eval = std::clamp<std::size_t>(n_eval, 1, samples.size() - 1);

  std::vector<AttackSample> train;
  train.reserve(samples.size() - n_eval);
  for (std::size_t i = n_eval; i < idx.size(); ++i) train.push_back(samples[idx[i]]);
  const KnnModel model(train);

  jobs = std::max(1u, jobs);
  std::vector<std::size_t> errors(jobs, 0);
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < n_eval; i += jobs) {
      const auto& s = samples[idx[i]];
      if (model.Predict(s.features) != s.label) ++errors[w];
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(work, w);
  }
  const std::size_t wrong = std::accumulate(errors.begin(), errors.end(), std::size_t{0});
  RiskEstimate r;
  r.bayes_risk = static_cast<double>(wrong) / static_cast<double>(n_eval);
  r.n_eval = n_eval;
  r.n_train = train.size();
  r.k = model.k();
  return r;
}

}  // namespace privar
