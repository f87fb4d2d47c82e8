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

// Trajectory ingestion: CSV traces, region clipping, subsampling, synthetic
// walks and the evaluation grid.
//
// CSV layout (header required, extra columns after lon are optional):
//
//   user_id,timestamp,lat,lon[,released_lat,released_lon]
//   u1,2008-10-23T02:53:04Z,39.984702,116.318417
//
// Timestamps are ISO-8601 UTC with optional fractional seconds.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/rng.hpp"

namespace privar {

struct Fix {
  double t = 0.0;  // seconds since the Unix epoch
  GeoPoint point;
  std::string user;
  std::optional<GeoPoint> released;
};

struct Trace {
  std::vector<Fix> fixes;
  Projection projection;

  const std::string& user() const {
    static const std::string kEmpty;
    return fixes.empty() ? kEmpty : fixes.front().user;
  }
  std::size_t size() const { return fixes.size(); }

  std::vector<PlanarPoint> Planar() const {
    std::vector<PlanarPoint> out;
    out.reserve(fixes.size());
    for (const auto& f : fixes) out.push_back(projection.Project(f.point));
    return out;
  }

  // Released points in the planar frame; empty if any fix lacks one.
  std::vector<PlanarPoint> ReleasedPlanar() const {
    std::vector<PlanarPoint> out;
    out.reserve(fixes.size());
    for (const auto& f : fixes) {
      if (!f.released) return {};
      out.push_back(projection.Project(*f.released));
    }
    return out;
  }
};

// Square window of `side` meters centered on `center`, in the local frame of
// a projection whose origin is `center`.
struct Region {
  GeoPoint center;
  double side = 6000.0;

  Projection Frame() const { return Projection(center); }

  void Validate() const {
    if (!(side > 0.0) || !std::isfinite(side)) {
      Fail(ErrorCode::kInvalidArgument, "region side must be > 0");
    }
  }

  bool Contains(const PlanarPoint& p) const {
    const double h = side / 2.0;
    return p.x >= -h && p.x <= h && p.y >= -h && p.y <= h;
  }
};

struct CellId {
  std::int64_t index = 0;
  friend auto operator<=>(const CellId&, const CellId&) = default;
};

struct Grid {
  Region region;
  int cells_per_side = 200;

  double CellWidth() const { return region.side / cells_per_side; }
  std::int64_t CellCount() const {
    return static_cast<std::int64_t>(cells_per_side) * cells_per_side;
  }
};

// Row-major cell of a point given in the region's frame. Cells are closed on
// the min edge; the outer max edge is clamped into the last row/column.
inline CellId ToCell(const PlanarPoint& p, const Grid& g) {
  if (!IsFinite(p) || !g.region.Contains(p)) {
    std::ostringstream msg;
    msg << "point (" << p.x << ", " << p.y << ") outside the "
        << g.region.side << " m region";
    Fail(ErrorCode::kDomain, msg.str());
  }
  const double h = g.region.side / 2.0;
  const double w = g.CellWidth();
  const int n = g.cells_per_side;
  const int col = std::min(n - 1, static_cast<int>(std::floor((p.x + h) / w)));
  const int row = std::min(n - 1, static_cast<int>(std::floor((p.y + h) / w)));
  return CellId{static_cast<std::int64_t>(row) * n + col};
}

inline PlanarPoint CellCenter(CellId c, const Grid& g) {
  if (c.index < 0 || c.index >= g.CellCount()) {
    Fail(ErrorCode::kDomain, "cell id " + std::to_string(c.index) + " out of range");
  }
  const double h = g.region.side / 2.0;
  const double w = g.CellWidth();
  const auto row = c.index / g.cells_per_side;
  const auto col = c.index % g.cells_per_side;
  return {-h + (static_cast<double>(col) + 0.5) * w,
          -h + (static_cast<double>(row) + 0.5) * w};
}

// ---------------------------------------------------------------------------
// Timestamps.

namespace internal {

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant).
inline std::int64_t DaysFromCivil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void CivilFromDays(std::int64_t z, std::int64_t& y, unsigned& m,
                          unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

}  // namespace internal

inline std::optional<double> ParseIso8601(std::string_view text) {
  std::string s(text);
  int year, month, day, hour, minute;
  double second;
  char sep;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &year, &month, &day,
                  &sep, &hour, &minute, &second, &consumed) != 7) {
    return std::nullopt;
  }
  if (sep != 'T' && sep != ' ') return std::nullopt;
  const std::string_view rest = std::string_view(s).substr(consumed);
  if (!(rest.empty() || rest == "Z" || rest == "+00:00")) return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour < 0 ||
      hour > 23 || minute < 0 || minute > 59 || second < 0.0 || second >= 61.0) {
    return std::nullopt;
  }
  const auto days = internal::DaysFromCivil(year, static_cast<unsigned>(month),
                                            static_cast<unsigned>(day));
  return static_cast<double>(days) * 86400.0 + hour * 3600.0 + minute * 60.0 +
         second;
}

inline std::string FormatIso8601(double t) {
  const double whole = std::floor(t);
  auto secs = static_cast<std::int64_t>(whole);
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  internal::CivilFromDays(days, y, m, d);
  char buf[64];
  const double frac = t - whole;
  if (frac == 0.0) {
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600),
                  static_cast<long long>(rem % 3600 / 60),
                  static_cast<long long>(rem % 60));
  } else {
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%06.3fZ",
                  static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600),
                  static_cast<long long>(rem % 3600 / 60),
                  static_cast<double>(rem % 60) + frac);
  }
  return buf;
}

// ---------------------------------------------------------------------------
// CSV loading.

struct LoadReport {
  std::vector<Trace> traces;
  std::size_t rows = 0;
  std::size_t malformed_rows = 0;
  std::size_t duplicate_timestamps = 0;
  Projection projection;  // centered on the centroid of all valid fixes
};

namespace internal {

inline std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) {
      field.pop_back();
    }
    std::size_t start = field.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? "" : field.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<double> ParseDouble(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace internal

inline LoadReport ParseTraces(std::istream& in) {
  LoadReport report;
  std::string line;
  if (!std::getline(in, line)) {
    Fail(ErrorCode::kEmptyInput, "trace CSV has no header");
  }
  const auto header = internal::SplitCsvLine(line);
  auto column = [&](std::string_view name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int c_user = column("user_id");
  const int c_time = column("timestamp");
  const int c_lat = column("lat");
  const int c_lon = column("lon");
  const int c_rlat = column("released_lat");
  const int c_rlon = column("released_lon");
  if (c_user < 0 || c_time < 0 || c_lat < 0 || c_lon < 0) {
    Fail(ErrorCode::kInvalidArgument,
         "trace CSV header must contain user_id,timestamp,lat,lon");
  }
  const bool has_released = c_rlat >= 0 && c_rlon >= 0;

  std::map<std::string, std::vector<Fix>> by_user;
  std::map<std::string, std::set<double>> seen;
  double lat_sum = 0.0, lon_sum = 0.0;
  std::size_t valid = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++report.rows;
    const auto f = internal::SplitCsvLine(line);
    const int needed = std::max({c_user, c_time, c_lat, c_lon,
                                 has_released ? std::max(c_rlat, c_rlon) : 0});
    if (static_cast<int>(f.size()) <= needed || f[c_user].empty()) {
      ++report.malformed_rows;
      continue;
    }
    const auto t = ParseIso8601(f[c_time]);
    const auto lat = internal::ParseDouble(f[c_lat]);
    const auto lon = internal::ParseDouble(f[c_lon]);
    if (!t || !lat || !lon || !IsValid(GeoPoint{*lat, *lon})) {
      ++report.malformed_rows;
      continue;
    }
    Fix fix{*t, GeoPoint{*lat, *lon}, f[c_user], std::nullopt};
    if (has_released) {
      const auto rlat = internal::ParseDouble(f[c_rlat]);
      const auto rlon = internal::ParseDouble(f[c_rlon]);
      if (rlat && rlon && IsValid(GeoPoint{*rlat, *rlon})) {
        fix.released = GeoPoint{*rlat, *rlon};
      } else if (!f[c_rlat].empty() || !f[c_rlon].empty()) {
        ++report.malformed_rows;
        continue;
      }
    }
    if (!seen[fix.user].insert(fix.t).second) {
      ++report.duplicate_timestamps;
      continue;
    }
    lat_sum += fix.point.lat;
    lon_sum += fix.point.lon;
    ++valid;
    by_user[fix.user].push_back(std::move(fix));
  }
  if (valid == 0) {
    Fail(ErrorCode::kEmptyInput, "trace CSV contains no valid rows");
  }
  report.projection = Projection(GeoPoint{lat_sum / valid, lon_sum / valid});
  for (auto& [user, fixes] : by_user) {
    std::stable_sort(fixes.begin(), fixes.end(),
                     [](const Fix& a, const Fix& b) { return a.t < b.t; });
    report.traces.push_back(Trace{std::move(fixes), report.projection});
  }
  return report;
}

inline LoadReport LoadTraces(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open trace file '" + path + "'");
  return ParseTraces(in);
}

inline void WriteTracesCsv(std::ostream& out, const std::vector<Trace>& traces) {
  bool released = !traces.empty();
  for (const auto& tr : traces) {
    for (const auto& f : tr.fixes) released = released && f.released.has_value();
  }
  out << "user_id,timestamp,lat,lon";
  if (released) out << ",released_lat,released_lon";
  out << '\n';
  out << std::fixed << std::setprecision(10);
  for (const auto& tr : traces) {
    for (const auto& f : tr.fixes) {
      out << f.user << ',' << FormatIso8601(f.t) << ',' << f.point.lat << ','
          << f.point.lon;
      if (released) out << ',' << f.released->lat << ',' << f.released->lon;
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Clipping and subsampling.

// Keeps the longest contiguous run of in-region fixes (earliest on ties), then
// thins it so consecutive kept fixes are at least `min_interval` apart. The
// result is expressed in the region's frame. nullopt when nothing survives.
inline std::optional<Trace> ClipAndSubsample(const Trace& tr,
                                             const Region& region,
                                             double min_interval) {
  region.Validate();
  const Projection frame = region.Frame();
  std::size_t best_begin = 0, best_len = 0, run_begin = 0, run_len = 0;
  for (std::size_t i = 0; i < tr.fixes.size(); ++i) {
    bool inside = false;
    try {
      inside = region.Contains(frame.Project(tr.fixes[i].point));
    } catch (const Error&) {
      inside = false;
    }
    if (inside) {
      if (run_len == 0) run_begin = i;
      ++run_len;
      if (run_len > best_len) {
        best_len = run_len;
        best_begin = run_begin;
      }
    } else {
      run_len = 0;
    }
  }
  if (best_len == 0) return std::nullopt;
  Trace out{{}, frame};
  for (std::size_t i = best_begin; i < best_begin + best_len; ++i) {
    const Fix& f = tr.fixes[i];
    if (out.fixes.empty() || f.t - out.fixes.back().t >= min_interval) {
      out.fixes.push_back(f);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic walks, standing in for field-collected traces.

enum class WalkKind { kStationary, kLine, kRandomWalk };

inline WalkKind ParseWalkKind(std::string_view name) {
  if (name == "stationary") return WalkKind::kStationary;
  if (name == "line") return WalkKind::kLine;
  if (name == "random_walk") return WalkKind::kRandomWalk;
  Fail(ErrorCode::kInvalidArgument, "unknown walk kind '" + std::string(name) +
                                        "' (stationary|line|random_walk)");
}

struct WalkOptions {
  Region region{GeoPoint{39.9, 116.4}, 6000.0};
  double start_time = 1700000000.0;
  double interval = 1.0;  // seconds between fixes
  std::string user = "synthetic";
  PlanarPoint start;      // in the region's frame
};

// Starts at `opts.start`; `line` keeps one random heading, `random_walk`
// draws a fresh uniform heading every step. Steps that would leave the region
// are reflected off its boundary.
inline Trace SynthWalk(WalkKind kind, double step, std::size_t length,
                       RngStream& rng, const WalkOptions& opts = {}) {
  if (!(step >= 0.0) || !std::isfinite(step)) {
    Fail(ErrorCode::kInvalidArgument, "walk step must be >= 0");
  }
  if (length < 1) Fail(ErrorCode::kInvalidArgument, "walk length must be >= 1");
  opts.region.Validate();
  if (!opts.region.Contains(opts.start)) {
    Fail(ErrorCode::kDomain, "walk start lies outside the region");
  }
  const Projection frame = opts.region.Frame();
  const double h = opts.region.side / 2.0;
  Trace tr{{}, frame};
  tr.fixes.reserve(length);
  PlanarPoint p = opts.start;
  double heading = kind == WalkKind::kLine ? rng.Angle() : 0.0;
  PlanarPoint dir{std::cos(heading), std::sin(heading)};
  auto reflect = [h](double& coord, double& d) {
    // A single step is far shorter than the region; one fold suffices unless
    // the step is pathological, hence the loop.
    while (coord > h || coord < -h) {
      coord = coord > h ? 2.0 * h - coord : -2.0 * h - coord;
      d = -d;
    }
  };
  for (std::size_t i = 0; i < length; ++i) {
    tr.fixes.push_back(Fix{opts.start_time + static_cast<double>(i) * opts.interval,
                           frame.Unproject(p), opts.user, std::nullopt});
    if (kind == WalkKind::kStationary) continue;
    if (kind == WalkKind::kRandomWalk) {
      heading = rng.Angle();
      dir = {std::cos(heading), std::sin(heading)};
    }
    p = {p.x + step * dir.x, p.y + step * dir.y};
    reflect(p.x, dir.x);
    reflect(p.y, dir.y);
  }
  return tr;
}

}  // namespace privar
