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


// privar: perturb traces, evaluate releases, sweep, benchmark, synthesize
// walks and serve the PrivAR endpoint.
//
// Exit codes: 0 ok, 1 usage or validation, 2 runtime, 3 stream truncated by
// an exhausted TR-PSM budget.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "privar.hpp"
#include "privar/http_server.hpp"

namespace privar {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitTruncated = 3;

struct Flags {
  std::vector<std::string> mechanisms;
  std::vector<double> epsilons;
  double epsilon_total = 0.0;
  double delta = kDefaultThresholdMeters;
  int grid_cells = 200;
  double region_side = 6000.0;
  std::vector<std::size_t> window_lens;
  std::string density = "sparse";
  std::uint64_t seed = 1;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
};

std::vector<MechanismConfig> Mechanisms(const Flags& f,
                                        std::vector<std::string> fallback) {
  const auto& names = f.mechanisms.empty() ? fallback : f.mechanisms;
  std::vector<MechanismConfig> out;
  for (const auto& n : names) {
    MechanismConfig m;
    m.kind = ParseMechanism(n);
    m.epsilon = Epsilon(f.epsilons.empty() ? 0.1 : f.epsilons.front());
    m.epsilon_total = f.epsilon_total;
    m.delta = f.delta;
    out.push_back(m);
  }
  return out;
}

MechanismConfig SingleMechanism(const Flags& f) {
  if (f.mechanisms.size() > 1 || f.epsilons.size() > 1) {
    Fail(ErrorCode::kInvalidArgument, "this command takes one --mechanism and one --epsilon");
  }
  return Mechanisms(f, {"psm"}).front();
}

std::ofstream OpenOutput(const std::string& path) {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write '" + path + "'");
  return out;
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename F>
void Emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
  } else {
    std::ofstream out = OpenOutput(path);
    write(out);
    if (!out) Fail(ErrorCode::kIo, "failed writing '" + path + "'");
  }
}

Region RegionAround(const Projection& p, const Flags& f) {
  Region r{p.origin(), f.region_side};
  r.Validate();
  return r;
}

// --------------------------------------------------------------------------

int RunPerturb(const Flags& f, const std::string& input, const std::string& output) {
  const MechanismConfig mech = SingleMechanism(f);
  LoadReport report = LoadTraces(input);
  if (report.malformed_rows > 0) {
    std::cerr << "warning: skipped " << report.malformed_rows << " malformed rows\n";
  }
  RngStream rng(f.seed);
  bool truncated = false;
  for (auto& tr : report.traces) {
    RngStream trace_rng = rng.Split();
    const auto xs = tr.Planar();
    const StreamRelease rel = PerturbStream(xs, mech, trace_rng);
    if (rel.exhausted) {
      truncated = true;
      std::cerr << "warning: budget exhausted for user '" << tr.user() << "' after "
                << rel.released.size() << " of " << xs.size() << " fixes\n";
    }
    tr.fixes.resize(rel.released.size());
    for (std::size_t i = 0; i < rel.released.size(); ++i) {
      tr.fixes[i].released = tr.projection.Unproject(rel.released[i]);
    }
  }
  std::erase_if(report.traces, [](const Trace& t) { return t.fixes.empty(); });
  Emit(output, [&](std::ostream& out) { WriteTracesCsv(out, report.traces); });
  return truncated ? kExitTruncated : kExitOk;
}

// --------------------------------------------------------------------------

int RunEval(const Flags& f, const std::string& input, const std::vector<std::string>& metrics,
            const std::string& output) {
  const LoadReport report = LoadTraces(input);
  std::vector<TracePair> pairs;
  for (const auto& tr : report.traces) {
    TracePair tp{tr.Planar(), tr.ReleasedPlanar()};
    if (tp.released.size() != tp.truth.size()) {
      Fail(ErrorCode::kInvalidArgument,
           "user '" + tr.user() + "' has fixes without released_lat/released_lon");
    }
    pairs.push_back(std::move(tp));
  }
  std::ostringstream table;
  table << "metric,window_len,value,n\n" << std::setprecision(10);
  for (const auto& m : metrics) {
    if (m == "mne") {
      const MneResult r = Mne(pairs);
      table << "mne,," << r.mne << ',' << r.n_traces << '\n';
    } else if (m == "bayes") {
      const Grid grid{RegionAround(report.projection, f), f.grid_cells};
      std::vector<TracePair> clipped;
      for (const auto& tr : report.traces) {
        const auto c = ClipAndSubsample(tr, grid.region, 0.0);
        if (c) clipped.push_back({c->Planar(), c->ReleasedPlanar()});
      }
      const std::vector<std::size_t> lens =
          f.window_lens.empty() ? std::vector<std::size_t>{1, 5, 10, 25} : f.window_lens;
      for (std::size_t len : lens) {
        const AttackDataset ds = BuildAttackDataset(clipped, grid, len);
        RngStream rng(MixSeed(f.seed ^ len));
        const RiskEstimate r = EstimateBayesRisk(ds.samples, kDefaultEvalSplit, rng, f.jobs);
        table << "bayes_risk," << len << ',' << r.bayes_risk << ',' << r.n_eval << '\n';
      }
    } else if (m == "catchable") {
      const ObjectFieldConfig cfg = ObjectFieldConfig::ForDensity(f.density);
      RngStream rng(MixSeed(f.seed));
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& tp : pairs) {
        for (std::size_t i = 0; i < tp.truth.size(); ++i) {
          const auto objs = GenerateField(tp.released[i], cfg, rng);
          if (const auto c = CatchableFraction(tp.truth[i], tp.released[i], objs, cfg)) {
            sum += *c;
            ++n;
          }
        }
      }
      table << "catchable_pct,," << (n ? sum / static_cast<double>(n) : 0.0) << ',' << n
            << '\n';
    }
  }
  Emit(output, [&](std::ostream& out) { out << table.str(); });
  return kExitOk;
}

// --------------------------------------------------------------------------

int RunSweep(const Flags& f, const std::string& input, const std::string& output) {
  const LoadReport report = LoadTraces(input);
  SweepOptions opts;
  opts.grid = Grid{RegionAround(report.projection, f), f.grid_cells};
  opts.seed = f.seed;
  opts.jobs = f.jobs;
  std::vector<std::vector<PlanarPoint>> truths;
  for (const auto& tr : report.traces) {
    const auto c = ClipAndSubsample(tr, opts.grid.region, 0.0);
    if (c) truths.push_back(c->Planar());
  }
  const std::vector<double> eps =
      f.epsilons.empty() ? std::vector<double>{0.1, 0.5, 1.0, 2.0} : f.epsilons;
  const auto mechs = Mechanisms(f, {"plm", "psm", "trpsm"});
  const auto rows = Sweep(mechs, eps, truths, f.window_lens, opts);
  Emit(output, [&](std::ostream& out) { WriteSweepCsv(out, rows); });
  return kExitOk;
}

int RunBench(const Flags& f, std::size_t n, std::size_t warmup, const std::string& output) {
  std::vector<LatencyReport> reports;
  for (const auto& m : Mechanisms(f, {"plm", "psm", "trpsm"})) {
    reports.push_back(BenchPerturb(m, n, warmup, f.seed));
  }
  Emit(output, [&](std::ostream& out) { WriteLatencyCsv(out, reports); });
  return kExitOk;
}

int RunSynth(const Flags& f, const std::string& kind, double step, std::size_t length,
             std::size_t users, GeoPoint center, const std::string& output) {
  RngStream rng(f.seed);
  WalkOptions opts;
  opts.region = Region{center, f.region_side};
  std::vector<Trace> traces;
  for (std::size_t u = 0; u < users; ++u) {
    opts.user = "user" + std::to_string(u);
    RngStream walk_rng = rng.Split();
    traces.push_back(SynthWalk(ParseWalkKind(kind), step, length, walk_rng, opts));
  }
  Emit(output, [&](std::ostream& out) { WriteTracesCsv(out, traces); });
  return kExitOk;
}

// --------------------------------------------------------------------------

int RunServe(const Flags& f, const std::string& host, int port, const std::string& snapshot,
             int ttl_seconds, double field_radius) {
  ServiceConfig cfg;
  cfg.seed = f.seed;
  cfg.field_radius = field_radius;
  cfg.default_density = f.density;
  cfg.session_ttl = std::chrono::seconds(ttl_seconds);
  PrivArService service(cfg);
  if (!snapshot.empty() && std::filesystem::exists(snapshot)) {
    service.LoadSnapshot(snapshot);
    std::cerr << "restored " << service.SessionCount() << " sessions from " << snapshot << '\n';
  }

  // Signals are taken synchronously by a watcher thread, which also expires
  // idle sessions.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  HttpServer server(service);
  const int bound = server.Bind(host, port);
  std::cerr << "listening on " << host << ':' << bound << '\n';
  std::jthread watcher([&](std::stop_token stop) {
    const timespec tick{1, 0};
    while (!stop.stop_requested()) {
      if (sigtimedwait(&set, nullptr, &tick) > 0) break;
      service.ExpireIdle();
    }
    server.Stop();
  });
  server.Run();
  watcher.request_stop();
  watcher.join();
  if (!snapshot.empty()) {
    service.SaveSnapshot(snapshot);
    std::cerr << "saved " << service.SessionCount() << " sessions to " << snapshot << '\n';
  }
  return kExitOk;
}

int ExitCodeFor(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kIo: return kExitRuntime;
    default: return kExitUsage;
  }
}

int Main(int argc, char** argv) {
  CLI::App app{"privar: location-privacy mechanisms, evaluation and AR service"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "flat key=value file overriding flag defaults");

  Flags f;
  app.add_option("--mechanism", f.mechanisms, "plm|psm|trpsm (repeatable for bench/sweep)")
      ->check(CLI::IsMember({"plm", "psm", "trpsm"}));
  app.add_option("--epsilon", f.epsilons, "privacy level per release (repeatable for sweep)")
      ->check(CLI::PositiveNumber);
  app.add_option("--epsilon-total", f.epsilon_total,
                 "TR-PSM session budget; 0 = enough for the whole stream")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--delta", f.delta, "TR-PSM movement threshold in meters")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--grid-cells", f.grid_cells, "attack grid cells per side")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--region-side", f.region_side, "attack region side in meters")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--window-len", f.window_lens, "attack window lengths (repeatable)")
      ->check(CLI::PositiveNumber);
  app.add_option("--density", f.density, "object density sparse|dense")
      ->check(CLI::IsMember({"sparse", "dense"}))
      ->capture_default_str();
  app.add_option("--seed", f.seed, "RNG seed")->capture_default_str();
  app.add_option("--jobs", f.jobs, "worker threads for sweeps and attacks")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string input, output;
  auto* perturb = app.add_subcommand("perturb", "perturb a trace CSV");
  perturb->add_option("-i,--input", input, "trace CSV")->required()->check(CLI::ExistingFile);
  perturb->add_option("-o,--output", output, "output CSV (default stdout)");

  std::vector<std::string> metrics{"mne"};
  auto* eval = app.add_subcommand("eval", "score a CSV of true and released fixes");
  eval->add_option("-i,--input", input, "paired trace CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--output", output, "output CSV (default stdout)");
  eval->add_option("--metrics", metrics, "mne, bayes, catchable")
      ->check(CLI::IsMember({"mne", "bayes", "catchable"}))
      ->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "MNE and attack risk over mechanisms x epsilons");
  sweep->add_option("-i,--input", input, "trace CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--output", output, "output CSV (default stdout)");

  std::size_t bench_n = 100000, warmup = 1000;
  auto* bench = app.add_subcommand("bench", "per-fix perturbation latency");
  bench->add_option("-n,--iterations", bench_n, "timed iterations (>= 1000)")
      ->capture_default_str();
  bench->add_option("--warmup", warmup, "untimed iterations")->capture_default_str();
  bench->add_option("-o,--output", output, "output CSV (default stdout)");

  std::string walk = "random_walk";
  double step = 8.0, lat = 39.9, lon = 116.4;
  std::size_t length = 1000, users = 1;
  auto* synth = app.add_subcommand("synth", "generate synthetic walks");
  synth->add_option("--kind", walk, "stationary|line|random_walk")
      ->check(CLI::IsMember({"stationary", "line", "random_walk"}))
      ->capture_default_str();
  synth->add_option("--step", step, "meters per fix")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--length", length, "fixes per user")->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--users", users, "number of users")->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--lat", lat, "region center latitude")->check(CLI::Range(-90.0, 90.0))
      ->capture_default_str();
  synth->add_option("--lon", lon, "region center longitude")
      ->check(CLI::Range(-180.0, 180.0))
      ->capture_default_str();
  synth->add_option("-o,--output", output, "output CSV (default stdout)");

  std::string host = "127.0.0.1", snapshot;
  int port = 8080, ttl = 600;
  double field_radius = 150.0;
  auto* serve = app.add_subcommand("serve", "run the PrivAR HTTP service");
  serve->add_option("--host", host, "listen address")->capture_default_str();
  serve->add_option("--port", port, "listen port (0 = any)")->check(CLI::Range(0, 65535))
      ->capture_default_str();
  serve->add_option("--snapshot", snapshot, "session snapshot file, loaded and saved");
  serve->add_option("--session-ttl", ttl, "idle seconds before a session is dropped")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--field-radius", field_radius, "object generation radius in meters")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*perturb) return RunPerturb(f, input, output);
    if (*eval) return RunEval(f, input, metrics, output);
    if (*sweep) return RunSweep(f, input, output);
    if (*bench) return RunBench(f, bench_n, warmup, output);
    if (*synth) return RunSynth(f, walk, step, length, users, {lat, lon}, output);
    if (*serve) return RunServe(f, host, port, snapshot, ttl, field_radius);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCodeFor(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace
}  // namespace privar

int main(int argc, char** argv) { return privar::Main(argc, argv); }
