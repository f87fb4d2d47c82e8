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


#include "privar/service.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "httplib.h"
#include "privar/http_server.hpp"
#include "privar/rng.hpp"
#include "trpsm_oracle.hpp"

namespace privar {
namespace {

using nlohmann::json;

const GeoPoint kHome{39.9, 116.4};

json Request(const std::string& id, const std::string& mech, double eps, GeoPoint at,
             std::optional<double> total = std::nullopt,
             std::optional<double> delta = std::nullopt) {
  json j{{"v", 1},
         {"session_id", id},
         {"mechanism", mech},
         {"epsilon", eps},
         {"true_location", {{"lat", at.lat}, {"lon", at.lon}}},
         {"timestamp", "2026-01-01T00:00:00Z"}};
  if (total) j["epsilon_total"] = *total;
  if (delta) j["delta"] = *delta;
  return j;
}

GeoPoint Offset(GeoPoint origin, double east, double north) {
  return Projection(origin).Unproject({east, north});
}

TEST(WireTest, ParseValidRequest) {
  const json j = Request("s", "trpsm", 0.1, kHome, 1.0, 5.0);
  const PrivArRequest r = ParseRequest(j);
  EXPECT_EQ(r.session_id, "s");
  EXPECT_EQ(r.mechanism, MechanismKind::kTrPsm);
  EXPECT_EQ(r.epsilon_total, 1.0);
  EXPECT_EQ(r.delta, 5.0);
  EXPECT_EQ(ToJson(r), j);
}

TEST(WireTest, RejectsMalformedRequests) {
  EXPECT_THROW(ParseRequest(json::array()), Error);
  EXPECT_THROW(ParseRequest(Request("s", "trpsm", 0.1, kHome)), Error);
  EXPECT_THROW(ParseRequest(Request("s", "psm", 0.1, kHome, 1.0, 5.0)), Error);
  EXPECT_THROW(ParseRequest(Request("s", "psm", 0.0, kHome)), Error);
  EXPECT_THROW(ParseRequest(Request("s", "gauss", 0.1, kHome)), Error);
  EXPECT_THROW(ParseRequest(Request("", "psm", 0.1, kHome)), Error);
  EXPECT_THROW(ParseRequest(Request("s", "psm", 0.1, {95.0, 0.0})), Error);
  json j = Request("s", "psm", 0.1, kHome);
  j["v"] = 2;
  EXPECT_THROW(ParseRequest(j), Error);
  j = Request("s", "psm", 0.1, kHome);
  j["timestamp"] = "noon";
  EXPECT_THROW(ParseRequest(j), Error);
  j = Request("s", "psm", 0.1, kHome);
  j["density"] = "medium";
  EXPECT_THROW(ParseRequest(j), Error);
  j = Request("s", "psm", 0.1, kHome);
  j.erase("true_location");
  EXPECT_THROW(ParseRequest(j), Error);
}

TEST(WireTest, UnknownKeysIgnored) {
  json j = Request("s", "plm", 0.3, kHome);
  j["client_build"] = "x";
  EXPECT_NO_THROW(ParseRequest(j));
}

// Random payloads for the round-trip property.
PrivArRequest RandomRequest(RngStream& rng) {
  PrivArRequest r;
  r.session_id = "s" + std::to_string(rng());
  r.mechanism = static_cast<MechanismKind>(rng.Below(3));
  r.epsilon = rng.Uniform(1e-3, 10.0);
  if (r.mechanism == MechanismKind::kTrPsm) {
    r.epsilon_total = r.epsilon * rng.Uniform(2.0, 50.0);
    r.delta = rng.Uniform(0.0, 100.0);
  }
  if (rng.Below(2)) r.density = rng.Below(2) ? "dense" : "sparse";
  r.true_location = {rng.Uniform(-89.0, 89.0), rng.Uniform(-180.0, 180.0)};
  r.timestamp = FormatIso8601(std::floor(rng.Uniform(0.0, 2e9)));
  return r;
}

PrivArResponse RandomResponse(RngStream& rng) {
  PrivArResponse r;
  r.session_id = "s" + std::to_string(rng.Below(1000));
  r.released_location = {rng.Uniform(-89.0, 89.0), rng.Uniform(-180.0, 180.0)};
  r.decision = static_cast<ReleaseKind>(rng.Below(3));
  r.budget_spent = rng.Uniform(0.0, 10.0);
  r.budget_step = rng.Uniform(0.0, 1.0);
  if (rng.Below(2)) {
    r.budget_left = rng.Uniform(0.0, 5.0);
    r.epsilon_total = rng.Uniform(0.0, 20.0);
  }
  for (std::uint64_t i = 0, n = rng.Below(10); i < n; ++i) {
    r.objects.push_back({"o" + std::to_string(i), {rng.Uniform(-89, 89), rng.Uniform(-180, 180)}});
  }
  if (rng.Below(2)) r.catchable_pct = rng.Uniform(0.0, 100.0);
  r.timings = {{"perturb_ms", rng.Uniform01()}, {"total_ms", rng.Uniform01()}};
  return r;
}

TEST(WireProperty, RoundTrip) {
  RngStream rng(1);
  for (int i = 0; i < 1000; ++i) {
    const json req = ToJson(RandomRequest(rng));
    const json req_text = json::parse(req.dump());
    ASSERT_EQ(ToJson(ParseRequest(req_text)), req);
    const json resp = ToJson(RandomResponse(rng));
    ASSERT_EQ(ToJson(ParseResponse(json::parse(resp.dump()))), resp);
  }
}

TEST(ServiceTest, NearlyNoiselessPlm) {
  PrivArService svc;
  const HandlerResult r = svc.HandlePrivAr(Request("a", "plm", 1e6, kHome).dump());
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const PrivArResponse resp = ParseResponse(r.body);
  EXPECT_LT(Norm(Projection(kHome).Project(resp.released_location)), 0.01);
  ASSERT_TRUE(resp.catchable_pct);
  EXPECT_NEAR(*resp.catchable_pct, 100.0, 1e-9);
}

// The staircase is uniform inside its first interval, so even a huge epsilon
// leaves up to one interval width (1 m) of displacement.
TEST(ServiceTest, NearlyNoiselessPsm) {
  PrivArService svc;
  const HandlerResult r = svc.HandlePrivAr(Request("a", "psm", 1e6, kHome).dump());
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const PrivArResponse resp = ParseResponse(r.body);
  const Projection frame(kHome);
  EXPECT_LE(Norm(frame.Project(resp.released_location)), 1.0 + 1e-6);
  ASSERT_TRUE(resp.catchable_pct);
  EXPECT_NEAR(*resp.catchable_pct, 100.0, 1e-9);
  EXPECT_FALSE(resp.budget_left);
  EXPECT_EQ(resp.decision, ReleaseKind::kReleased);
  for (const char* stage : {"perturb_ms", "object_generation_ms", "serialization_ms", "total_ms"}) {
    EXPECT_TRUE(resp.timings.count(stage)) << stage;
  }
  for (const auto& o : resp.objects) {
    EXPECT_LE(Distance(frame.Project(o.location), frame.Project(resp.released_location)),
              150.0 + 1e-6);
  }
}

TEST(ServiceTest, StationaryTrPsmSession) {
  PrivArService svc;
  for (int i = 0; i < 10; ++i) {
    const HandlerResult r = svc.HandlePrivAr(Request("st", "trpsm", 2.0, kHome, 10.0, 5.0).dump());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body["decision"], i == 0 ? "initial" : "reused");
    EXPECT_NEAR(r.body["budget_spent"].get<double>(), 4.0, 1e-12);
    EXPECT_NEAR(r.body["budget_left"].get<double>(), 6.0, 1e-12);
  }
  const HandlerResult end = svc.HandleEnd(json{{"session_id", "st"}}.dump());
  ASSERT_EQ(end.status, 200);
  EXPECT_EQ(end.body["releases"], 0);
  EXPECT_NEAR(end.body["spend"].get<double>(), 4.0, 1e-12);
}

TEST(ServiceTest, JumpWithMinimalBudgetExhausts) {
  PrivArService svc;
  ASSERT_EQ(svc.HandlePrivAr(Request("j", "trpsm", 0.1, kHome, 0.2, 5.0).dump()).status, 200);
  const HandlerResult r =
      svc.HandlePrivAr(Request("j", "trpsm", 0.1, Offset(kHome, 500, 0), 0.2, 5.0).dump());
  ASSERT_EQ(r.status, 409);
  EXPECT_EQ(r.body["error"], "BudgetExhausted");
  EXPECT_NEAR(r.body["spend"].get<double>(), 0.2, 1e-12);
  EXPECT_NEAR(r.body["epsilon_total"].get<double>(), 0.2, 1e-12);
  EXPECT_EQ(r.body["session_id"], "j");
  EXPECT_TRUE(r.body["z_ref"].contains("lat"));
}

TEST(ServiceTest, TopUpResumesThenExhaustsAgain) {
  PrivArService svc;
  ASSERT_EQ(svc.HandlePrivAr(Request("t", "trpsm", 0.1, kHome, 0.2, 5.0).dump()).status, 200);
  const auto far = Request("t", "trpsm", 0.1, Offset(kHome, 800, 0), 0.2, 5.0).dump();
  ASSERT_EQ(svc.HandlePrivAr(far).status, 409);
  const HandlerResult zero = svc.HandleTopUp(json{{"session_id", "t"}, {"additional", 0.0}}.dump());
  ASSERT_EQ(zero.status, 200);
  EXPECT_NEAR(zero.body["budget_left"].get<double>(), 0.0, 1e-12);
  const HandlerResult up = svc.HandleTopUp(json{{"session_id", "t"}, {"additional", 0.1}}.dump());
  ASSERT_EQ(up.status, 200);
  EXPECT_NEAR(up.body["budget_left"].get<double>(), 0.1, 1e-12);
  const HandlerResult ok = svc.HandlePrivAr(far);
  ASSERT_EQ(ok.status, 200) << ok.body.dump();
  EXPECT_EQ(ok.body["decision"], "released");
  EXPECT_NEAR(ok.body["budget_spent"].get<double>(), 0.3, 1e-12);
  const auto back = Request("t", "trpsm", 0.1, Offset(kHome, -800, 0), 0.2, 5.0).dump();
  EXPECT_EQ(svc.HandlePrivAr(back).status, 409);
}

TEST(ServiceTest, EndLedgerAfterThreeCrossings) {
  PrivArService svc;
  ASSERT_EQ(svc.HandlePrivAr(Request("k", "trpsm", 0.1, kHome, 1.0, 5.0).dump()).status, 200);
  for (int i = 1; i <= 3; ++i) {
    const HandlerResult r = svc.HandlePrivAr(
        Request("k", "trpsm", 0.1, Offset(kHome, 1000.0 * i, 0), 1.0, 5.0).dump());
    ASSERT_EQ(r.body["decision"], "released");
  }
  const HandlerResult end = svc.HandleEnd(json{{"session_id", "k"}}.dump());
  EXPECT_EQ(end.body["releases"], 3);
  EXPECT_NEAR(end.body["spend"].get<double>(), 0.5, 1e-12);
  // The id is free again and starts a fresh session.
  const HandlerResult again = svc.HandlePrivAr(Request("k", "trpsm", 0.1, kHome, 1.0, 5.0).dump());
  EXPECT_EQ(again.body["decision"], "initial");
  EXPECT_NEAR(again.body["budget_spent"].get<double>(), 0.2, 1e-12);
}

TEST(ServiceTest, ErrorStatuses) {
  PrivArService svc;
  EXPECT_EQ(svc.HandlePrivAr("{not json").status, 400);
  EXPECT_EQ(svc.HandlePrivAr(Request("b", "trpsm", 0.1, kHome, 0.19, 5.0).dump()).status, 400);
  EXPECT_EQ(svc.SessionCount(), 0u);
  EXPECT_EQ(svc.HandleTopUp(json{{"session_id", "nope"}, {"additional", 1.0}}.dump()).status, 404);
  EXPECT_EQ(svc.HandleEnd(json{{"session_id", "nope"}}.dump()).status, 404);
  ASSERT_EQ(svc.HandlePrivAr(Request("c", "psm", 0.1, kHome).dump()).status, 200);
  EXPECT_EQ(svc.HandlePrivAr(Request("c", "plm", 0.1, kHome).dump()).status, 409);
  EXPECT_EQ(svc.HandleTopUp(json{{"session_id", "c"}, {"additional", 1.0}}.dump()).status, 400);
  EXPECT_EQ(svc.HandleTopUp(json{{"session_id", "c"}}.dump()).status, 400);
}

TEST(ServiceTest, StatelessLedger) {
  PrivArService svc;
  for (int i = 0; i < 4; ++i) {
    const HandlerResult r = svc.HandlePrivAr(Request("p", "plm", 0.25, kHome).dump());
    ASSERT_EQ(r.status, 200);
    EXPECT_NEAR(r.body["budget_spent"].get<double>(), 0.25 * (i + 1), 1e-12);
    EXPECT_TRUE(r.body["budget_left"].is_null());
  }
  const HandlerResult end = svc.HandleEnd(json{{"session_id", "p"}}.dump());
  EXPECT_EQ(end.body["releases"], 4);
  EXPECT_TRUE(end.body["epsilon_total"].is_null());
}

TEST(ServiceTest, MatchesOracleDecisionByDecision) {
  ServiceConfig cfg;
  cfg.seed = 1234;
  PrivArService svc(cfg);
  const Projection frame(kHome);
  testing::TrPsmOracle oracle(SessionSeed(1234, "o"), 0.2, 2.0, 10.0);
  RngStream walk(5);
  PlanarPoint x{0, 0};
  for (int t = 0; t < 60; ++t) {
    if (t > 0) {
      const double step = walk.Uniform01() < 0.3 ? 60.0 : 2.0;
      const double a = walk.Angle();
      x = {x.x + step * std::cos(a), x.y + step * std::sin(a)};
    }
    const GeoPoint at = frame.Unproject(x);
    const PlanarPoint px = frame.Project(at);
    const auto o = t == 0 ? oracle.Start(px.x, px.y) : oracle.Step(px.x, px.y);
    const HandlerResult r = svc.HandlePrivAr(Request("o", "trpsm", 0.2, at, 2.0, 10.0).dump());
    if (o.kind == testing::OracleKind::kExhausted) {
      ASSERT_EQ(r.status, 409) << "t " << t;
      continue;
    }
    ASSERT_EQ(r.status, 200) << "t " << t << " " << r.body.dump();
    const char* want = o.kind == testing::OracleKind::kInitial    ? "initial"
                       : o.kind == testing::OracleKind::kReleased ? "released"
                                                                  : "reused";
    ASSERT_EQ(r.body["decision"], want) << "t " << t;
    const PlanarPoint z = frame.Project(ParseResponse(r.body).released_location);
    ASSERT_NEAR(z.x, o.x, 1e-6);
    ASSERT_NEAR(z.y, o.y, 1e-6);
    ASSERT_NEAR(r.body["budget_spent"].get<double>(), o.spend, 1e-12);
  }
}

TEST(ServiceProperty, InterleavedSessionsAreIsolated) {
  ServiceConfig cfg;
  cfg.seed = 77;
  PrivArService alone(cfg), shared(cfg);
  RngStream walk(6);
  std::vector<GeoPoint> a_path, b_path;
  for (int t = 0; t < 40; ++t) {
    a_path.push_back(Offset(kHome, walk.Uniform(-300, 300), walk.Uniform(-300, 300)));
    b_path.push_back(Offset(kHome, walk.Uniform(-300, 300), walk.Uniform(-300, 300)));
  }
  for (int t = 0; t < 40; ++t) {
    const auto ra = alone.HandlePrivAr(Request("A", "trpsm", 0.1, a_path[t], 3.0, 20.0).dump());
    const auto sa = shared.HandlePrivAr(Request("A", "trpsm", 0.1, a_path[t], 3.0, 20.0).dump());
    shared.HandlePrivAr(Request("B", "trpsm", 0.1, b_path[t], 3.0, 20.0).dump());
    ASSERT_EQ(ra.status, sa.status);
    if (ra.status != 200) continue;
    ASSERT_EQ(ra.body["released_location"], sa.body["released_location"]);
    ASSERT_EQ(ra.body["budget_spent"], sa.body["budget_spent"]);
    ASSERT_EQ(ra.body["objects"], sa.body["objects"]);
  }
}

TEST(ServiceTest, ConcurrentSessions) {
  PrivArService svc;
  std::vector<std::jthread> pool;
  std::atomic<int> failures{0};
  for (int w = 0; w < 4; ++w) {
    pool.emplace_back([&, w] {
      for (int i = 0; i < 200; ++i) {
        const std::string id = "c" + std::to_string(w) + "_" + std::to_string(i % 5);
        const auto r = svc.HandlePrivAr(Request(id, "trpsm", 0.1, kHome, 100.0, 5.0).dump());
        if (r.status != 200) ++failures;
      }
    });
  }
  pool.clear();
  EXPECT_EQ(failures.load(), 0);
  EXPECT_EQ(svc.SessionCount(), 20u);
}

TEST(ServiceTest, IdleSessionsExpire) {
  ServiceConfig cfg;
  cfg.session_ttl = std::chrono::seconds(60);
  PrivArService svc(cfg);
  ASSERT_EQ(svc.HandlePrivAr(Request("x", "psm", 0.1, kHome).dump()).status, 200);
  EXPECT_EQ(svc.ExpireIdle(), 0u);
  EXPECT_EQ(svc.ExpireIdle(PrivArService::Clock::now() + std::chrono::seconds(61)), 1u);
  EXPECT_EQ(svc.SessionCount(), 0u);
}

TEST(ServiceTest, SnapshotRestoresSessions) {
  ServiceConfig cfg;
  cfg.seed = 9;
  PrivArService a(cfg);
  const auto first = Request("s", "trpsm", 0.1, kHome, 3.0, 5.0);
  ASSERT_EQ(a.HandlePrivAr(first.dump()).status, 200);
  a.HandlePrivAr(Request("s", "trpsm", 0.1, Offset(kHome, 300, 0), 3.0, 5.0).dump());
  a.HandlePrivAr(Request("p", "psm", 0.3, kHome).dump());
  const auto path = std::filesystem::temp_directory_path() / "privar_service_snapshot.json";
  a.SaveSnapshot(path.string());

  PrivArService b(cfg);
  b.LoadSnapshot(path.string());
  EXPECT_EQ(b.SessionCount(), 2u);
  for (double east : {310.0, 900.0, -400.0}) {
    const auto req = Request("s", "trpsm", 0.1, Offset(kHome, east, 0), 3.0, 5.0).dump();
    const auto ra = a.HandlePrivAr(req);
    const auto rb = b.HandlePrivAr(req);
    ASSERT_EQ(ra.status, rb.status);
    EXPECT_EQ(ra.body["released_location"], rb.body["released_location"]);
    EXPECT_EQ(ra.body["objects"], rb.body["objects"]);
  }
  const auto pa = a.HandlePrivAr(Request("p", "psm", 0.3, kHome).dump());
  const auto pb = b.HandlePrivAr(Request("p", "psm", 0.3, kHome).dump());
  EXPECT_EQ(pa.body["released_location"], pb.body["released_location"]);
  EXPECT_EQ(pa.body["budget_spent"], pb.body["budget_spent"]);
  std::filesystem::remove(path);
  EXPECT_THROW(b.LoadSnapshot("/nonexistent/snap.json"), Error);
  EXPECT_THROW(b.Restore(json{{"sessions", {{{"mechanism", "psm"}}}}}), Error);
}

TEST(ServiceTest, ProcessingIsFast) {
  PrivArService svc;
  double perturb = 0.0, total = 0.0;
  constexpr int kN = 500;
  for (int i = 0; i < kN; ++i) {
    const auto r = svc.HandlePrivAr(Request("f", "psm", 0.1, kHome).dump());
    perturb += r.body["timings"]["perturb_ms"].get<double>();
    total += r.body["timings"]["total_ms"].get<double>();
  }
  EXPECT_LT(total / kN, 5.0);
  EXPECT_LT(perturb / kN, 0.1);
}

TEST(HttpServerTest, EndpointsOverLoopback) {
  PrivArService svc;
  HttpServer server(svc);
  const int port = server.Bind("127.0.0.1", 0);
  std::jthread runner([&] { server.Run(); });
  server.WaitUntilReady();
  httplib::Client cli("127.0.0.1", port);

  auto health = cli.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["status"], "ok");

  auto bad = cli.Post("/PrivAR", "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(bad->get_header_value("Access-Control-Allow-Origin"), "*");

  auto ok = cli.Post("/PrivAR", Request("h", "trpsm", 0.1, kHome, 0.2, 5.0).dump(),
                     "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(ok->get_header_value("Content-Type"), "application/json");
  auto top = cli.Post("/PrivAR/topup", json{{"session_id", "h"}, {"additional", 0.1}}.dump(),
                      "application/json");
  ASSERT_TRUE(top);
  EXPECT_EQ(top->status, 200);
  auto end = cli.Post("/PrivAR/end", json{{"session_id", "h"}}.dump(), "application/json");
  ASSERT_TRUE(end);
  EXPECT_EQ(end->status, 200);
  auto pre = cli.Options("/PrivAR");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  // Still serving after bad input.
  EXPECT_EQ(cli.Get("/healthz")->status, 200);
  server.Stop();
}

}  // namespace
}  // namespace privar
