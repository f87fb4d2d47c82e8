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

// Demo AR content backend, independent of the HTTP transport.
//
// Request (POST /PrivAR), schema version 1:
//
//   {"v": 1, "session_id": "s1", "mechanism": "trpsm", "epsilon": 0.1,
//    "epsilon_total": 2.0, "delta": 5.0, "density": "sparse",
//    "true_location": {"lat": 39.9, "lon": 116.4},
//    "timestamp": "2026-01-01T00:00:00Z"}
//
// epsilon_total and delta are present exactly when mechanism is "trpsm";
// density is optional and falls back to the server default.
//
// Response:
//
//   {"v": 1, "session_id": "s1", "released_location": {"lat": .., "lon": ..},
//    "decision": "initial|released|reused", "budget_spent": .., "budget_step": ..,
//    "budget_left": .. | null, "epsilon_total": .. | null,
//    "objects": [{"id": "o0_1", "lat": .., "lon": ..}, ...],
//    "catchable_pct": .. | null,
//    "timings": {"perturb_ms": .., "object_generation_ms": ..,
//                "serialization_ms": .., "total_ms": ..}}
//
// budget_spent is the session's cumulative spend; for plm/psm sessions it is
// requests * epsilon and budget_left/epsilon_total are null.
//
// Errors carry {"error": <name>, "message": <text>}; an exhausted TR-PSM
// session answers 409 with {"error": "BudgetExhausted", "spend",
// "epsilon_total", "budget_left", "z_ref": {lat, lon}, "session_id"}.

#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "privar/error.hpp"
#include "privar/geo.hpp"
#include "privar/ingest.hpp"
#include "privar/mechanisms.hpp"
#include "privar/objects.hpp"
#include "privar/rng.hpp"
#include "privar/session.hpp"

namespace privar {

inline constexpr int kWireVersion = 1;

struct WireObject {
  std::string id;
  GeoPoint location;
  friend bool operator==(const WireObject&, const WireObject&) = default;
};

struct PrivArRequest {
  std::string session_id;
  MechanismKind mechanism = MechanismKind::kPsm;
  double epsilon = 0.0;
  std::optional<double> epsilon_total;  // trpsm only
  std::optional<double> delta;          // trpsm only
  std::optional<std::string> density;   // "sparse" | "dense"
  GeoPoint true_location;
  std::string timestamp;
};

struct PrivArResponse {
  std::string session_id;
  GeoPoint released_location;
  ReleaseKind decision = ReleaseKind::kReleased;
  double budget_spent = 0.0;
  double budget_step = 0.0;
  std::optional<double> budget_left;
  std::optional<double> epsilon_total;
  std::vector<WireObject> objects;
  std::optional<double> catchable_pct;
  std::map<std::string, double> timings;
};

// ---------------------------------------------------------------------------
// Wire (de)serialization. Parsing validates; serialization is total.

namespace internal {

inline nlohmann::json GeoToJson(const GeoPoint& p) {
  return {{"lat", p.lat}, {"lon", p.lon}};
}

inline GeoPoint GeoFromJson(const nlohmann::json& j, const char* field) {
  if (!j.is_object() || !j.contains("lat") || !j.contains("lon") ||
      !j.at("lat").is_number() || !j.at("lon").is_number()) {
    Fail(ErrorCode::kInvalidArgument,
         std::string(field) + " must be an object with numeric lat and lon");
  }
  GeoPoint p{j.at("lat").get<double>(), j.at("lon").get<double>()};
  if (!IsValid(p)) {
    Fail(ErrorCode::kInvalidArgument, std::string(field) + " is not a WGS84 point");
  }
  return p;
}

inline double NumberField(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_number()) {
    Fail(ErrorCode::kInvalidArgument, std::string("field '") + name +
                                          "' must be a number");
  }
  return j.at(name).get<double>();
}

inline std::string StringField(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_string()) {
    Fail(ErrorCode::kInvalidArgument, std::string("field '") + name +
                                          "' must be a string");
  }
  return j.at(name).get<std::string>();
}

inline void CheckVersion(const nlohmann::json& j) {
  if (!j.is_object()) Fail(ErrorCode::kInvalidArgument, "payload must be a JSON object");
  if (j.contains("v") &&
      (!j.at("v").is_number_integer() || j.at("v").get<int>() != kWireVersion)) {
    Fail(ErrorCode::kInvalidArgument, "unsupported schema version");
  }
}

inline std::optional<double> OptionalNumber(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || j.at(name).is_null()) return std::nullopt;
  return NumberField(j, name);
}

inline nlohmann::json OptionalToJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace internal

inline nlohmann::json ToJson(const PrivArRequest& r) {
  nlohmann::json j;
  j["v"] = kWireVersion;
  j["session_id"] = r.session_id;
  j["mechanism"] = std::string(MechanismName(r.mechanism));
  j["epsilon"] = r.epsilon;
  if (r.epsilon_total) j["epsilon_total"] = *r.epsilon_total;
  if (r.delta) j["delta"] = *r.delta;
  if (r.density) j["density"] = *r.density;
  j["true_location"] = internal::GeoToJson(r.true_location);
  j["timestamp"] = r.timestamp;
  return j;
}

inline PrivArRequest ParseRequest(const nlohmann::json& j) {
  using namespace internal;
  CheckVersion(j);
  PrivArRequest r;
  r.session_id = StringField(j, "session_id");
  if (r.session_id.empty()) Fail(ErrorCode::kInvalidArgument, "session_id is empty");
  r.mechanism = ParseMechanism(StringField(j, "mechanism"));
  r.epsilon = NumberField(j, "epsilon");
  Epsilon{r.epsilon};  // validates > 0
  const bool trpsm = r.mechanism == MechanismKind::kTrPsm;
  const bool has_total = j.contains("epsilon_total");
  const bool has_delta = j.contains("delta");
  if (trpsm != has_total || trpsm != has_delta) {
    Fail(ErrorCode::kInvalidArgument,
         "epsilon_total and delta are required for trpsm and only for trpsm");
  }
  if (trpsm) {
    r.epsilon_total = NumberField(j, "epsilon_total");
    r.delta = NumberField(j, "delta");
  }
  if (j.contains("density")) {
    r.density = StringField(j, "density");
    ObjectFieldConfig::ForDensity(*r.density);  // validates
  }
  if (!j.contains("true_location")) {
    Fail(ErrorCode::kInvalidArgument, "true_location is required");
  }
  r.true_location = GeoFromJson(j.at("true_location"), "true_location");
  r.timestamp = StringField(j, "timestamp");
  if (!ParseIso8601(r.timestamp)) {
    Fail(ErrorCode::kInvalidArgument, "timestamp is not ISO-8601 UTC");
  }
  return r;
}

inline nlohmann::json ToJson(const PrivArResponse& r) {
  nlohmann::json j;
  j["v"] = kWireVersion;
  j["session_id"] = r.session_id;
  j["released_location"] = internal::GeoToJson(r.released_location);
  j["decision"] = std::string(ReleaseKindName(r.decision));
  j["budget_spent"] = r.budget_spent;
  j["budget_step"] = r.budget_step;
  j["budget_left"] = internal::OptionalToJson(r.budget_left);
  j["epsilon_total"] = internal::OptionalToJson(r.epsilon_total);
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : r.objects) {
    objs.push_back({{"id", o.id}, {"lat", o.location.lat}, {"lon", o.location.lon}});
  }
  j["objects"] = std::move(objs);
  j["catchable_pct"] = internal::OptionalToJson(r.catchable_pct);
  j["timings"] = r.timings;
  return j;
}

inline PrivArResponse ParseResponse(const nlohmann::json& j) {
  using namespace internal;
  CheckVersion(j);
  PrivArResponse r;
  try {
    r.session_id = StringField(j, "session_id");
    r.released_location = GeoFromJson(j.at("released_location"), "released_location");
    r.decision = ParseReleaseKind(StringField(j, "decision"));
    r.budget_spent = NumberField(j, "budget_spent");
    r.budget_step = NumberField(j, "budget_step");
    r.budget_left = OptionalNumber(j, "budget_left");
    r.epsilon_total = OptionalNumber(j, "epsilon_total");
    for (const auto& o : j.at("objects")) {
      r.objects.push_back(WireObject{StringField(o, "id"), GeoFromJson(o, "object")});
    }
    r.catchable_pct = OptionalNumber(j, "catchable_pct");
    for (const auto& [stage, ms] : j.at("timings").items()) {
      r.timings[stage] = ms.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("malformed response: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Service.

struct ServiceConfig {
  std::uint64_t seed = 1;
  std::string default_density = "sparse";
  double field_radius = 150.0;
  double visibility_radius = 100.0;
  std::chrono::seconds session_ttl{600};
};

// Seed of the perturbation stream owned by one session.
inline std::uint64_t SessionSeed(std::uint64_t service_seed, std::string_view session_id) {
  return MixSeed(service_seed ^ HashString(session_id));
}

struct HandlerResult {
  int status = 200;
  nlohmann::json body;
};

inline HandlerResult ErrorResult(int status, std::string_view name, std::string_view message) {
  return {status, {{"error", name}, {"message", message}}};
}

inline HandlerResult ErrorResult(const Error& e) {
  const int status = e.code() == ErrorCode::kNotFound ? 404 : 400;
  return ErrorResult(status, ErrorCodeName(e.code()), e.what());
}

class PrivArService {
 public:
  using Clock = std::chrono::steady_clock;

  explicit PrivArService(ServiceConfig cfg = {}) : cfg_(std::move(cfg)) {
    ObjectFieldConfig::ForDensity(cfg_.default_density);
  }

  const ServiceConfig& config() const { return cfg_; }

  HandlerResult HandlePrivAr(std::string_view body) {
    const auto t_begin = Clock::now();
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return ErrorResult(400, "MalformedJson", "request body is not JSON");
    PrivArRequest req;
    try {
      req = ParseRequest(j);
    } catch (const Error& e) {
      return ErrorResult(e);
    }
    try {
      return Process(req, t_begin);
    } catch (const Error& e) {
      return ErrorResult(e);
    }
  }

  HandlerResult HandleTopUp(std::string_view body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return ErrorResult(400, "MalformedJson", "request body is not JSON");
    try {
      internal::CheckVersion(j);
      const std::string id = internal::StringField(j, "session_id");
      const double additional = internal::NumberField(j, "additional");
      const double left = TopUp(id, additional);
      auto entry = Find(id);
      return {200,
              {{"session_id", id},
               {"budget_left", left},
               {"epsilon_total", entry ? entry->session->epsilon_total() : 0.0}}};
    } catch (const Error& e) {
      return ErrorResult(e);
    }
  }

  HandlerResult HandleEnd(std::string_view body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return ErrorResult(400, "MalformedJson", "request body is not JSON");
    try {
      internal::CheckVersion(j);
      const std::string id = internal::StringField(j, "session_id");
      return {200, EndSession(id)};
    } catch (const Error& e) {
      return ErrorResult(e);
    }
  }

  // Adds `additional` to a TR-PSM session's budget; returns the new balance.
  double TopUp(const std::string& session_id, double additional) {
    auto entry = Find(session_id);
    if (!entry) Fail(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
    std::lock_guard<std::mutex> lock(entry->mu);
    if (!entry->session) {
      Fail(ErrorCode::kInvalidArgument, "session '" + session_id + "' is not a trpsm session");
    }
    entry->session->TopUp(additional);
    entry->last_used = Clock::now();
    return entry->session->epsilon_left();
  }

  // Removes the session and returns its final ledger.
  nlohmann::json EndSession(const std::string& session_id) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard<std::mutex> lock(store_mu_);
      auto it = sessions_.find(session_id);
      if (it == sessions_.end()) {
        Fail(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
      }
      entry = it->second;
      sessions_.erase(it);
    }
    std::lock_guard<std::mutex> lock(entry->mu);
    entry->ended = true;
    nlohmann::json ledger;
    ledger["session_id"] = session_id;
    ledger["mechanism"] = std::string(MechanismName(entry->kind));
    ledger["epsilon"] = entry->epsilon;
    if (entry->session) {
      ledger["releases"] = entry->session->releases();
      ledger["spend"] = entry->session->Spend();
      ledger["epsilon_total"] = entry->session->epsilon_total();
    } else {
      ledger["releases"] = entry->requests;
      ledger["spend"] = static_cast<double>(entry->requests) * entry->epsilon;
      ledger["epsilon_total"] = nullptr;
    }
    return ledger;
  }

  std::size_t SessionCount() const {
    std::lock_guard<std::mutex> lock(store_mu_);
    return sessions_.size();
  }

  // Sessions idle for longer than the TTL are dropped.
  std::size_t ExpireIdle(Clock::time_point now = Clock::now()) {
    std::lock_guard<std::mutex> lock(store_mu_);
    std::size_t dropped = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      std::unique_lock<std::mutex> entry_lock(it->second->mu, std::try_to_lock);
      if (entry_lock.owns_lock() && now - it->second->last_used > cfg_.session_ttl) {
        it->second->ended = true;
        it = sessions_.erase(it);
        ++dropped;
      } else {
        ++it;
      }
    }
    return dropped;
  }

  nlohmann::json Snapshot() const {
    std::lock_guard<std::mutex> lock(store_mu_);
    nlohmann::json out;
    out["v"] = kWireVersion;
    out["sessions"] = nlohmann::json::array();
    for (const auto& [id, entry] : sessions_) {
      std::lock_guard<std::mutex> entry_lock(entry->mu);
      nlohmann::json s;
      s["session_id"] = id;
      s["mechanism"] = std::string(MechanismName(entry->kind));
      s["epsilon"] = entry->epsilon;
      s["origin"] = internal::GeoToJson(entry->frame.origin());
      s["rng"] = entry->rng.State();
      s["object_rng"] = entry->object_rng.State();
      s["requests"] = entry->requests;
      s["session"] = entry->session ? entry->session->Snapshot() : nlohmann::json(nullptr);
      out["sessions"].push_back(std::move(s));
    }
    return out;
  }

  void Restore(const nlohmann::json& snap) {
    try {
      std::map<std::string, std::shared_ptr<Entry>> restored;
      for (const auto& s : snap.at("sessions")) {
        auto entry = std::make_shared<Entry>();
        entry->kind = ParseMechanism(s.at("mechanism").get<std::string>());
        entry->epsilon = s.at("epsilon").get<double>();
        entry->frame = Projection(internal::GeoFromJson(s.at("origin"), "origin"));
        if (!entry->rng.SetState(s.at("rng").get<std::string>()) ||
            !entry->object_rng.SetState(s.at("object_rng").get<std::string>())) {
          Fail(ErrorCode::kInvalidArgument, "bad RNG state in snapshot");
        }
        entry->requests = s.at("requests").get<std::uint64_t>();
        if (!s.at("session").is_null()) {
          entry->session = TrPsmSession::FromSnapshot(s.at("session"));
        }
        entry->last_used = Clock::now();
        restored[s.at("session_id").get<std::string>()] = std::move(entry);
      }
      std::lock_guard<std::mutex> lock(store_mu_);
      sessions_ = std::move(restored);
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kInvalidArgument, std::string("malformed service snapshot: ") + e.what());
    }
  }

  void SaveSnapshot(const std::string& path) const {
    std::ofstream out(path);
    if (!out) Fail(ErrorCode::kIo, "cannot write snapshot '" + path + "'");
    out << Snapshot().dump(2) << '\n';
  }

  void LoadSnapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) Fail(ErrorCode::kIo, "cannot read snapshot '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) Fail(ErrorCode::kInvalidArgument, "snapshot is not JSON");
    Restore(j);
  }

 private:
  struct Entry {
    std::mutex mu;
    MechanismKind kind = MechanismKind::kPsm;
    double epsilon = 0.0;
    Projection frame;
    RngStream rng;         // perturbation draws only
    RngStream object_rng;  // lattice phases
    std::optional<TrPsmSession> session;
    std::uint64_t requests = 0;
    bool ended = false;
    Clock::time_point last_used;
  };

  std::shared_ptr<Entry> Find(const std::string& id) {
    std::lock_guard<std::mutex> lock(store_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  // Returns the live entry for `id`, creating it if needed, with its mutex
  // held by `lock`.
  std::shared_ptr<Entry> Acquire(const PrivArRequest& req,
                                 std::unique_lock<std::mutex>& lock, bool& created) {
    ExpireIdle();
    for (;;) {
      std::shared_ptr<Entry> entry;
      created = false;
      {
        std::lock_guard<std::mutex> store_lock(store_mu_);
        auto& slot = sessions_[req.session_id];
        if (!slot) {
          slot = std::make_shared<Entry>();
          const std::uint64_t seed = SessionSeed(cfg_.seed, req.session_id);
          slot->rng = RngStream(seed);
          slot->object_rng = RngStream(MixSeed(seed ^ 0x6f626a6563747321ULL));
          slot->kind = req.mechanism;
          slot->epsilon = req.epsilon;
          slot->frame = Projection(req.true_location);
          created = true;
        }
        entry = slot;
      }
      lock = std::unique_lock<std::mutex>(entry->mu);
      if (!entry->ended) return entry;
      lock.unlock();
    }
  }

  void Discard(const std::string& id, const std::shared_ptr<Entry>& entry) {
    std::lock_guard<std::mutex> store_lock(store_mu_);
    auto it = sessions_.find(id);
    if (it != sessions_.end() && it->second == entry) sessions_.erase(it);
    entry->ended = true;
  }

  static double Ms(Clock::duration d) {
    return std::chrono::duration<double, std::milli>(d).count();
  }

  HandlerResult Process(const PrivArRequest& req, Clock::time_point t_begin) {
    std::unique_lock<std::mutex> lock;
    bool created = false;
    auto entry = Acquire(req, lock, created);
    if (!created && (entry->kind != req.mechanism || entry->epsilon != req.epsilon)) {
      return ErrorResult(409, "SessionConfigMismatch",
                         "session '" + req.session_id +
                             "' was started with a different mechanism or epsilon");
    }
    const PlanarPoint x = entry->frame.Project(req.true_location);

    PrivArResponse resp;
    resp.session_id = req.session_id;
    const auto t_perturb = Clock::now();
    PlanarPoint z;
    switch (req.mechanism) {
      case MechanismKind::kPlm:
        z = PlmSample(x, Epsilon(req.epsilon), entry->rng);
        resp.decision = ReleaseKind::kReleased;
        break;
      case MechanismKind::kPsm:
        z = PsmSample(x, StaircaseParams(Epsilon(req.epsilon)), entry->rng);
        resp.decision = ReleaseKind::kReleased;
        break;
      case MechanismKind::kTrPsm: {
        if (created) {
          TrPsmConfig cfg;
          cfg.epsilon = Epsilon(req.epsilon);
          cfg.epsilon_total = *req.epsilon_total;
          cfg.delta = *req.delta;
          try {
            auto started = TrPsmSession::Start(x, cfg, entry->rng);
            entry->session.emplace(std::move(started.first));
            z = started.second.output;
            resp.decision = started.second.kind;
            resp.budget_step = started.second.budget_spent_this_step;
          } catch (const Error&) {
            Discard(req.session_id, entry);
            throw;
          }
        } else {
          const StepResult r = entry->session->Step(x, entry->rng);
          if (const auto* ex = std::get_if<BudgetExhausted>(&r)) {
            entry->last_used = Clock::now();
            const GeoPoint zref = entry->frame.Unproject(ex->z_ref);
            return {409,
                    {{"error", "BudgetExhausted"},
                     {"message", "release would exceed the session budget"},
                     {"session_id", req.session_id},
                     {"spend", ex->spend},
                     {"epsilon_total", ex->epsilon_total},
                     {"budget_left", ex->epsilon_left},
                     {"z_ref", internal::GeoToJson(zref)}}};
          }
          const auto& d = std::get<ReleaseDecision>(r);
          z = d.output;
          resp.decision = d.kind;
          resp.budget_step = d.budget_spent_this_step;
        }
        break;
      }
    }
    const auto t_objects = Clock::now();
    ++entry->requests;
    if (entry->session) {
      resp.budget_spent = entry->session->Spend();
      resp.budget_left = entry->session->epsilon_left();
      resp.epsilon_total = entry->session->epsilon_total();
    } else {
      resp.budget_step = req.epsilon;
      resp.budget_spent = static_cast<double>(entry->requests) * req.epsilon;
    }
    resp.released_location = entry->frame.Unproject(z);

    ObjectFieldConfig field =
        ObjectFieldConfig::ForDensity(req.density.value_or(cfg_.default_density));
    field.field_radius = cfg_.field_radius;
    field.visibility_radius = cfg_.visibility_radius;
    const auto objects = GenerateField(z, field, entry->object_rng);
    resp.catchable_pct = CatchableFraction(x, z, objects, field);
    resp.objects.reserve(objects.size());
    for (const auto& o : objects) {
      resp.objects.push_back(WireObject{o.id, entry->frame.Unproject(o.point)});
    }
    entry->last_used = Clock::now();
    lock.unlock();
    const auto t_serialize = Clock::now();

    resp.timings["perturb_ms"] = Ms(t_objects - t_perturb);
    resp.timings["object_generation_ms"] = Ms(t_serialize - t_objects);
    nlohmann::json body = ToJson(resp);
    // Serialization time is the cost of rendering the body once.
    (void)body.dump();
    const auto t_end = Clock::now();
    resp.timings["serialization_ms"] = Ms(t_end - t_serialize);
    resp.timings["total_ms"] = Ms(t_end - t_begin);
    body["timings"] = resp.timings;
    return {200, std::move(body)};
  }

  ServiceConfig cfg_;
  mutable std::mutex store_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace privar
