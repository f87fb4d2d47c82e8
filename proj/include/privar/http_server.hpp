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

// HTTP routes over PrivArService.

#pragma once

#include <string>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "privar/error.hpp"
#include "privar/service.hpp"

namespace privar {

class HttpServer {
 public:
  explicit HttpServer(PrivArService& service) : service_(service) {
    server_.set_default_headers({
        {"Access-Control-Allow-Origin", "*"},
        {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
        {"Access-Control-Allow-Headers", "Content-Type"},
    });
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
    server_.Post("/PrivAR", [this](const httplib::Request& req, httplib::Response& res) {
      Reply(res, service_.HandlePrivAr(req.body));
    });
    server_.Post("/PrivAR/topup", [this](const httplib::Request& req, httplib::Response& res) {
      Reply(res, service_.HandleTopUp(req.body));
    });
    server_.Post("/PrivAR/end", [this](const httplib::Request& req, httplib::Response& res) {
      Reply(res, service_.HandleEnd(req.body));
    });
    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      Reply(res, {200, {{"status", "ok"}, {"sessions", service_.SessionCount()}}});
    });
    server_.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          std::string what = "internal error";
          try {
            std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            what = e.what();
          } catch (...) {
          }
          Reply(res, ErrorResult(500, "Internal", what));
        });
  }

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int Bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) {
      Fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port_;
  }

  // Blocks until Stop().
  bool Run() { return server_.listen_after_bind(); }

  void Stop() { server_.stop(); }
  void WaitUntilReady() const { server_.wait_until_ready(); }
  bool IsRunning() const { return server_.is_running(); }
  int port() const { return port_; }

 private:
  static void Reply(httplib::Response& res, const HandlerResult& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  PrivArService& service_;
  httplib::Server server_;
  int port_ = -1;
};

}  // namespace privar
