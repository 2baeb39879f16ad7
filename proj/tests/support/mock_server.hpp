#pragma once

// In-process HTTP score server for client tests. Wraps any ScoreProvider and
// speaks the wire protocol; `mode` injects faults.

// Eigen must come before httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>

#include <atomic>
#include <string>
#include <thread>

#include "ig3d/error.hpp"
#include "ig3d/remote_provider.hpp"

namespace ig3d::testing {

class MockScoreServer {
 public:
  enum class Mode { kNormal, kBadVersion, kServerError, kGarbage, kShortReply };

  explicit MockScoreServer(const ScoreProvider& provider) : provider_(provider) {
    server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status": "ok", "backend": "mock"})", "application/json");
    });
    server_.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockScoreServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  void set_mode(Mode m) { mode_ = m; }
  int requests() const { return requests_; }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    switch (mode_.load()) {
      case Mode::kServerError:
        res.status = 500;
        res.set_content(R"({"error": "backend exploded"})", "application/json");
        return;
      case Mode::kGarbage:
        res.set_content("not json", "text/plain");
        return;
      default:
        break;
    }
    try {
      const ScoreRequest r = wire::decode_request(nlohmann::json::parse(req.body));
      nlohmann::json reply = wire::encode_response(provider_.predict(r));
      if (mode_ == Mode::kBadVersion) reply["version"] = 2;
      if (mode_ == Mode::kShortReply) reply["eps"] = wire::encode_f32(std::vector<double>{1.0});
      res.set_content(reply.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  const ScoreProvider& provider_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<Mode> mode_{Mode::kNormal};
  std::atomic<int> requests_{0};
};

}  // namespace ig3d::testing
