#pragma once

#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "ig3d/diffusion.hpp"

namespace ig3d {

/// Score wire protocol, version 1.
///
///   POST /v1/predict
///     {"version": 1, "t": int, "shape": [c, h, w], "x_t": <b64 f32 LE>,
///      "y": string | null,
///      "i_src": {"shape": [3, h', w'], "data": <b64 f32 LE>} | null}
///   -> {"version": 1, "eps": <b64 f32 LE, shape of x_t>}
///   errors: HTTP 400 {"error": string}
///
///   GET /v1/health -> {"status": "ok", "backend": string}
namespace wire {

inline constexpr int kVersion = 1;

std::string encode_f32(std::span<const double> values);
/// Throws ProviderError(kShape) when the payload is not a whole number of floats.
std::vector<double> decode_f32(const std::string& b64);

nlohmann::json encode_request(const ScoreRequest& request);
/// Server-side parse; throws ValidationError with a client-facing message.
ScoreRequest decode_request(const nlohmann::json& body);

nlohmann::json encode_response(const Tensor& eps);
/// Client-side parse against the expected shape.
Tensor decode_response(const nlohmann::json& body, const Tensor& like);

}  // namespace wire

struct RemoteConfig {
  /// Base URL, e.g. "http://127.0.0.1:8765".
  std::string url;
  double timeout_seconds = 30.0;
};

/// Score provider backed by an HTTP server speaking the wire protocol. Each
/// call issues one request; guidance is composed client-side.
class RemoteProvider final : public ScoreProvider {
 public:
  explicit RemoteProvider(RemoteConfig config);

  Tensor predict(const ScoreRequest& request) const override;
  std::string id() const override;

  /// GET /v1/health; returns the backend name.
  std::string health() const;

 private:
  RemoteConfig config_;
};

std::unique_ptr<RemoteProvider> remote_provider(RemoteConfig config);

}  // namespace ig3d
