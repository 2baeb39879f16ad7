#include "ig3d/remote_provider.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <httplib.h>

#include "ig3d/error.hpp"

namespace ig3d {

namespace wire {

namespace {

using nlohmann::json;

std::array<int, 3> read_shape(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(std::string(what) + " must be [c, h, w]");
  std::array<int, 3> s{};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number_integer() || j[i].get<int>() <= 0) {
      throw ValidationError(std::string(what) + " entries must be positive integers");
    }
    s[i] = j[i].get<int>();
  }
  return s;
}

Tensor read_tensor(const std::array<int, 3>& shape, const std::string& b64, const char* what) {
  std::vector<double> values = decode_f32(b64);
  const std::size_t expected = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  if (values.size() != expected) {
    throw ValidationError(std::string(what) + " payload length mismatch: expected " + std::to_string(expected) +
                          " values, got " + std::to_string(values.size()));
  }
  Tensor t(shape[0], shape[1], shape[2]);
  t.data = std::move(values);
  return t;
}

}  // namespace

std::string encode_f32(std::span<const double> values) {
  std::vector<unsigned char> raw(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(raw.data() + 4 * i, &f, 4);
  }
  std::string out(4 * ((raw.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw.data(), static_cast<int>(raw.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<double> decode_f32(const std::string& b64) {
  if (b64.size() % 4 != 0) {
    throw ProviderError(ProviderError::Kind::kShape, "base64 payload length is not a multiple of 4");
  }
  std::vector<unsigned char> raw(b64.size() / 4 * 3);
  const int n = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(b64.data()),
                                static_cast<int>(b64.size()));
  if (n < 0) throw ProviderError(ProviderError::Kind::kShape, "invalid base64 payload");
  // EVP_DecodeBlock counts padding bytes as zeros.
  std::size_t len = static_cast<std::size_t>(n);
  if (!b64.empty() && b64.back() == '=') --len;
  if (b64.size() > 1 && b64[b64.size() - 2] == '=') --len;
  if (len % 4 != 0) {
    throw ProviderError(ProviderError::Kind::kShape,
                        "payload of " + std::to_string(len) + " bytes is not a whole number of float32 values");
  }
  std::vector<double> values(len / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    float f;
    std::memcpy(&f, raw.data() + 4 * i, 4);
    values[i] = f;
  }
  return values;
}

json encode_request(const ScoreRequest& request) {
  const Tensor& x = request.x_t;
  json body = {{"version", kVersion},
               {"t", request.t},
               {"shape", {x.channels, x.height, x.width}},
               {"x_t", encode_f32(x.data)},
               {"y", nullptr},
               {"i_src", nullptr}};
  if (request.instruction) body["y"] = *request.instruction;
  if (request.source_image) {
    const Tensor& s = *request.source_image;
    body["i_src"] = {{"shape", {s.channels, s.height, s.width}}, {"data", encode_f32(s.data)}};
  }
  return body;
}

ScoreRequest decode_request(const json& body) {
  if (!body.is_object()) throw ValidationError("request body must be a JSON object");
  if (!body.contains("version") || body["version"] != kVersion) {
    throw ValidationError("unsupported protocol version; expected " + std::to_string(kVersion));
  }
  ScoreRequest req;
  if (!body.contains("t") || !body["t"].is_number_integer()) throw ValidationError("t must be an integer");
  req.t = body["t"].get<int>();
  if (!body.contains("x_t") || !body["x_t"].is_string()) throw ValidationError("x_t must be a base64 string");
  req.x_t = read_tensor(read_shape(body.value("shape", json()), "shape"), body["x_t"].get<std::string>(), "x_t");
  if (body.contains("y") && !body["y"].is_null()) {
    if (!body["y"].is_string()) throw ValidationError("y must be a string or null");
    req.instruction = body["y"].get<std::string>();
  }
  if (body.contains("i_src") && !body["i_src"].is_null()) {
    const json& src = body["i_src"];
    if (!src.is_object() || !src.contains("data") || !src["data"].is_string()) {
      throw ValidationError("i_src must be {shape, data} or null");
    }
    req.source_image = read_tensor(read_shape(src.value("shape", json()), "i_src.shape"),
                                   src["data"].get<std::string>(), "i_src");
  }
  return req;
}

json encode_response(const Tensor& eps) { return {{"version", kVersion}, {"eps", encode_f32(eps.data)}}; }

Tensor decode_response(const json& body, const Tensor& like) {
  if (!body.is_object() || !body.contains("version") || body["version"] != kVersion) {
    throw ProviderError(ProviderError::Kind::kProtocolVersion,
                        "server replied with protocol version " +
                            (body.is_object() && body.contains("version") ? body["version"].dump() : "<missing>") +
                            ", expected " + std::to_string(kVersion));
  }
  if (!body.contains("eps") || !body["eps"].is_string()) {
    throw ProviderError(ProviderError::Kind::kShape, "response lacks an eps payload");
  }
  std::vector<double> values = decode_f32(body["eps"].get<std::string>());
  if (values.size() != like.size()) {
    throw ProviderError(ProviderError::Kind::kShape, "eps payload length mismatch for shape " + like.shape_string() +
                                                         ": expected " + std::to_string(like.size()) + " values, got " +
                                                         std::to_string(values.size()));
  }
  Tensor out = like;
  out.data = std::move(values);
  return out;
}

}  // namespace wire

namespace {

httplib::Client make_client(const RemoteConfig& config) {
  httplib::Client cli(config.url);
  const auto secs = static_cast<time_t>(config.timeout_seconds);
  const auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  return cli;
}

std::string server_message(const httplib::Response& res) {
  try {
    const auto j = nlohmann::json::parse(res.body);
    if (j.is_object() && j.contains("error") && j["error"].is_string()) return j["error"].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return res.body;
}

}  // namespace

RemoteProvider::RemoteProvider(RemoteConfig config) : config_(std::move(config)) {
  if (config_.url.rfind("http://", 0) != 0) {
    throw ValidationError("remote provider URL must start with http://, got '" + config_.url + "'");
  }
  if (!(config_.timeout_seconds > 0.0)) throw ValidationError("remote provider timeout must be positive");
}

Tensor RemoteProvider::predict(const ScoreRequest& request) const {
  auto cli = make_client(config_);
  const std::string body = wire::encode_request(request).dump();
  auto res = cli.Post("/v1/predict", body, "application/json");
  if (!res) {
    throw ProviderError(ProviderError::Kind::kTransport,
                        "cannot reach score provider at " + config_.url + ": " + httplib::to_string(res.error()));
  }
  if (res->status == 400) {
    const std::string msg = server_message(*res);
    const bool shape = msg.find("mismatch") != std::string::npos || msg.find("shape") != std::string::npos;
    throw ProviderError(shape ? ProviderError::Kind::kShape : ProviderError::Kind::kServer,
                        "score provider rejected request: " + msg);
  }
  if (res->status != 200) {
    throw ProviderError(ProviderError::Kind::kBackend,
                        "score provider failed with HTTP " + std::to_string(res->status) + ": " + server_message(*res));
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderError::Kind::kServer, std::string("score provider sent invalid JSON: ") + e.what());
  }
  return wire::decode_response(reply, request.x_t);
}

std::string RemoteProvider::id() const { return "remote:" + config_.url; }

std::string RemoteProvider::health() const {
  auto cli = make_client(config_);
  auto res = cli.Get("/v1/health");
  if (!res) {
    throw ProviderError(ProviderError::Kind::kTransport,
                        "cannot reach score provider at " + config_.url + ": " + httplib::to_string(res.error()));
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    if (res->status != 200 || j.value("status", "") != "ok") {
      throw ProviderError(ProviderError::Kind::kServer, "score provider unhealthy: " + res->body);
    }
    return j.value("backend", "");
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderError::Kind::kServer, std::string("invalid health response: ") + e.what());
  }
}

std::unique_ptr<RemoteProvider> remote_provider(RemoteConfig config) {
  return std::make_unique<RemoteProvider>(std::move(config));
}

}  // namespace ig3d
