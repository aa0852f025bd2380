// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

// Score-provider wire format. Each message is a UTF-8 JSON object preceded by
// its byte length as a little-endian u32. Tensor payloads are base64 of
// little-endian f32, row-major.

#pragma once

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/hash.hpp"

namespace syncsde::protocol {

using nlohmann::json;

inline constexpr int kVersion = 1;
inline constexpr std::uint32_t kMaxFrame = 256u << 20;

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProviderContractError("base64 payload length is not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw ProviderContractError("malformed base64 payload");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string pack_f32(std::span<const double> values) {
  std::string bytes;
  bytes.reserve(values.size() * 4);
  for (double v : values) put_le(bytes, static_cast<float>(v));
  return base64_encode(bytes);
}

inline std::vector<double> unpack_f32(std::string_view b64) {
  const std::string bytes = base64_decode(b64);
  if (bytes.size() % 4 != 0) throw ProviderContractError("f32 payload is not a whole number of floats");
  std::vector<double> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(get_le<float>(p + 4 * i));
  return out;
}

inline std::string frame(const json& message) {
  const std::string body = message.dump();
  std::string out;
  out.reserve(body.size() + 4);
  put_le(out, static_cast<std::uint32_t>(body.size()));
  out += body;
  return out;
}

inline std::uint32_t frame_length(const unsigned char header[4]) {
  const auto n = get_le<std::uint32_t>(header);
  if (n > kMaxFrame) throw ProviderContractError("frame of " + std::to_string(n) + " bytes exceeds limit");
  return n;
}

inline json hello(std::string_view schedule_digest) {
  return {{"type", "hello"}, {"version", kVersion}, {"schedule_digest", schedule_digest}};
}

inline json ready(const std::vector<std::string>& conditions) { return {{"type", "ready"}, {"conditions", conditions}}; }

inline json eps_request(std::uint64_t id, int t, double alpha_t, std::string_view cond, const Grid& y) {
  return {{"type", "eps"},  {"id", id},           {"t", t}, {"alpha_t", alpha_t}, {"cond", cond},
          {"shape", y.shape()}, {"data", pack_f32(y.values())}};
}

inline json eps_ok(std::uint64_t id, const Grid& eps) {
  return {{"type", "eps_ok"}, {"id", id}, {"data", pack_f32(eps.values())}};
}

inline json error_reply(std::uint64_t id, std::string_view message) {
  return {{"type", "error"}, {"id", id}, {"message", message}};
}

inline std::string message_type(const json& m) {
  if (!m.is_object() || !m.contains("type") || !m["type"].is_string())
    throw ProviderContractError("message without a string 'type'");
  return m["type"].get<std::string>();
}

// Decodes an eps_ok payload and checks it against the request.
inline Grid decode_eps(const json& reply, std::uint64_t id, const Shape& shape) {
  const auto type = message_type(reply);
  if (!reply.contains("id") || !reply["id"].is_number_unsigned() || reply["id"].get<std::uint64_t>() != id)
    throw ProviderContractError("reply id does not match request " + std::to_string(id));
  if (type == "error") {
    const std::string msg = reply.value("message", std::string("(no message)"));
    throw ScoreModelError("provider error for request " + std::to_string(id) + ": " + msg);
  }
  if (type != "eps_ok") throw ProviderContractError("unexpected reply type '" + type + "'");
  if (!reply.contains("data") || !reply["data"].is_string()) throw ProviderContractError("eps_ok without data");
  auto values = unpack_f32(reply["data"].get<std::string>());
  if (values.size() != shape_size(shape))
    throw ProviderContractError("provider returned " + std::to_string(values.size()) + " values for shape " +
                                shape_string(shape));
  Grid eps(shape, std::move(values));
  if (!eps.all_finite()) throw ProviderContractError("provider returned non-finite values");
  return eps;
}

// Request fields as seen by a provider.
struct EpsRequest {
  std::uint64_t id = 0;
  int t = 0;
  double alpha_t = 0;
  std::string cond;
  Grid y;
};

inline EpsRequest decode_request(const json& m) {
  if (message_type(m) != "eps") throw ProviderContractError("expected an eps request");
  EpsRequest r;
  try {
    r.id = m.at("id").get<std::uint64_t>();
    r.t = m.at("t").get<int>();
    r.alpha_t = m.at("alpha_t").get<double>();
    r.cond = m.at("cond").get<std::string>();
    auto shape = m.at("shape").get<Shape>();
    auto values = unpack_f32(m.at("data").get<std::string>());
    r.y = Grid(std::move(shape), std::move(values));
  } catch (const json::exception& e) {
    throw ProviderContractError(std::string("malformed eps request: ") + e.what());
  } catch (const ShapeError& e) {
    throw ProviderContractError(std::string("eps request shape/data mismatch: ") + e.what());
  }
  return r;
}

}  // namespace syncsde::protocol
