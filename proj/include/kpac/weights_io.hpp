#pragma once

// KPACW1 weight files:
//   "KPACW1\n" | u32 little-endian header length | UTF-8 JSON header |
//   float32 little-endian payload, row-major, concatenated in header order.
// The header records the network configuration and, per parameter, its name,
// shape and byte offset into the payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpac/error.hpp"
#include "kpac/netpbm.hpp"
#include "kpac/network.hpp"

namespace kpac::nn {

inline constexpr char kWeightsMagic[] = "KPACW1\n";
inline constexpr std::size_t kWeightsMagicLen = 7;

namespace detail {

inline nlohmann::json config_to_json(const NetworkConfig& c) {
  return {{"levels", c.levels},
          {"blocks", c.blocks},
          {"k", c.k},
          {"n", c.n},
          {"width", c.width},
          {"attention_width", c.attention_width},
          {"shape_hidden", c.shape_hidden},
          {"share_weights", c.share_weights},
          {"zero_init_output", c.zero_init_output},
          {"output_activation", c.output_activation == Activation::identity ? "identity" : "leaky_relu"}};
}

inline NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.levels = j.at("levels").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.k = j.at("k").get<int>();
  c.n = j.at("n").get<int>();
  c.width = j.at("width").get<int>();
  c.attention_width = j.at("attention_width").get<int>();
  c.shape_hidden = j.at("shape_hidden").get<int>();
  c.share_weights = j.at("share_weights").get<bool>();
  c.zero_init_output = j.value("zero_init_output", false);
  c.output_activation = j.value("output_activation", std::string("leaky_relu")) == "identity"
                            ? Activation::identity
                            : Activation::leaky_relu;
  return c;
}

inline void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32_le(std::vector<unsigned char>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  put_u32_le(out, bits);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Shapes are written as (kh,kw,in_c,out_c) for taps and [length] for biases.
inline nlohmann::json shape_json(const Parameter& p) {
  const auto& s = p.value.shape();
  if (s[0] == 1 && s[1] == 1 && s[2] == 1) return nlohmann::json::array({s[3]});
  return nlohmann::json::array({s[0], s[1], s[2], s[3]});
}

}  // namespace detail

inline std::vector<unsigned char> encode_weights(const NetworkWeights& w) {
  nlohmann::json header;
  header["format"] = "KPACW1";
  header["config"] = detail::config_to_json(w.config());
  header["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter& p : w.params()) {
    header["params"].push_back({{"name", p.name}, {"shape", detail::shape_json(p)}, {"offset", offset}});
    offset += 4 * p.value.size();
  }
  const std::string text = header.dump();
  std::vector<unsigned char> out(kWeightsMagic, kWeightsMagic + kWeightsMagicLen);
  detail::put_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const Parameter& p : w.params()) {
    for (double v : p.value.values()) detail::put_f32_le(out, static_cast<float>(v));
  }
  return out;
}

inline NetworkWeights decode_weights(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kWeightsMagicLen || std::memcmp(bytes.data(), kWeightsMagic, kWeightsMagicLen) != 0) {
    throw Error(ErrorCode::bad_magic, "not a KPACW1 weight file");
  }
  if (bytes.size() < kWeightsMagicLen + 4) throw Error(ErrorCode::truncated, "missing header length");
  const std::uint32_t header_len = detail::get_u32_le(bytes.data() + kWeightsMagicLen);
  const std::size_t header_start = kWeightsMagicLen + 4;
  if (bytes.size() < header_start + header_len) throw Error(ErrorCode::truncated, "header cut short");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(header_start + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_header, e.what());
  }

  NetworkWeights reference;
  try {
    reference = build_network(detail::config_from_json(header.at("config")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_header, e.what());
  }
  const auto& params = header.at("params");
  if (params.size() != reference.size()) {
    throw Error(ErrorCode::shape_mismatch, "parameter list does not match the recorded configuration");
  }

  const std::size_t payload_start = header_start + header_len;
  std::size_t expected = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& ref = reference.param(i);
    if (params[i].at("name").get<std::string>() != ref.name ||
        params[i].at("shape") != detail::shape_json(ref)) {
      throw Error(ErrorCode::shape_mismatch, "unexpected parameter entry for " + ref.name);
    }
    if (params[i].at("offset").get<std::uint64_t>() != expected) {
      throw Error(ErrorCode::malformed_header, "non-contiguous offset for " + ref.name);
    }
    expected += 4 * ref.value.size();
  }
  if (bytes.size() != payload_start + expected) {
    throw Error(ErrorCode::truncated, "payload length " + std::to_string(bytes.size() - payload_start) +
                                          " != declared " + std::to_string(expected));
  }

  const unsigned char* p = bytes.data() + payload_start;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    for (double& v : reference.param(i).value.values()) {
      v = static_cast<double>(std::bit_cast<float>(detail::get_u32_le(p)));
      p += 4;
    }
  }
  return reference;
}

inline void save_weights(const NetworkWeights& w, const std::string& path) {
  write_file_bytes(path, encode_weights(w));
}

inline NetworkWeights load_weights(const std::string& path) { return decode_weights(read_file_bytes(path)); }

}  // namespace kpac::nn
