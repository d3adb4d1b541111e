#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsim/errors.hpp"

// Shared layout of the on-disk containers: an 8-byte ASCII magic, an
// unsigned 32-bit little-endian header length, a UTF-8 JSON header, then a
// payload of IEEE-754 binary32 little-endian values.

namespace ctsim::io {

inline void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f32le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32le(out, bits);
}

inline std::string encode_container(const char magic[8],
                                    const nlohmann::json& header,
                                    const std::vector<double>& payload) {
  std::string out;
  const std::string hdr = header.dump();
  out.reserve(12 + hdr.size() + payload.size() * 4);
  out.append(magic, 8);
  put_u32le(out, static_cast<uint32_t>(hdr.size()));
  out.append(hdr);
  for (double v : payload) put_f32le(out, static_cast<float>(v));
  return out;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw data_error("short write: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

inline Container decode_container(const char magic[8], const std::string& bytes,
                                  const std::string& origin) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), magic, 8) != 0)
    throw data_error("bad magic in " + origin);
  uint32_t hdr_len = 0;
  for (int i = 3; i >= 0; --i)
    hdr_len = (hdr_len << 8) | static_cast<uint8_t>(bytes[8 + i]);
  if (bytes.size() < 12 + static_cast<size_t>(hdr_len))
    throw data_error("truncated header in " + origin);
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.substr(12, hdr_len));
  } catch (const nlohmann::json::exception& e) {
    throw data_error("corrupt header in " + origin + ": " + e.what());
  }
  const size_t body = 12 + hdr_len;
  const size_t n = (bytes.size() - body) / 4;
  if ((bytes.size() - body) % 4 != 0)
    throw data_error("payload not a multiple of 4 bytes in " + origin);
  c.payload.resize(n);
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits = 0;
    for (int b = 3; b >= 0; --b)
      bits = (bits << 8) | static_cast<uint8_t>(bytes[body + 4 * i + b]);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    c.payload[i] = static_cast<double>(v);
  }
  return c;
}

}  // namespace ctsim::io
