#pragma once

// Little-endian helpers shared by the dataset and checkpoint formats:
//   magic (8 bytes) | u32 header length | JSON header | payload

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scl/errors.hpp"

namespace scl::io {

inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::vector<unsigned char>& buf, float v) {
  put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::vector<unsigned char> begin_container(std::string_view magic, const nlohmann::json& header) {
  std::vector<unsigned char> buf(magic.begin(), magic.end());
  const std::string text = header.dump();
  put_u32(buf, static_cast<std::uint32_t>(text.size()));
  buf.insert(buf.end(), text.begin(), text.end());
  return buf;
}

// Parsed container prefix; payload_offset points just past the JSON header.
struct Container {
  nlohmann::json header;
  std::size_t payload_offset = 0;
};

inline Container open_container(std::span<const unsigned char> bytes, std::string_view magic) {
  if (bytes.size() < magic.size() ||
      std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError("bad magic: expected \"" + std::string(magic) + "\"", 0);
  }
  if (bytes.size() < magic.size() + 4) {
    throw FormatError("truncated before header length", bytes.size());
  }
  const std::uint32_t len = get_u32(bytes.data() + magic.size());
  const std::size_t start = magic.size() + 4;
  if (bytes.size() - start < len) {
    throw FormatError("header declares " + std::to_string(len) + " bytes but only " +
                          std::to_string(bytes.size() - start) + " remain",
                      start);
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(start + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid JSON header: ") + e.what(), start);
  }
  if (!c.header.is_object()) throw FormatError("JSON header is not an object", start);
  c.payload_offset = start + len;
  return c;
}

}  // namespace scl::io
