#pragma once

#include <fbm/core/error.hpp>
#include <fbm/core/types.hpp>

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace fbm::io {

// Single-file container: 8-byte magic, little-endian u64 header length, a
// JSON header, then raw little-endian float64 blocks in header order.
struct Container {
  nlohmann::json header;
  std::vector<Matrix> blocks;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("container: truncated length field");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_doubles(std::ostream& os, const double* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
  } else {
    for (std::size_t i = 0; i < n; ++i) put_u64(os, std::bit_cast<std::uint64_t>(data[i]));
  }
}

inline void get_doubles(std::istream& is, double* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
    if (!is) throw std::runtime_error("container: truncated data block");
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(is));
  }
}

}  // namespace detail

// The header gains a "blocks" array of [rows, cols] shapes.
inline void write_container(const std::string& path, const std::string& magic, Container c) {
  require(magic.size() == 8, "container magic must be 8 bytes");
  nlohmann::json shapes = nlohmann::json::array();
  for (const Matrix& m : c.blocks) shapes.push_back({m.rows(), m.cols()});
  c.header["blocks"] = shapes;
  const std::string text = c.header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(magic.data(), 8);
  detail::put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Matrix& m : c.blocks) {
    detail::put_doubles(os, m.data(), static_cast<std::size_t>(m.size()));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Container read_container(const std::string& path, const std::string& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::string got(8, '\0');
  is.read(got.data(), 8);
  if (!is || got != magic) throw std::runtime_error("not a " + magic + " file: " + path);
  const std::uint64_t len = detail::get_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("container: truncated header in " + path);
  Container c;
  c.header = nlohmann::json::parse(text);
  for (const auto& shape : c.header.at("blocks")) {
    Matrix m(shape.at(0).get<Index>(), shape.at(1).get<Index>());
    detail::get_doubles(is, m.data(), static_cast<std::size_t>(m.size()));
    c.blocks.push_back(std::move(m));
  }
  return c;
}

}  // namespace fbm::io
