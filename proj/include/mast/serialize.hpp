#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mast/tensor.hpp"

namespace mast {

// Layout: "MTSR" | version u32 | rank u32 | extents u64[rank] | f64[numel],
// all little-endian.
inline constexpr std::array<char, 4> kTensorMagic{'M', 'T', 'S', 'R'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("tensor stream truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic.data(), kTensorMagic.size());
  detail::put_le<std::uint32_t>(os, kTensorFormatVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) detail::put_le<std::uint64_t>(os, e);
  for (double v : t.data()) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
}

inline Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size())) throw DataError("tensor stream truncated before magic");
  if (magic != kTensorMagic) throw DataError("bad tensor magic");
  auto version = detail::get_le<std::uint32_t>(is);
  if (version != kTensorFormatVersion) throw DataError("unsupported tensor format version " + std::to_string(version));
  auto rank = detail::get_le<std::uint32_t>(is);
  if (rank > 16) throw DataError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(detail::get_le<std::uint64_t>(is));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
  return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace mast
