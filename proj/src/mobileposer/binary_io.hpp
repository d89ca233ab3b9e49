#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "mobileposer/error.hpp"

namespace mobileposer::bin {

// Little-endian primitives for the on-disk formats.

template <typename T>
T byteswap_if_needed(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <typename T>
void put(std::ostream& os, T value) {
  value = byteswap_if_needed(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_f32(std::ostream& os, double value) { put<float>(os, static_cast<float>(value)); }

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline void put_string(std::ostream& os, std::string_view s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) fail(ErrorCode::kParse, std::string("unexpected end of file reading ") + what);
  return byteswap_if_needed(value);
}

inline double get_f32(std::istream& is, const char* what) { return static_cast<double>(get<float>(is, what)); }

inline void expect_magic(std::istream& is, std::string_view magic, const char* format) {
  std::string buf(magic.size(), '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is || buf != magic) fail(ErrorCode::kParse, std::string("not a ") + format + " file (bad magic)");
}

inline std::string get_string(std::istream& is, const char* what, std::uint32_t max_len = 1u << 24) {
  const auto n = get<std::uint32_t>(is, what);
  if (n > max_len) fail(ErrorCode::kParse, std::string("string too long reading ") + what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) fail(ErrorCode::kParse, std::string("unexpected end of file reading ") + what);
  return s;
}

}  // namespace mobileposer::bin
