// Little-endian binary primitives shared by the embedding and model files.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ntee::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw FormatError("write failed");
}

inline void read_bytes(std::istream& in, void* p, std::size_t n, std::string_view what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("truncated file while reading " + std::string(what));
}

template <class T>
void write_scalar(std::ostream& out, T v) {
  const T le = to_little(v);
  write_bytes(out, &le, sizeof(T));
}

template <class T>
T read_scalar(std::istream& in, std::string_view what) {
  T v;
  read_bytes(in, &v, sizeof(T), what);
  return to_little(v);
}

inline void write_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_scalar(out, v);
}

inline void read_doubles(std::istream& in, std::span<double> values, std::string_view what) {
  for (double& v : values) v = read_scalar<double>(in, what);
}

inline void write_magic(std::ostream& out, std::string_view magic) { write_bytes(out, magic.data(), magic.size()); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  read_bytes(in, got.data(), got.size(), "magic");
  if (got != magic) throw FormatError("bad magic: expected '" + std::string(magic) + "'");
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_scalar<std::uint64_t>(out, s.size());
  write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in, std::string_view what) {
  const auto n = read_scalar<std::uint64_t>(in, what);
  if (n > (std::uint64_t{1} << 40)) throw FormatError("implausible string length in " + std::string(what));
  std::string s(n, '\0');
  read_bytes(in, s.data(), s.size(), what);
  return s;
}

}  // namespace ntee::io
