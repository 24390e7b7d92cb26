#pragma once

// Little-endian primitive encoding for the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "homwarp/error.hpp"

namespace homwarp::binary {

template <typename U>
  requires std::is_unsigned_v<U>
void put_uint(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

inline void put_f64(std::ostream& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_bytes(std::ostream& out, std::span<const std::uint8_t> bytes) {
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Reader that raises `kind` on short reads.
class Reader {
 public:
  Reader(std::istream& in, ErrorKind kind, std::string what) : in_(in), kind_(kind), what_(std::move(what)) {}

  void bytes(std::span<std::uint8_t> dst) {
    in_.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size()));
    if (in_.gcount() != static_cast<std::streamsize>(dst.size())) fail("truncated");
  }

  template <typename U>
    requires std::is_unsigned_v<U>
  U uint() {
    unsigned char b[sizeof(U)];
    bytes(std::span<std::uint8_t>(b, sizeof(U)));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
  }

  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }

  [[noreturn]] void fail(const std::string& why) const { throw Error(kind_, what_ + ": " + why); }

  [[nodiscard]] bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  ErrorKind kind_;
  std::string what_;
};

}  // namespace homwarp::binary
