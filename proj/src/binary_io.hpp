#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace diffetm::detail {

// Explicit little-endian encoding independent of host byte order.
class LeWriter {
 public:
  explicit LeWriter(std::ostream& os) : os_(os) {}

  void bytes(const void* data, std::size_t n) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }

  template <typename T>
    requires std::is_integral_v<T>
  void integer(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
    }
    bytes(buf, sizeof(T));
  }

  void u32(std::uint32_t v) { integer(v); }
  void u64(std::uint64_t v) { integer(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& os_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& is) : is_(is) {}

  // Returns false on short read.
  bool bytes(void* data, std::size_t n) {
    is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is_.gcount()) == n;
  }

  template <typename T>
    requires std::is_integral_v<T>
  bool integer(T& out) {
    unsigned char buf[sizeof(T)];
    if (!bytes(buf, sizeof(T))) return false;
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(buf[i]) << (8 * i);
    }
    out = static_cast<T>(u);
    return true;
  }

  bool u32(std::uint32_t& v) { return integer(v); }
  bool u64(std::uint64_t& v) { return integer(v); }
  bool f32(float& v) {
    std::uint32_t u;
    if (!u32(u)) return false;
    v = std::bit_cast<float>(u);
    return true;
  }
  bool f64(double& v) {
    std::uint64_t u;
    if (!u64(u)) return false;
    v = std::bit_cast<double>(u);
    return true;
  }
  bool str(std::string& s, std::uint32_t max_len = 1u << 20) {
    std::uint32_t n;
    if (!u32(n) || n > max_len) return false;
    s.resize(n);
    return bytes(s.data(), n);
  }

  bool at_eof() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
};

}  // namespace diffetm::detail
