#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace captrack::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Appends plain values to a byte buffer; the file is written in one go with
/// a trailing CRC-32 over everything before it.
class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_span(std::span<const T> values) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void reserve(std::size_t n) { bytes_.reserve(n); }

  /// Throws IoError.
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<char> bytes_;
};

/// Reads a whole file and verifies its trailing CRC-32.
class Reader {
 public:
  /// Throws IoError, or ChecksumMismatch when the trailer does not match.
  /// `magic` is checked first so that foreign files fail early.
  Reader(const std::filesystem::path& path, std::string_view magic);

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    take(&v, sizeof(T));
    return v;
  }
  template <typename T>
  void get_span(std::span<T> out) {
    take(out.data(), out.size_bytes());
  }
  std::size_t remaining() const { return payload_end_ - pos_; }

 private:
  void take(void* out, std::size_t n);

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::size_t payload_end_ = 0;
};

std::uint32_t crc32(std::span<const char> data);

}  // namespace captrack::io
