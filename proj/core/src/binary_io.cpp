#include "captrack/binary_io.hpp"

#include <zlib.h>

#include <fstream>

#include "captrack/errors.hpp"

namespace captrack::io {

std::uint32_t crc32(std::span<const char> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(data.data());
  std::size_t left = data.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void Writer::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::uint32_t crc = crc32(bytes_);
  out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!out) throw IoError("write failed: " + path.string());
}

Reader::Reader(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  bytes_.resize(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  if (!in.read(bytes_.data(), static_cast<std::streamsize>(bytes_.size()))) throw IoError("read failed: " + path.string());
  if (bytes_.size() < magic.size() + sizeof(std::uint32_t)) throw IoError("truncated file: " + path.string());
  payload_end_ = bytes_.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes_.data() + payload_end_, sizeof(stored));
  if (stored != crc32(std::span<const char>(bytes_.data(), payload_end_)))
    throw ChecksumMismatch("checksum mismatch: " + path.string());
  if (std::string_view(bytes_.data(), magic.size()) != magic) throw IoError("unexpected file type: " + path.string());
  pos_ = magic.size();
}

void Reader::take(void* out, std::size_t n) {
  if (n > remaining()) throw IoError("truncated file");
  std::memcpy(out, bytes_.data() + pos_, n);
  pos_ += n;
}

}  // namespace captrack::io
