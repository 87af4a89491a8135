#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "tuap/errors.hpp"

namespace tuap::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  void magic(std::string_view m) { raw(m.data(), m.size()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  /// Values narrowed to float32.
  template <typename T>
  void f32_array(std::span<const T> values) {
    for (auto v : values) f32(static_cast<float>(v));
  }

  const Bytes& bytes() const noexcept { return bytes_; }
  Bytes take() noexcept { return std::move(bytes_); }

 private:
  void raw(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  Bytes bytes_;
};

/// Bounds-checked little-endian reader. Every failure reports the byte offset.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string kind) : bytes_(bytes), kind_(std::move(kind)) {}

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
      fail("bad magic, expected '" + std::string(m) + "'");
    pos_ += m.size();
  }
  std::uint8_t u8() {
    need(1, "u8");
    return bytes_[pos_++];
  }
  std::uint32_t u32() { return scalar<std::uint32_t>("u32"); }
  std::uint64_t u64() { return scalar<std::uint64_t>("u64"); }
  float f32() { return scalar<float>("f32"); }
  double f64() { return scalar<double>("f64"); }
  std::string str() {
    auto n = u32();
    need(n, "string body");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> f32_array(std::size_t n) {
    if (n > remaining() / 4) fail("truncated float block: need " + std::to_string(n) + " floats");
    std::vector<double> out(n);
    for (auto& v : out) v = f32();
    return out;
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void expect_end() const {
    if (pos_ != bytes_.size()) fail(std::to_string(remaining()) + " trailing bytes");
  }

  [[noreturn]] void fail(const std::string& what) const { throw format_error(kind_ + ": " + what, pos_); }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) fail(std::string("truncated while reading ") + what);
  }
  template <typename T>
  T scalar(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::string kind_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename into '" + path.string() + "': " + ec.message());
  }
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace tuap::io
