#pragma once

// Little-endian byte buffers for the GXC1 / GXP1 / GXG1 formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gxc/error.hpp"

namespace gxc::detail {

class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }

  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  /// JSON trailer followed by its u64 byte length.
  void trailer(std::string_view json) {
    bytes(json);
    u64(json.size());
  }

  const std::string& buffer() const noexcept { return buf_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context) : data_(data), context_(std::move(context)) {}

  void expect_magic(std::string_view m) {
    if (take(m.size()) != m) fail("bad magic, expected " + std::string(m));
  }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }

  void f32s(std::span<float> out) {
    if (remaining() / 4 < out.size()) fail("truncated tensor data");
    for (auto& v : out) v = f32();
  }

  std::string_view take(std::size_t n) {
    if (n > remaining()) fail("truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  [[noreturn]] void fail(const std::string& what) const { throw Error(Errc::FormatError, context_ + ": " + what); }

 private:
  template <typename T>
  T get_le() {
    const auto s = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

/// Splits off the JSON trailer; returns (body, json).
std::pair<std::string_view, std::string_view> split_trailer(std::string_view file, const std::string& context);

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames over the target.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace gxc::detail
