#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfss/error.hpp"

namespace dfss {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// Little-endian append-only byte buffer.
class ByteWriter {
 public:
  template <typename C>
  void bytes(std::span<const C> data) {
    static_assert(sizeof(C) == 1);
    const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
    buf_.insert(buf_.end(), p, p + data.size());
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32s(std::span<const float> v) { raw(v.data(), v.size_bytes()); }

  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader; every overrun is a FormatError naming `what`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  template <typename C>
  void bytes(std::span<C> out) {
    static_assert(sizeof(C) == 1);
    raw(out.data(), out.size());
  }
  std::uint8_t u8() { return read<std::uint8_t>(); }
  std::uint16_t u16() { return read<std::uint16_t>(); }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  void f32s(std::span<float> out) { raw(out.data(), out.size_bytes()); }

  std::size_t position() const { return pos_; }
  void seek(std::size_t pos) {
    if (pos > data_.size()) throw FormatError(what_ + ": offset beyond end of file");
    pos_ = pos;
  }
  void expect_end() const {
    if (pos_ != data_.size()) {
      throw FormatError(what_ + ": " + std::to_string(data_.size() - pos_) +
                        " unexpected trailing bytes");
    }
  }

 private:
  template <typename V>
  V read() {
    V v;
    raw(&v, sizeof v);
    return v;
  }
  void raw(void* out, std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError(what_ + ": truncated file");
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }

  std::span<const std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace dfss
