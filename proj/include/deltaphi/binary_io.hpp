#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deltaphi/error.hpp"

namespace dphi::io {

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Reads little-endian scalars, throwing ParseError with the current offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void expect_magic(std::string_view tag) {
    need(tag.size(), "truncated magic");
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0)
      throw ParseError("bad magic, expected \"" + std::string(tag) + "\"", pos_);
    pos_ += tag.size();
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  void f64s(std::span<double> out, const char* what) {
    need(8 * out.size(), what);
    for (double& v : out) v = f64(what);
  }
  void expect_end() {
    if (pos_ != bytes_.size()) throw ParseError("trailing bytes after payload", pos_);
  }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) throw ParseError(std::string("truncated input: ") + what, pos_);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dphi::io
