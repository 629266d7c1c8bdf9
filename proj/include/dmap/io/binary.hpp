#pragma once

#include <dmap/error.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dmap::io {

/// Little-endian byte sink.
class ByteWriter {
public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u32(std::size_t v) {
    if (v > 0xffffffffu)
      throw InvalidArgument("ByteWriter: value does not fit in 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i)
      buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
  }
  void f64s(const std::vector<double>& vs) {
    for (double v : vs)
      f64(v);
  }

  const std::string& data() const { return buf_; }

private:
  std::string buf_;
};

/// Bounds-checked little-endian reader over a byte buffer.
class ByteReader {
public:
  explicit ByteReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  void expect(std::string_view magic) {
    need(magic.size());
    if (data_.substr(pos_, magic.size()) != magic)
      throw ValidationError(context_ + ": bad magic, expected '" + std::string(magic) + "'");
    pos_ += magic.size();
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> out(n);
    for (double& v : out)
      v = f64();
    return out;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  void expect_end() const {
    if (!at_end())
      throw ValidationError(context_ + ": trailing bytes");
  }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw ValidationError(context_ + ": truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out)
    throw IoError("failed writing '" + path + "'");
}

} // namespace dmap::io
