#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "expertad/error.hpp"

namespace expertad {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written natively");

class BinaryWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void bytes(const std::string& s) { raw(s.data(), s.size()); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  const std::vector<char>& buffer() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
  }

 private:
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  static BinaryReader load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path + "' for reading");
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return BinaryReader(std::move(buf));
  }

  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  std::vector<double> f64s() {
    const std::uint64_t n = u64();
    require(n <= remaining() / sizeof(double), ErrorKind::io, "binary blob: truncated array");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void raw(void* p, std::size_t n) {
    require(n <= remaining(), ErrorKind::io, "binary blob: unexpected end of data");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace expertad
