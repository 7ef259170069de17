#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>

namespace sphemu::io {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written verbatim");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path.string()), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path_);
  }

  void magic(const char tag[4]) { raw(tag, 4); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64_span(std::span<const double> v) { raw(v.data(), v.size() * sizeof(double)); }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path)
      : path_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path_);
  }

  void expect_magic(const char tag[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0)
      throw std::runtime_error("bad magic in " + path_ + ", expected " + std::string(tag, 4));
  }

  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  void f64_span(std::span<double> v) { raw(v.data(), v.size() * sizeof(double)); }

  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) throw std::runtime_error("trailing bytes in " + path_);
  }

 private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw std::runtime_error("truncated file: " + path_);
  }

  std::string path_;
  std::ifstream in_;
};

}  // namespace sphemu::io
