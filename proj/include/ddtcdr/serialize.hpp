#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddtcdr/numeric.hpp"

namespace ddtcdr::io {

// Binary dump format shared by every persisted model object:
//   "DDTC" magic, u32 format version, then tagged sections. Numbers are
//   written little-endian in their in-memory byte layout, so a load
//   reproduces every double bit for bit.
inline constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os);

  void header();
  void tag(const std::string& t);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string& s);
  void vec(const Vector& v);
  void matrix(const Matrix& m);
  void layer(const DenseLayer& l);

 private:
  void raw(const void* p, std::size_t n);
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is);

  // Validates magic and version.
  void header();
  // Reads a tag and throws DataError if it differs from `expected`.
  void expect(const std::string& expected);
  std::uint64_t u64();
  double f64();
  std::string str();
  Vector vec();
  Matrix matrix();
  DenseLayer layer();

 private:
  void raw(void* p, std::size_t n);
  std::istream& is_;
};

}  // namespace ddtcdr::io
