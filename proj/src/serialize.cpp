#include "ddtcdr/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "ddtcdr/error.hpp"

namespace ddtcdr::io {

static_assert(std::endian::native == std::endian::little,
              "model dumps assume a little-endian host");

namespace {
constexpr char kMagic[4] = {'D', 'D', 'T', 'C'};
// Guards against allocating absurd sizes from a corrupt file.
constexpr std::uint64_t kMaxElements = 1ULL << 32;
}  // namespace

Writer::Writer(std::ostream& os) : os_(os) {}

void Writer::raw(const void* p, std::size_t n) {
  os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os_) throw DataError("write failed");
}

void Writer::header() {
  raw(kMagic, sizeof kMagic);
  const std::uint32_t v = kFormatVersion;
  raw(&v, sizeof v);
}

void Writer::tag(const std::string& t) { str(t); }
void Writer::u64(std::uint64_t v) { raw(&v, sizeof v); }
void Writer::f64(double v) { raw(&v, sizeof v); }

void Writer::str(const std::string& s) {
  u64(s.size());
  raw(s.data(), s.size());
}

void Writer::vec(const Vector& v) {
  u64(v.size());
  raw(v.data(), v.size() * sizeof(double));
}

void Writer::matrix(const Matrix& m) {
  u64(m.rows());
  u64(m.cols());
  raw(m.data().data(), m.size() * sizeof(double));
}

void Writer::layer(const DenseLayer& l) {
  tag("layer");
  u64(static_cast<std::uint64_t>(l.activation));
  matrix(l.weights);
  vec(l.bias);
}

Reader::Reader(std::istream& is) : is_(is) {}

void Reader::raw(void* p, std::size_t n) {
  is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is_) throw DataError("unexpected end of model file");
}

void Reader::header() {
  char magic[4];
  raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("not a model file (bad magic)");
  std::uint32_t v = 0;
  raw(&v, sizeof v);
  if (v != kFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(v));
  }
}

void Reader::expect(const std::string& expected) {
  const std::string got = str();
  if (got != expected) {
    throw DataError("model file: expected section '" + expected + "', found '" + got + "'");
  }
}

std::uint64_t Reader::u64() {
  std::uint64_t v = 0;
  raw(&v, sizeof v);
  return v;
}

double Reader::f64() {
  double v = 0;
  raw(&v, sizeof v);
  return v;
}

std::string Reader::str() {
  const std::uint64_t n = u64();
  if (n > kMaxElements) throw DataError("model file: string length out of range");
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

Vector Reader::vec() {
  const std::uint64_t n = u64();
  if (n > kMaxElements) throw DataError("model file: vector length out of range");
  Vector v(n);
  raw(v.data(), n * sizeof(double));
  return v;
}

Matrix Reader::matrix() {
  const std::uint64_t r = u64();
  const std::uint64_t c = u64();
  if (r > kMaxElements || c > kMaxElements || r * c > kMaxElements) {
    throw DataError("model file: matrix shape out of range");
  }
  std::vector<double> d(r * c);
  raw(d.data(), d.size() * sizeof(double));
  return Matrix(r, c, std::move(d));
}

DenseLayer Reader::layer() {
  expect("layer");
  const std::uint64_t act = u64();
  if (act > static_cast<std::uint64_t>(Activation::relu)) {
    throw DataError("model file: unknown activation " + std::to_string(act));
  }
  Matrix w = matrix();
  Vector b = vec();
  return DenseLayer(std::move(w), std::move(b), static_cast<Activation>(act));
}

}  // namespace ddtcdr::io
