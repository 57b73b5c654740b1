#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coldstart {

// Little-endian host layout; artifacts are not meant to cross architectures.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void string(std::string_view s);
  void doubles(std::span<const double> values);  // length-prefixed
  void raw(std::string_view bytes);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string string();
  std::vector<double> doubles();
  // Reads a length-prefixed array that must hold exactly `expected` values.
  void doubles_into(std::span<double> target);
  std::string raw(std::size_t n);

 private:
  void read(void* dst, std::size_t n);

  std::istream& in_;
  std::string source_;
};

// 64-bit FNV-1a, used for dataset and parameter fingerprints.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n);
  void value(double v) { bytes(&v, sizeof v); }
  void value(std::int64_t v) { bytes(&v, sizeof v); }
  void values(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }
  void text(std::string_view s) { bytes(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

}  // namespace coldstart
