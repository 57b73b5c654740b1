#include "coldstart/binary_io.hpp"

#include <cstdio>
#include <cstring>

#include "coldstart/error.hpp"

namespace coldstart {

namespace {
constexpr std::uint64_t kMaxArray = std::uint64_t{1} << 32;
}

void BinaryWriter::u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::i64(std::int64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::f64(double v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }

void BinaryWriter::string(std::string_view s) {
  u64(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::doubles(std::span<const double> values) {
  u64(values.size());
  out_.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void BinaryWriter::raw(std::string_view bytes) {
  out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void BinaryReader::read(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw ArtifactError(source_ + ": truncated file");
  }
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  read(&v, sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read(&v, sizeof v);
  return v;
}

std::int64_t BinaryReader::i64() {
  std::int64_t v;
  read(&v, sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  read(&v, sizeof v);
  return v;
}

std::string BinaryReader::string() {
  const std::uint64_t n = u64();
  if (n > kMaxArray) throw ArtifactError(source_ + ": implausible string length");
  return raw(static_cast<std::size_t>(n));
}

std::vector<double> BinaryReader::doubles() {
  const std::uint64_t n = u64();
  if (n > kMaxArray) throw ArtifactError(source_ + ": implausible array length");
  std::vector<double> v(static_cast<std::size_t>(n));
  read(v.data(), v.size() * sizeof(double));
  return v;
}

void BinaryReader::doubles_into(std::span<double> target) {
  const std::uint64_t n = u64();
  if (n != target.size()) {
    throw ArtifactError(source_ + ": array length " + std::to_string(n) + ", expected " +
                        std::to_string(target.size()));
  }
  read(target.data(), target.size() * sizeof(double));
}

std::string BinaryReader::raw(std::size_t n) {
  std::string s(n, '\0');
  read(s.data(), n);
  return s;
}

void Fnv1a::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= p[i];
    state_ *= 0x100000001b3ULL;
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace coldstart
